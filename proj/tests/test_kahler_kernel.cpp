#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "acyl/kahler_kernel.hpp"

using namespace acyl;

namespace {

// random smooth band-limited potential on a full grid
ScalarField random_potential(const CylinderGrid& g, std::mt19937& rng, double amp) {
    std::uniform_real_distribution<double> U(-1, 1);
    double c[6];
    for (double& v : c) v = U(rng);
    ScalarField u(g, Symmetry::full);
    u.fill([&](double t, double th, double x, double y) {
        return amp * std::exp(-0.3 * t * t) *
               (c[0] + c[1] * std::cos(th) + c[2] * std::sin(2 * kPi * x) + c[3] * std::cos(th + 2 * kPi * y) +
                c[4] * std::sin(2 * kPi * (x - y)) + c[5] * std::cos(2 * th - 2 * kPi * x));
    });
    return u;
}

void expect_all(const ScalarField& f, double v, double tol = 0.0) {
    for (double x : f.data()) EXPECT_NEAR(x, v, tol);
}

}  // namespace

TEST(Iddbar, Examples) {
    auto g = make_grid(-2, 2, 41, 8, 4, 4, false);
    ScalarField u(g, Symmetry::t_only);
    u.fill([](double t, double, double, double) { return t * t; });
    auto w = iddbar(u);
    for (std::size_t n = 0; n < w.size(); ++n) {
        EXPECT_NEAR(w.h11[n], 0.5, 1e-12);
        EXPECT_EQ(std::abs(w.h12[n]), 0.0);
        EXPECT_EQ(w.h22[n], 0.0);
    }
    // |z2|^2 has u_xx = u_yy = 2 and no mixed derivatives
    auto h = complex_hessian(0, 0, 2, 2, 0, 0, 0, 0);
    EXPECT_DOUBLE_EQ(h.h22, 1.0);
    ScalarField c(g, Symmetry::full, 3.0);
    auto z = iddbar(c);
    for (std::size_t n = 0; n < z.size(); ++n) EXPECT_EQ(std::abs(z.h11[n]) + std::abs(z.h12[n]) + std::abs(z.h22[n]), 0.0);
}

TEST(Iddbar, MixedTermSymbolic) {
    // u = cos(theta + 2 pi x) e^{-t}: d1 dbar2 u evaluated by hand
    auto g = make_grid(0, 1, 201, 8, 8, 1, true);
    ScalarField u(g, Symmetry::full);
    u.fill([](double t, double th, double x, double) { return std::exp(-t) * std::cos(th + 2 * kPi * x); });
    auto w = iddbar(u);
    double err = 0;
    for (int i = 1; i < g.n_t - 1; ++i)
        for (int j = 0; j < 8; ++j)
            for (int k = 0; k < 8; ++k) {
                double t = g.t(i), ph = g.theta(j) + 2 * kPi * g.x(k), e = std::exp(-t);
                // u_tx = 2 pi e sin, u_thx = -2 pi e cos, u_ty = u_thy = 0
                cplx exact = 0.25 * cplx(2 * kPi * e * std::sin(ph), 2 * kPi * e * std::cos(ph));
                err = std::max(err, std::abs(w.h12(i, j, k, 0) - exact));
            }
    EXPECT_LT(err, 1e-3);
}

TEST(TopPower, Normalization) {
    auto g = make_grid(0, 1, 5, 2, 2, 2, true);
    // dt dtheta + 2 dx dy squares to 4 dt dtheta dx dy
    auto w = constant_form(g, 0.5, 0.0, 1.0);
    expect_all(top_power(w), 4.0);
    expect_all(top_power(constant_form(g, 1, 0, 1)), 8.0);
    expect_all(top_power(constant_form(g, 1, 1, 1)), 0.0);
    expect_all(holomorphic_volume_density(g), 4.0);
    expect_all(holomorphic_volume_density(g, cplx(0, 3)), 36.0);
    // lambda dt dtheta + 2b dx dy matches Omega iff lambda b = 1
    for (double lam : {0.5, 1.0, 4.0}) {
        double b = 1.0 / lam;
        auto f = constant_form(g, lam / 2, 0.0, b);
        EXPECT_NEAR(top_power(f)[0], holomorphic_volume_density(g)[0], 1e-14);
    }
}

TEST(TopPower, AgreesWithRealWedge) {
    // oracle: expand omega = sum of real 2-forms and take the Pfaffian of the 4x4 antisymmetric matrix
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        double a = 1 + U(rng), c = 1 + U(rng);
        cplx b(U(rng), U(rng));
        // omega(X, Y) = -Im H(X, Y) type expansion in real coordinates (t, theta, x, y)
        // i h dz_j ^ dzbar_k contributes coefficients computed from dz ^ dzbar = -2i dreal ^ dimag
        double W[4][4] = {};
        auto add = [&](int p, int q, double v) { W[p][q] += v, W[q][p] -= v; };
        add(0, 1, 2 * a);  // i a dz1 dz1bar = 2a dt dtheta
        add(2, 3, 2 * c);
        // i b dz1 ^ dz2bar + i conj(b) dz2 ^ dz1bar, expanded
        // dz1 ^ dz2bar = (dt + i dth)(dx - i dy) = dt dx - i dt dy + i dth dx + dth dy
        cplx idz[4][4] = {};
        auto addc = [&](int p, int q, cplx v) { idz[p][q] += v, idz[q][p] -= v; };
        cplx ib = cplx(0, 1) * b;
        addc(0, 2, ib), addc(0, 3, -cplx(0, 1) * ib), addc(1, 2, cplx(0, 1) * ib), addc(1, 3, ib);
        for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q) W[p][q] += 2 * std::real(idz[p][q]);
        double pf = W[0][1] * W[2][3] - W[0][2] * W[1][3] + W[0][3] * W[1][2];
        auto g = make_grid(0, 1, 2, 1, 1, 1, true);
        EXPECT_NEAR(top_power(constant_form(g, a, b, c))[0], 2 * pf, 1e-12);
    }
}

TEST(Positivity, Spectrum) {
    auto g = make_grid(0, 1, 3, 1, 1, 1, true);
    EXPECT_DOUBLE_EQ(positivity_spectrum(constant_form(g, 0.5, 0, 1)).global_min, 0.5);
    EXPECT_NEAR(positivity_spectrum(constant_form(g, 1, 1, 1)).global_min, 0.0, 1e-15);
    EXPECT_LT(positivity_spectrum(constant_form(g, -1, 0, 1)).global_min, 0);
}

TEST(MaOperator, Examples) {
    auto g = make_grid(-2, 2, 41, 4, 2, 2, false);
    auto w = constant_form(g, 0.5, 0, 1);
    ScalarField zero(g, Symmetry::t_only);
    expect_all(ma_operator(w, zero), 0.0);
    ScalarField u(g, Symmetry::t_only);
    u.fill([](double t, double, double, double) { return t * t; });
    expect_all(ma_operator(w, u), std::log(2.0), 1e-12);
    u.fill([](double t, double, double, double) { return -t * t; });
    try {
        ma_operator(w, u);
        FAIL() << "expected a positivity error";
    } catch (const PositivityError& e) {
        EXPECT_NEAR(e.min_eigenvalue, 0.0, 1e-12);
    }
}

TEST(MaOperator, CocycleAndDensityIdentity) {
    std::mt19937 rng(2);
    auto g = make_grid(-3, 3, 61, 8, 4, 4, false);
    auto w = constant_form(g, 0.5, cplx(0.1, -0.05), 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        auto u = random_potential(g, rng, 0.01);
        auto F = ma_operator(w, u);
        auto wu = w + iddbar(u);
        auto back = ma_operator(wu, -1.0 * u);
        double cyc = 0;
        for (std::size_t n = 0; n < F.size(); ++n) cyc = std::max(cyc, std::abs(F[n] + back[n]));
        EXPECT_LT(cyc, 1e-10);
        auto top_u = top_power(wu), top0 = top_power(w.expanded(Symmetry::full));
        double rel = 0;
        for (std::size_t n = 0; n < F.size(); ++n)
            rel = std::max(rel, std::abs(top_u[n] - std::exp(F[n]) * top0[n]) / std::abs(top_u[n]));
        EXPECT_LT(rel, 1e-12);
    }
}

TEST(Linearize, Examples) {
    auto g = make_grid(0, 4, 401, 16, 1, 1, true);
    auto L = linearize(constant_form(g, 0.5, 0, 1));
    ScalarField v(g, Symmetry::t_theta);
    v.fill([](double t, double th, double, double) { return std::exp(-t) * std::cos(th); });
    auto Lv = L.apply(v);
    double m = 0;
    for (int i = 1; i < g.n_t - 1; ++i)
        for (int j = 0; j < 16; ++j) m = std::max(m, std::abs(Lv(i, j, 0, 0)));
    EXPECT_LT(m, 1e-4);
    ScalarField c(g, Symmetry::t_only, 2.0);
    EXPECT_EQ(sup_abs(L.apply(c)), 0.0);
}

TEST(Linearize, FiniteDifferenceOrder) {
    std::mt19937 rng(4);
    auto g = make_grid(-3, 3, 41, 8, 4, 4, false);
    auto w = constant_form(g, 0.5, cplx(0.05, 0.02), 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        auto u = random_potential(g, rng, 0.01);
        auto v = random_potential(g, rng, 0.01);
        auto F0 = ma_operator(w, u);
        auto Lv = linearize(w + iddbar(u)).apply(v);
        std::vector<double> errs;
        for (double eps : {1e-1, 5e-2, 2.5e-2}) {
            ScalarField up = u;
            for (std::size_t n = 0; n < up.size(); ++n) up[n] += eps * v[n];
            auto F1 = ma_operator(w, up);
            double e = 0;
            for (std::size_t n = 0; n < F0.size(); ++n) e = std::max(e, std::abs(F1[n] - F0[n] - eps * Lv[n]));
            errs.push_back(e);
        }
        double order = std::log2(errs[1] / errs[2]);
        EXPECT_GE(order, 1.9) << errs[0] << " " << errs[1] << " " << errs[2];
    }
}

TEST(Form, Closedness) {
    std::mt19937 rng(6);
    double prev = 0;
    for (int n : {41, 81, 161}) {
        auto g = make_grid(-3, 3, n, 8, 4, 4, false);
        std::mt19937 r2(6);
        auto u = random_potential(g, r2, 1.0);
        double d = closedness_defect(iddbar(u));
        if (prev > 0) EXPECT_GT(prev / d, 3.0);
        prev = d;
    }
    // t-independent data: spectral accuracy
    auto g = make_grid(0, 1, 9, 8, 8, 8, true);
    ScalarField u(g, Symmetry::full);
    u.fill([](double, double th, double x, double y) { return std::cos(th + 2 * kPi * x) * std::sin(2 * kPi * y); });
    EXPECT_LT(closedness_defect(iddbar(u)), 1e-10);
}

TEST(Form, SerializationRoundTrip) {
    std::mt19937 rng(8);
    auto g = make_grid(-1, 1, 9, 4, 2, 2, false);
    auto w = iddbar(random_potential(g, rng, 1.0));
    std::stringstream ss;
    write_form(ss, w);
    auto b = read_form(ss, &g);
    for (std::size_t n = 0; n < w.size(); ++n) {
        EXPECT_EQ(b.h11[n], w.h11[n]);
        EXPECT_EQ(b.h12[n], w.h12[n]);
        EXPECT_EQ(b.h22[n], w.h22[n]);
    }
}
