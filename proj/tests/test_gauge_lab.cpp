#include <gtest/gtest.h>

#include "acyl/gauge_lab.hpp"

using namespace acyl;

namespace {

DiffeoSpec planted_spec(double amp = 0.05) { return example_diffeo(amp); }

GaugePlant sample_plant(const CylinderGrid& g, double d_amp = 0.02) { return example_gauge_plant(g, d_amp); }

double max_diff(const std::vector<Mat4>& a, const std::vector<Mat4>& b) { return max_entry_diff(a, b); }

}  // namespace

TEST(PerturbedStructure, IdentityAndRates) {
    auto g = make_grid(1, 9, 161, 8, 4, 2, true);
    auto id = make_perturbed_structure(g, DiffeoSpec{}, 0.5);
    for (const auto& m : id.J.m) EXPECT_TRUE(m == j_infinity());
    EXPECT_EQ(id.deviation_rate, kInf);

    DiffeoSpec one;
    one.modes.push_back({2, 0.1, 1.0, 1, 0, 0, 0.0});
    auto ps = make_perturbed_structure(g, one, 0.9);
    EXPECT_NEAR(ps.deviation_rate, 1.0, 0.05);
    EXPECT_LE(ps.square_defect, 1e-12);
    // the pointwise structure maps the pushed-forward frame correctly
    Vec4 p(2.0, 0.4, 0.3, 0.7);
    Mat4 d = one.jacobian(p);
    EXPECT_LE((d * ps.at(p) - j_infinity() * d).norm(), 1e-14);
    EXPECT_THROW(make_perturbed_structure(g, one, 1.5), PreconditionError);

    DiffeoSpec big;
    big.modes.push_back({2, 5.0, 1.0, 0, 1, 0, 0.0});
    EXPECT_THROW(make_perturbed_structure(g, big, 0.5), PreconditionError);
}

TEST(Cylinders, PlantedImagesRecovered) {
    auto g = make_grid(3, 12, 901, 16, 4, 4, true);
    auto ps = make_perturbed_structure(g, planted_spec(), 1.0);
    auto fam = find_holomorphic_cylinders(ps);
    EXPECT_LE(fam.max_residual, 1e-8);
    EXPECT_LE(fam.iterations, 20);
    EXPECT_LT(fam.contraction, 1.0);
    EXPECT_LE(image_deviation(ps, fam), 1e-6);
    EXPECT_GE(fam.displacement_rate, 1.5 - 0.05);
}

TEST(Cylinders, ContractionImprovesWithT0) {
    double prev = 1.0;
    for (double t0 : {1.0, 2.0, 3.0}) {
        auto g = make_grid(t0, t0 + 9, 451, 16, 2, 2, true);
        auto fam = find_holomorphic_cylinders(make_perturbed_structure(g, planted_spec(0.1), 1.0));
        EXPECT_LT(fam.contraction, prev) << t0;
        prev = fam.contraction;
    }
}

TEST(Cylinders, IdentityAndRelabeling) {
    auto g = make_grid(3, 9, 301, 8, 2, 2, true);
    auto fam0 = find_holomorphic_cylinders(make_perturbed_structure(g, DiffeoSpec{}, 0.5));
    EXPECT_EQ(fam0.iterations, 0);
    for (auto& v : fam0.V) EXPECT_EQ(sup_abs(v), 0.0);
    // relabeling the torus points permutes the per-point residuals
    auto s = planted_spec();
    auto fam = find_holomorphic_cylinders(make_perturbed_structure(g, s, 1.0));
    for (auto& m : s.modes) m.phase += 2 * kPi * (m.torus_x * 0.5);
    auto famr = find_holomorphic_cylinders(make_perturbed_structure(g, s, 1.0));
    ASSERT_EQ(fam.residual.size(), 4u);
    EXPECT_NEAR(fam.residual[0], famr.residual[2], 1e-15);
    EXPECT_NEAR(fam.residual[3], famr.residual[1], 1e-15);
}

TEST(Torsion, PlantedGaugeAndBrokenStructure) {
    auto g = make_grid(2, 12, 1001, 16, 8, 4, true);
    auto plant = sample_plant(g);
    for (std::size_t n = 0; n < plant.Jt.m.size(); n += 97) {
        EXPECT_LE((plant.Jt.m[n] * plant.Jt.m[n] + Mat4::Identity()).norm(), 1e-13);
        EXPECT_LE((plant.Jt.m[n].col(0) - Vec4(0, 1, 0, 0)).norm(), 1e-14);
    }
    EXPECT_LE(sup_abs(torsion_residual(plant.Jt)), 1e-8);
    const double eps = 1e-3;
    EndoField broken = plant.Jt;
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j)
            for (int k = 0; k < g.n_x; ++k)
                for (int l = 0; l < g.n_y; ++l) broken(i, j, k, l)(2, 3) += eps * std::exp(-g.t(i)) * std::cos(g.theta(j));
    const double r = sup_abs(torsion_residual(broken));
    EXPECT_GT(r, 0.1 * eps * std::exp(-2.0));
    EXPECT_LT(r, 10 * eps);
}

TEST(Torsion, RecoveredGaugeConvergesSecondOrder) {
    // the box scheme fixes f_x to O(h^2), so the gauge-transported torsion converges at that order
    double prev = 0;
    for (int n : {451, 901}) {
        auto g = make_grid(3, 12, n, 16, 8, 8, true);
        auto ps = make_perturbed_structure(g, planted_spec(), 1.0);
        auto fam = find_holomorphic_cylinders(ps);
        auto Jt = gauge_structure(ps, fam);
        double col = 0;
        for (const auto& m : Jt.m) col = std::max(col, (m.col(0) - Vec4(0, 1, 0, 0)).norm());
        const double tor = sup_abs(torsion_residual(Jt));
        EXPECT_LE(col, 1e-3);
        EXPECT_LE(tor, 2e-4);
        if (prev > 0) EXPECT_GT(prev / tor, 3.0) << prev << " " << tor;
        prev = tor;
    }
}

TEST(Expansion, PlantedCoefficientAndRemainder) {
    auto g = make_grid(2, 12, 1001, 16, 8, 4, true);
    auto plant = sample_plant(g);
    auto K = deviation(plant.Jt);
    auto rep = extract_expansion(K, 0.9, 6.0, 10.0);
    EXPECT_LE(max_diff(rep.K1, plant.K1), 1e-6);
    EXPECT_GE(rep.remainder_slope, 1.95);
    EXPECT_LE(rep.remainder_slope, 2.05);
    EXPECT_TRUE(rep.passed);
    // Cauchy integrals at three radii agree
    auto at = [&](double t) { return cauchy_coefficient(K, static_cast<int>(std::lround((t - g.t_min) / g.ht()))); };
    auto a = at(6), b = at(8), c = at(10);
    EXPECT_LE(max_diff(a, b), 1e-6);
    EXPECT_LE(max_diff(b, c), 1e-6);
    // refined torus grid reproduces the coarse coefficients at shared points
    auto fine = make_grid(2, 12, 1001, 16, 16, 4, true);
    auto repf = extract_expansion(deviation(sample_plant(fine).Jt), 0.9, 6.0, 10.0);
    for (int k = 0; k < g.n_x; ++k)
        for (int l = 0; l < g.n_y; ++l)
            EXPECT_LE((repf.K1[(2 * k) * 4 + l] - rep.K1[k * 4 + l]).norm(), 1e-9);
}

TEST(Expansion, InsufficientDecay) {
    auto g = make_grid(2, 12, 501, 8, 2, 2, true);
    EndoField K(g);
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) K(i, j, k, l)(2, 3) = std::exp(-0.5 * g.t(i));
    EXPECT_THROW(extract_expansion(K, 0.5, 4, 9), PreconditionError);
}

TEST(Kappa, HolomorphicAcceptedAntiRejected) {
    auto g = make_grid(1, 9, 801, 16, 1, 1, true);
    Mat4 calJ = Mat4::Zero();
    calJ(1, 0) = 1, calJ(0, 1) = -1, calJ(3, 2) = 1, calJ(2, 3) = -1;
    Vec4 c(0.3, -0.2, 0.5, 0.1);
    auto make = [&](int sign) {
        std::array<ScalarField, 4> kap;
        for (auto& f : kap) f = ScalarField(g, Symmetry::t_theta);
        for (int i = 0; i < g.n_t; ++i)
            for (int j = 0; j < g.n_theta; ++j) {
                const double e = std::exp(-g.t(i)), th = g.theta(j);
                Vec4 v = e * (std::cos(th) * c - sign * std::sin(th) * calJ * c);
                for (int q = 0; q < 4; ++q) kap[q](i, j, 0, 0) = v[q];
            }
        return kap;
    };
    auto rep = kappa_regularity_check(make(1), calJ);
    EXPECT_TRUE(rep.passed);
    EXPECT_LE(rep.max_negative_coefficient, 1e-8);
    EXPECT_NEAR(rep.slope, 1.0, 0.05);
    EXPECT_THROW(kappa_regularity_check(make(-1), calJ), PreconditionError);
}

TEST(DdbarLemma, RadialRoundTrip) {
    auto lg = make_lemma_grid(0, 24, 96, 8, 4, 4);
    auto xi0 = lemma_fill<double>(lg, [](double t, double, double, double) { return std::exp(-2 * t); });
    auto eta = lemma_form(lg, xi0);
    auto rep = ddbar_lemma_solve(lg, eta, 0.5);
    EXPECT_LE(rep.residual, 1e-8);
    EXPECT_GE(rep.xi_slope, 0.5 - 0.05);
    EXPECT_GE(rep.dxi_slope - 1.0, 0.5 - 1.0 - 0.05);
}

TEST(DdbarLemma, GeneralRoundTrip) {
    auto lg = make_lemma_grid(0, 24, 128, 8, 4, 4);
    auto xi0 = lemma_fill<double>(lg, [](double t, double th, double x, double y) {
        return std::exp(-2 * t) * (1 + 0.3 * std::cos(th)) + std::exp(-1.5 * t) * std::cos(2 * kPi * x) +
               0.5 * std::exp(-1.2 * t) * std::sin(th + 2 * kPi * y);
    });
    auto eta = lemma_form(lg, xi0);
    auto rep = ddbar_lemma_solve(lg, eta, 0.5);
    EXPECT_LE(rep.residual, 1e-8);
    EXPECT_LE(rep.closedness, 1e-9);
    EXPECT_GE(rep.xi_slope, 0.5 - 0.05);
    EXPECT_GE(rep.dxi_slope, 0.5 - 0.05);
}

TEST(DdbarLemma, Obstructions) {
    auto lg = make_lemma_grid(0, 24, 64, 8, 4, 4);
    auto zero = lemma_fill<double>(lg, [](double, double, double, double) { return 0.0; });
    auto vert = lemma_fill<double>(lg, [](double t, double, double, double) { return std::exp(-t); });
    Form11Field eta(zero, to_complex(zero), vert);
    try {
        ddbar_lemma_solve(lg, eta, 0.5);
        FAIL() << "expected obstruction";
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("fibre mean"), std::string::npos);
    }
    auto h11 = lemma_fill<double>(lg, [](double t, double, double x, double) { return std::exp(-t) * std::cos(2 * kPi * x); });
    Form11Field open(h11, to_complex(zero), zero);
    EXPECT_THROW(ddbar_lemma_solve(lg, open, 0.5), PreconditionError);
    EXPECT_THROW(ddbar_lemma_solve(lg, eta, 1.0), PreconditionError);
}
