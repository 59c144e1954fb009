#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "acyl/field_core.hpp"

using namespace acyl;

TEST(Grid, SpacingFromParameters) {
    auto g = make_grid(0, 10, 101, 64, 8, 8, true);
    EXPECT_DOUBLE_EQ(g.ht(), 0.1);
    auto b = make_grid(-12, 12, 481, 64, 16, 16, false);
    EXPECT_DOUBLE_EQ(b.ht(), 0.05);
    EXPECT_DOUBLE_EQ(b.t(480), 12.0);
}

TEST(Grid, RejectsDegenerateInput) {
    EXPECT_THROW(make_grid(0, 0, 101, 8, 8, 8, true), PreconditionError);
    EXPECT_THROW(make_grid(0, 1, 1, 8, 8, 8, true), PreconditionError);
    EXPECT_THROW(make_grid(0, 1, 10, 6, 8, 8, true), PreconditionError);
}

TEST(Grid, DiskCoordinate) {
    auto g = make_grid(0, 2, 3, 4, 1, 1, true);
    auto w = g.w(2, 1);
    EXPECT_NEAR(std::abs(w), std::exp(-2.0), 1e-15);
    EXPECT_NEAR(std::arg(w), -kPi / 2, 1e-14);
}

TEST(Field, ReducedStorage) {
    auto g = make_grid(0, 1, 5, 8, 4, 2, true);
    ScalarField a(g, Symmetry::t_only), b(g, Symmetry::t_x), c(g, Symmetry::full);
    EXPECT_EQ(a.size(), 5u);
    EXPECT_EQ(b.size(), 20u);
    EXPECT_EQ(c.size(), 5u * 8 * 4 * 2);
    a.fill([](double t, double, double, double) { return t; });
    b.fill([](double, double, double x, double) { return x; });
    auto s = a + b;
    EXPECT_EQ(s.symmetry(), Symmetry::t_x);
    EXPECT_DOUBLE_EQ(s(4, 0, 2, 0), 1.0 + 0.5);
}

TEST(Derivative, SpectralExactOnFourierModes) {
    auto g = make_grid(0, 1, 4, 16, 8, 8, true);
    for (int k = 1; k < 8; ++k) {
        ComplexField f(g, Symmetry::t_theta);
        f.fill([k](double, double th, double, double) { return std::exp(cplx(0, k * th)); });
        auto d = derivative(f, Axis::theta, 1);
        double err = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 16; ++j) err = std::max(err, std::abs(d(i, j, 0, 0) - cplx(0, k) * f(i, j, 0, 0)));
        EXPECT_LT(err, 1e-12) << "k=" << k;
    }
    ScalarField u(g, Symmetry::full);
    u.fill([](double, double, double x, double y) { return std::sin(2 * kPi * (x + 2 * y)); });
    auto uyy = derivative(u, Axis::y, 2);
    double err = 0;
    for (std::size_t n = 0; n < u.size(); ++n) err = std::max(err, std::abs(uyy[n] + 16 * kPi * kPi * u[n]));
    EXPECT_LT(err, 1e-10);
}

TEST(Derivative, SecondOrderInT) {
    double prev = 0;
    for (int n : {41, 81, 161}) {
        auto g = make_grid(0, 2, n, 1, 1, 1, true);
        ScalarField u(g, Symmetry::t_only);
        u.fill([](double t, double, double, double) { return std::sin(t); });
        auto d2 = derivative(u, Axis::t, 2);
        double err = 0;
        for (int i = 0; i < n; ++i) err = std::max(err, std::abs(d2[i] + std::sin(g.t(i))));
        if (prev > 0) EXPECT_GT(prev / err, 3.5);
        prev = err;
    }
}

TEST(WeightedNorm, Examples) {
    auto g = make_grid(0, 10, 1001, 1, 1, 1, true);
    ScalarField u(g, Symmetry::t_only);
    u.fill([](double t, double, double, double) { return std::exp(-t); });
    EXPECT_NEAR(weighted_sup_norm(u, 1.0, 0).value, 1.0, 1e-14);
    u.fill([](double t, double, double, double) { return std::exp(-2 * t); });
    EXPECT_NEAR(weighted_sup_norm(u, 1.0, 0).value, 1.0, 1e-14);
    u.fill([](double t, double, double, double) { return t * std::exp(-t); });
    // oracle: maximize t e^{-t/2} on the sample set
    double oracle = 0;
    for (int i = 0; i < g.n_t; ++i) oracle = std::max(oracle, g.t(i) * std::exp(-0.5 * g.t(i)));
    auto rep = weighted_sup_norm(u, 0.5, 0);
    EXPECT_DOUBLE_EQ(rep.value, oracle);
    EXPECT_NEAR(rep.value, 2.0 / std::exp(1.0), 1e-6);
    EXPECT_THROW(weighted_sup_norm(u, 0.5, 3), PreconditionError);
}

TEST(WeightedNorm, MonotoneInWeight) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-1, 1);
    auto g = make_grid(0, 6, 61, 8, 1, 1, true);
    for (int trial = 0; trial < 20; ++trial) {
        ScalarField u(g, Symmetry::t_theta);
        double a = U(rng), b = U(rng), r = 1 + U(rng);
        u.fill([&](double t, double th, double, double) { return (a + b * std::cos(th)) * std::exp(-r * t); });
        double d1 = 0.2 + 0.3 * (U(rng) + 1), d2 = d1 + 0.5;
        for (int k = 0; k <= 2; ++k)
            EXPECT_LE(weighted_sup_norm(u, d1, k).value, weighted_sup_norm(u, d2, k).value);
    }
}

TEST(DecayFit, ExactExponentials) {
    auto g = make_grid(0, 12, 241, 8, 1, 1, true);
    ScalarField u(g, Symmetry::t_only);
    u.fill([](double t, double, double, double) { return std::exp(-0.7 * t); });
    EXPECT_NEAR(fit_decay_rate(u, 0, 12).rate, 0.7, 1e-6);
    ScalarField v(g, Symmetry::t_theta);
    v.fill([](double t, double th, double, double) { return std::exp(-t) * std::cos(th); });
    EXPECT_NEAR(fit_decay_rate(v, 0, 12).rate, 1.0, 1e-6);
    u.fill([](double t, double, double, double) { return std::exp(-0.3 * t) + 0.5 * std::exp(-1.2 * t); });
    double r = fit_decay_rate(u, 8, 12).rate;
    EXPECT_GE(r, 0.295);
    EXPECT_LE(r, 0.305);
    ScalarField z(g, Symmetry::t_only);
    EXPECT_EQ(fit_decay_rate(z, 0, 12).rate, kInf);
}

TEST(DecayFit, PlantedRatesOnWindowsOfLengthFour) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> D(0.1, 3.0), P(0, 2 * kPi);
    auto g = make_grid(0, 8, 161, 16, 1, 1, true);
    for (int trial = 0; trial < 25; ++trial) {
        double d = D(rng), ph = P(rng);
        ScalarField u(g, Symmetry::t_theta);
        u.fill([&](double t, double th, double, double) { return std::exp(-d * t) * (2 + std::sin(th + ph)); });
        EXPECT_NEAR(fit_decay_rate(u, 2, 6).rate, d, 1e-4);
    }
}

TEST(FieldIo, RoundTripIsBitExact) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    auto g = make_grid(-1, 1, 9, 4, 2, 2, false);
    ScalarField u(g, Symmetry::full);
    for (auto& v : u.data()) v = N(rng);
    std::stringstream ss;
    write_field(ss, u);
    auto back = read_field<double>(ss);
    ASSERT_EQ(back.size(), u.size());
    EXPECT_EQ(std::memcmp(back.data().data(), u.data().data(), u.size() * sizeof(double)), 0);
    EXPECT_EQ(back.symmetry(), Symmetry::full);

    ComplexField c(g, Symmetry::t_x);
    for (auto& v : c.data()) v = cplx(N(rng), N(rng));
    std::stringstream sc;
    write_field(sc, c);
    auto cb = read_field<cplx>(sc);
    for (std::size_t n = 0; n < c.size(); ++n) EXPECT_EQ(cb[n], c[n]);
}

TEST(FieldIo, Errors) {
    auto g = make_grid(0, 1, 8, 2, 1, 1, true);
    ScalarField u(g, Symmetry::t_only, 1.0);
    std::stringstream ss;
    write_field(ss, u);
    std::string full = ss.str();

    std::stringstream trunc(full.substr(0, full.size() - 5));
    EXPECT_THROW(read_field<double>(trunc), IoError);
    std::stringstream header_only(full.substr(0, 10));
    EXPECT_THROW(read_field<double>(header_only), IoError);

    auto other = make_grid(0, 1, 9, 2, 1, 1, true);
    std::stringstream again(full);
    EXPECT_THROW(read_field<double>(again, &other), IoError);

    std::stringstream wrong_type(full);
    EXPECT_THROW(read_field<cplx>(wrong_type), IoError);
}
