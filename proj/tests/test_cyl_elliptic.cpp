#include <gtest/gtest.h>

#include <random>

#include "acyl/cyl_elliptic.hpp"

using namespace acyl;

TEST(CriticalWeights, LaplacianOnCircle) {
    auto w = critical_weights(OpKind::laplacian, {}, -5, 5);
    ASSERT_EQ(w.size(), 11u);
    for (int i = 0; i < 11; ++i) EXPECT_DOUBLE_EQ(w[i].value, i - 5);
    EXPECT_EQ(w[5].solutions, 2);
    EXPECT_EQ(w[5].polynomial_degree, 1);
}

TEST(CriticalWeights, DbarOnCircle) {
    auto w = critical_weights(OpKind::dbar, {}, -3, 3);
    ASSERT_EQ(w.size(), 7u);
    for (int i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(w[i].value, i - 3);
}

TEST(CriticalWeights, LaplacianWithTorus) {
    auto w = critical_weights(OpKind::laplacian, {true}, 0, 1.5);
    ASSERT_EQ(w.size(), 2u);
    EXPECT_DOUBLE_EQ(w[0].value, 0.0);
    EXPECT_DOUBLE_EQ(w[1].value, 1.0);
    // the first torus weight is 2 pi
    auto more = critical_weights(OpKind::laplacian, {true}, 6.1, 6.5);
    ASSERT_FALSE(more.empty());
    EXPECT_NEAR(more[0].value, 2 * kPi, 1e-12);
    EXPECT_EQ(more[0].solutions, 4);
}

TEST(ModeOde, LaplacianExample) {
    auto g = make_grid(0, 20, 4001, 1, 1, 1, true);
    std::vector<cplx> f(g.n_t);
    for (int i = 0; i < g.n_t; ++i) f[i] = std::exp(-0.5 * g.t(i));
    auto s = solve_mode_ode(OpKind::laplacian, 1, 0.5, f, g);
    EXPECT_LT(s.residual, 1e-10);
    double err = 0;
    for (int i = 0; i < g.n_t; ++i) err = std::max(err, std::abs(s.a[i] + 4.0 / 3.0 * std::exp(-0.5 * g.t(i))));
    EXPECT_LT(err, 1e-5);
}

TEST(ModeOde, LaplacianSecondOrder) {
    double prev = 0;
    for (int n : {201, 401, 801}) {
        auto g = make_grid(0, 20, n, 1, 1, 1, true);
        std::vector<cplx> f(g.n_t);
        for (int i = 0; i < g.n_t; ++i) f[i] = std::exp(-0.5 * g.t(i));
        auto s = solve_mode_ode(OpKind::laplacian, 1, 0.5, f, g);
        double err = 0;
        for (int i = 0; i < g.n_t; ++i) err = std::max(err, std::abs(s.a[i] + 4.0 / 3.0 * std::exp(-0.5 * g.t(i))));
        if (prev > 0) EXPECT_GT(prev / err, 3.5);
        prev = err;
    }
}

TEST(ModeOde, DbarExample) {
    auto g = make_grid(0, 20, 4001, 1, 1, 1, true);
    std::vector<cplx> f(g.n_t);
    for (int i = 0; i < g.n_t; ++i) f[i] = std::exp(-g.t(i));
    auto s = solve_mode_ode(OpKind::dbar, 2, 1.0 + 1e-3, f, g);
    EXPECT_LT(s.residual, 1e-10);
    double err = 0;
    for (int i = 0; i < g.n_t; ++i) err = std::max(err, std::abs(s.a[i] + std::exp(-g.t(i)) / 3.0));
    EXPECT_LT(err, 1e-6);
    EXPECT_THROW(solve_mode_ode(OpKind::dbar, 2, 1.0, f, g), PreconditionError);
}

TEST(ModeOde, ZeroDataGivesZero) {
    auto g = make_grid(0, 10, 101, 1, 1, 1, true);
    std::vector<cplx> f(g.n_t, 0.0);
    for (auto op : {OpKind::dbar, OpKind::laplacian}) {
        auto s = solve_mode_ode(op, 1, 0.5, f, g);
        for (auto v : s.a) EXPECT_EQ(std::abs(v), 0.0);
    }
}

TEST(DbarCylinder, Example) {
    auto g = make_grid(0, 20, 2001, 16, 1, 1, true);
    ComplexField F(g, Symmetry::t_theta);
    F.fill([](double t, double th, double, double) { return std::exp(cplx(-0.5 * t, th)); });
    auto rep = solve_dbar_cylinder(F, 0.5 + 1e-3);
    EXPECT_LT(rep.residual, 1e-8);
    double err = 0;
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < 16; ++j)
            err = std::max(err, std::abs(rep.f(i, j, 0, 0) + 2.0 / 3.0 * F(i, j, 0, 0)));
    EXPECT_LT(err, 1e-6);
    EXPECT_THROW(solve_dbar_cylinder(F, 1.0), PreconditionError);
    ComplexField Z(g, Symmetry::t_theta);
    EXPECT_EQ(sup_abs(solve_dbar_cylinder(Z, 0.5).f), 0.0);
}

TEST(DbarCylinder, SecondOrderAccuracy) {
    double prev = 0;
    for (int n : {201, 401, 801}) {
        auto g = make_grid(0, 10, n, 8, 1, 1, true);
        ComplexField F(g, Symmetry::t_theta);
        F.fill([](double t, double th, double, double) { return std::exp(cplx(-0.5 * t, th)); });
        auto rep = solve_dbar_cylinder(F, 0.4);
        double err = 0;
        for (std::size_t m = 0; m < F.size(); ++m) err = std::max(err, std::abs(rep.f[m] + 2.0 / 3.0 * F[m]));
        if (prev > 0) EXPECT_GT(prev / err, 3.5);
        prev = err;
    }
}

TEST(Laplacian, BiInfiniteExample) {
    auto g = make_grid(-16, 16, 3201, 8, 1, 1, false);
    ScalarField f(g, Symmetry::t_theta);
    f.fill([](double t, double th, double, double) { return std::exp(-0.5 * std::abs(t)) * std::cos(th); });
    auto rep = solve_laplacian_weighted(f, 0.4, DomainKind::bi_infinite);
    EXPECT_LT(rep.residual, 1e-8);
    double err = 0, away = 0;
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < 8; ++j) {
            double t = g.t(i), c = std::cos(g.theta(j));
            double exact = (-4.0 / 3.0 * std::exp(-0.5 * std::abs(t)) + 2.0 / 3.0 * std::exp(-std::abs(t))) * c;
            err = std::max(err, std::abs(rep.u(i, j, 0, 0) - exact));
            if (std::abs(t) > 10)
                away = std::max(away, std::abs(rep.u(i, j, 0, 0) + 4.0 / 3.0 * std::exp(-0.5 * std::abs(t)) * c) /
                                          (std::exp(-0.5 * std::abs(t))));
        }
    EXPECT_LT(err, 1e-4);
    EXPECT_LT(away, 0.01);
    EXPECT_GE(rep.decay_rate, 0.4 - 0.05);
}

TEST(Laplacian, HalfDirichletCompatibleData) {
    auto g = make_grid(0, 30, 3001, 1, 1, 1, true);
    ScalarField f(g, Symmetry::t_only);
    f.fill([](double t, double, double, double) { return (2 - t) * std::exp(-t); });
    auto rep = solve_laplacian_weighted(f, 0.5, DomainKind::half_dirichlet);
    double err = 0;
    for (int i = 0; i < g.n_t; ++i) err = std::max(err, std::abs(rep.u[i] + g.t(i) * std::exp(-g.t(i))));
    EXPECT_LT(err, 1e-4);
    EXPECT_LT(rep.residual, 1e-8);
}

TEST(Laplacian, CokernelViolationAndZeroData) {
    auto g = make_grid(0, 20, 401, 4, 1, 1, true);
    ScalarField f(g, Symmetry::t_only);
    f.fill([](double t, double, double, double) { return std::exp(-t); });
    EXPECT_THROW(solve_laplacian_weighted(f, 0.5, DomainKind::half_dirichlet), PreconditionError);
    ScalarField z(g, Symmetry::t_theta);
    EXPECT_EQ(sup_abs(solve_laplacian_weighted(z, 0.5, DomainKind::half_dirichlet).u), 0.0);
    auto b = make_grid(-10, 10, 401, 4, 1, 1, false);
    ScalarField zb(b, Symmetry::t_theta);
    EXPECT_EQ(sup_abs(solve_laplacian_weighted(zb, 0.5, DomainKind::bi_infinite).u), 0.0);
    EXPECT_THROW(solve_laplacian_weighted(zb, 1.0, DomainKind::bi_infinite), PreconditionError);
}

TEST(Cokernel, Counts) {
    EXPECT_EQ(cokernel_conditions(DomainKind::bi_infinite, 0.3).size(), 2u);
    EXPECT_EQ(cokernel_conditions(DomainKind::half_dirichlet, 0.3).size(), 1u);
    // crossing the weights +-1 (two circle modes each) adds four functionals
    EXPECT_EQ(cokernel_conditions(DomainKind::bi_infinite, 1.5).size(), 6u);
    EXPECT_EQ(cokernel_conditions(DomainKind::half_dirichlet, 1.5).size(), 3u);
    EXPECT_THROW(cokernel_conditions(DomainKind::bi_infinite, 2.0), PreconditionError);
}

TEST(ConditionScan, DegenerateOnlyAtListedWeights) {
    const double h = 1e-6;
    auto listed = critical_weights(OpKind::laplacian, {}, -5.5, 5.5);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> off(-h, h);
    std::vector<std::pair<double, bool>> samples;
    for (int j = 0; j < 189; ++j) samples.push_back({-5.5 + (j + 0.5) * 11.0 / 189.0, false});
    for (auto& w : listed) samples.push_back({w.value + off(rng), true});
    ASSERT_EQ(samples.size(), 200u);
    for (auto& [d, near] : samples) {
        double dist = 1e9;
        for (auto& w : listed) dist = std::min(dist, std::abs(d - w.value));
        double c = mode_condition_number(d, {}, 36.0);
        EXPECT_EQ(c >= 1e6, dist <= h) << "delta=" << d << " cond=" << c;
    }
}

TEST(BoundConstant, StableUnderRefinement) {
    for (double delta : {0.3, 0.7}) {
        auto g1 = make_grid(0, 20, 401, 1, 1, 1, true);
        auto g2 = make_grid(0, 20, 801, 1, 1, 1, true);
        double c1 = estimate_bound_constant(delta, 1, g1, 50, 9);
        double c2 = estimate_bound_constant(delta, 1, g2, 50, 9);
        EXPECT_GT(c1, 0);
        EXPECT_NEAR(c1 / c2, 1.0, 0.1);
    }
}
