#include <gtest/gtest.h>

#include <sstream>

#include "acyl/estimates_lab.hpp"

using namespace acyl;

namespace {

std::vector<double> sweep(int n) {
    std::vector<double> r;
    for (int k = 0; k < n; ++k) r.push_back(std::pow(10.0, -3.0 + 2.0 * k / (n - 1)));
    return r;
}

SyntheticK k_const(double c = 1.0) { return SyntheticK{TorusFunction{{{cplx(c, 0), 0, 0}}}}; }
SyntheticK k_varying() { return SyntheticK{TorusFunction{{{cplx(1, 0), 0, 0}, {cplx(0.5, 0), 1, 0}}}}; }

TestField single_bump(double center, double width, int m) {
    return TestField{{{1.0, center, width, m, 0, 0, 0.0}}};
}

}  // namespace

TEST(Sobolev, ConstantsAreSubtracted) {
    SobolevOptions o;
    o.tail = false;
    auto s = sobolev_sides(single_bump(0.0, 1e9, 0), 0.5, 1.5, o);
    EXPECT_LT(s[0], 1e-12);
    EXPECT_LT(s[1], 1e-12);
}

TEST(Sobolev, TranslationScalesByWeight) {
    const double mu = 0.4, tau = 2.0;
    for (double sigma : {1.0, 1.5, 2.0}) {
        auto a = sobolev_sides(single_bump(5.5, 0.5, 1), mu, sigma);
        auto b = sobolev_sides(single_bump(5.5 + tau, 0.5, 1), mu, sigma);
        EXPECT_NEAR(b[1] / a[1], 1.0, 1e-12);
        EXPECT_NEAR((b[0] / b[1]) / (a[0] / a[1]), std::exp(-mu * tau), 1e-10);
    }
}

TEST(Sobolev, MonteCarloConstant) {
    auto rep = sobolev_verify(0.25, 1.5, 1000, 11);
    ASSERT_EQ(rep.ratios.size(), 1000u);
    EXPECT_TRUE(std::isfinite(rep.constant));
    EXPECT_GT(rep.constant, 0.0);
    for (double q : rep.ratios) EXPECT_LE(q, rep.constant);
    SobolevOptions fine;
    fine.per_slab = 40;
    fine.n_theta = 16;
    auto ref = sobolev_verify(0.25, 1.5, 200, 11, fine);
    auto base = sobolev_verify(0.25, 1.5, 200, 11);
    EXPECT_NEAR(ref.constant / base.constant, 1.0, 0.1);
}

TEST(Sobolev, ConstantTrendInSigma) {
    double prev = kInf;
    for (double sigma : {1.0, 1.25, 1.5, 1.75, 2.0}) {
        const double c = sobolev_verify(0.25, sigma, 200, 5).constant;
        EXPECT_LE(c, prev);
        prev = c;
    }
}

TEST(Sobolev, Preconditions) {
    EXPECT_THROW(sobolev_verify(0.0, 1.5, 1, 1), PreconditionError);
    EXPECT_THROW(sobolev_verify(0.5, 2.5, 1, 1), PreconditionError);
}

TEST(ComponentBounds, ZeroK) {
    auto g = make_radial_profile([](double r) { return r < 0.4 ? 1.0 : 0.0; }, 400);
    auto rep = component_bounds_check(SyntheticK{}, g);
    EXPECT_EQ(rep.eta_mixed_sup, 0.0);
    EXPECT_EQ(rep.eta_vertical_sup, 0.0);
    EXPECT_EQ(rep.gamma_mixed_ratio, 0.0);
    EXPECT_EQ(rep.gamma_vertical_ratio, 0.0);
}

TEST(ComponentBounds, EtaClasses) {
    auto g = make_radial_profile([](double r) { return r < 0.4 ? 1.0 : 0.0; }, 1200);
    auto flat = component_bounds_check(k_const(), g);
    // |c| / sqrt 2 for constant c; the vertical part needs c to vary on the torus
    EXPECT_NEAR(flat.eta_mixed_sup, 1.0 / std::sqrt(2.0), 1e-6);
    EXPECT_LT(flat.eta_vertical_sup, 1e-12);
    auto rep = component_bounds_check(k_varying(), g);
    EXPECT_EQ(rep.eta_horizontal, 0.0);
    EXPECT_NEAR(rep.eta_mixed_slope, 0.0, 0.1);
    EXPECT_NEAR(rep.eta_vertical_slope, 1.0, 0.1);
    EXPECT_TRUE(rep.passed);
}

TEST(ComponentBounds, GammaClassesAcrossProfiles) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double worst_m = 0.0, worst_v = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double a = 0.05 + 0.3 * U(rng), w = 0.05 + 0.3 * U(rng), h = 0.5 + U(rng);
        const double inner = k % 2 ? 0.0 : 0.5 * a;
        auto prof = [=](double r) {
            if (r < inner) return 0.0;
            if (r < a) return h;
            if (r < a + w) return h * smoothstep((a + w - r) / w)[0];
            return 0.0;
        };
        auto g = make_radial_profile(prof, 1200);
        auto rep = component_bounds_check(k_varying(), g);
        ASSERT_TRUE(std::isfinite(rep.gamma_mixed_ratio));
        ASSERT_TRUE(std::isfinite(rep.gamma_vertical_ratio));
        worst_m = std::max(worst_m, rep.gamma_mixed_ratio);
        worst_v = std::max(worst_v, rep.gamma_vertical_ratio);
        if (inner == 0.0) {
            EXPECT_NEAR(rep.gamma_mixed_slope, 2.0, 0.1);
            EXPECT_NEAR(rep.gamma_vertical_slope, 3.0, 0.1);
        }
    }
    EXPECT_LT(worst_m, 5.0);
    EXPECT_LT(worst_v, 5.0);
}

TEST(ComponentBounds, ScaleCovariance) {
    auto g = make_radial_profile([](double r) { return r < 0.3 ? 1.0 : (r < 0.5 ? smoothstep((0.5 - r) / 0.2)[0] : 0.0); }, 600);
    auto a = component_bounds_check(k_varying(), g);
    auto b = component_bounds_check(k_varying().scaled(3.0), g);
    EXPECT_NEAR(b.eta_mixed_sup, 3.0 * a.eta_mixed_sup, 1e-12 * b.eta_mixed_sup);
    EXPECT_NEAR(b.eta_vertical_sup, 3.0 * a.eta_vertical_sup, 1e-12 * b.eta_vertical_sup);
    EXPECT_NEAR(b.gamma_mixed_ratio, 3.0 * a.gamma_mixed_ratio, 1e-12 * b.gamma_mixed_ratio);
    EXPECT_NEAR(b.gamma_vertical_ratio, 3.0 * a.gamma_vertical_ratio, 1e-12 * b.gamma_vertical_ratio);
}

TEST(Tables, TubeCrossRowClosedForm) {
    const auto rows = appendix_rows(2);
    auto it = std::find_if(rows.begin(), rows.end(), [](const TableRow& r) {
        return r.table == 0 && r.tube && r.p == 2 && r.pattern == "v^{p-1}h";
    });
    ASSERT_NE(it, rows.end());
    EXPECT_TRUE(it->dominant);
    auto rs = sweep(9);
    std::vector<double> v;
    for (double r : rs) {
        const double L = -std::log(r);
        v.push_back(row_value(*it, r, r * r));
        EXPECT_NEAR(v.back(), r * (L + 1.0), 1e-10 * r * (L + 1.0));
    }
    // local log-slope gap to r|log r| at the small end of the window
    const double r0 = rs[0], r1 = 1.1e-3;
    const double local = std::log(row_value(*it, r1, r1 * r1) / v[0]) / std::log(r1 / r0);
    const double ref = std::log(r1 * std::log(r1) / (r0 * std::log(r0))) / std::log(r1 / r0);
    EXPECT_LE(std::abs(local - ref), 0.02);
}

TEST(Tables, AnnulusCrossRow) {
    const auto rows = appendix_rows(2);
    auto it = std::find_if(rows.begin(), rows.end(), [](const TableRow& r) {
        return r.table == 0 && !r.tube && r.p == 2 && r.pattern == "v^{p-1}h";
    });
    ASSERT_NE(it, rows.end());
    auto out = table_integral_orders({*it}, sweep(9), SRule{"s = r^2", 2.0, 1.0});
    EXPECT_NEAR(out[0].fitted_exponent, 2.0, 0.1);
    for (const auto& smp : out[0].samples) {
        const double r = smp[0], s = smp[1], L = -std::log(r);
        // rs (r|log r|) |log r| / r^2 over an annulus of width 4s
        EXPECT_NEAR(smp[2] / (4.0 * r * s * r * L * L / (r * r)), 1.0, 4.0 * s / r + 1e-3);
    }
}

TEST(Tables, EveryRowEveryRule) {
    const auto rows = appendix_rows(4);
    for (const auto& rule : {SRule{"s = r^2", 2, 1}, SRule{"s = r^3", 3, 1}, SRule{"s = 0.5*r^2", 2, 0.5}}) {
        auto out = table_integral_orders(rows, sweep(9), rule);
        ASSERT_EQ(out.size(), rows.size());
        for (const auto& sr : out) {
            EXPECT_TRUE(sr.passed) << rule.name << " " << sr.row.id << " " << sr.fitted_exponent << " vs "
                                   << sr.target_order;
            EXPECT_LE(sr.refinement_change, 5e-3) << sr.row.id;
        }
        std::string off;
        EXPECT_TRUE(dominance_holds(out, &off)) << rule.name << " " << off;
    }
}

TEST(Tables, Aggregates) {
    const auto rows = appendix_rows(2);
    const SRule rule{"s = r^2", 2, 1};
    auto b3 = aggregate_check(rows, 2, 2, sweep(9), rule);
    EXPECT_GE(b3.fitted_exponent, 6.9);
    EXPECT_TRUE(b3.passed);
    EXPECT_TRUE(aggregate_check(rows, 0, 0, sweep(9), rule).passed);
    EXPECT_TRUE(aggregate_check(rows, 1, 1, sweep(9), rule).passed);
    const auto rows4 = appendix_rows(4);
    for (int ell = 2; ell <= 4; ++ell) EXPECT_TRUE(aggregate_check(rows4, 2, ell, sweep(9), rule).passed) << ell;
}

TEST(Tables, RowsAndCsv) {
    const auto rows = appendix_rows(2);
    EXPECT_EQ(std::count_if(rows.begin(), rows.end(), [](const TableRow& r) { return r.zero; }), 2);
    EXPECT_THROW(table_integral_orders(rows, sweep(5), SRule{}), PreconditionError);
    EXPECT_THROW(table_integral_orders(rows, {1e-4, 1e-3, 1e-2, 2e-2, 3e-2, 5e-2}, SRule{}), PreconditionError);
    auto out = table_integral_orders(rows, sweep(6), SRule{"s = r^2", 2, 1});
    std::ostringstream os;
    write_scaling_csv(os, out);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "module,row_id,r,s,value,fitted_exponent,target_order,pass");
    int n = 0;
    while (std::getline(is, line)) ++n;
    EXPECT_EQ(n, static_cast<int>(rows.size()) * 6);
}

TEST(Tables, RuleParsing) {
    auto a = s_rule_from_string("s = r^3");
    EXPECT_EQ(a.power, 3.0);
    auto b = s_rule_from_string("s = 0.5*r^2");
    EXPECT_EQ(b.power, 2.0);
    EXPECT_NEAR(b.coeff, 0.5, 1e-12);
    EXPECT_THROW(s_rule_from_string("s = r^1.5"), SchemaError);
    EXPECT_THROW(s_rule_from_string("t = r"), SchemaError);
}

TEST(Wedge, ZeroKIsHorizontalSquare) {
    for (auto lp : {std::array<int, 2>{2, 0}, {1, 1}, {0, 2}}) EXPECT_EQ(wedge_epsilons(lp[0], lp[1], 0.02, 4e-4, SyntheticK{}), 0.0);
}

TEST(Wedge, SweepMatchesAggregateBounds) {
    const auto rs = sweep(7);
    const std::array<double, 3> bound{7.0, 4.0, 1.0};  // wedge orders for l = 2, 1, 0 at s = r^2
    int idx = 0;
    for (auto lp : {std::array<int, 2>{2, 0}, {1, 1}, {0, 2}}) {
        std::vector<double> v;
        for (double r : rs) v.push_back(wedge_epsilons(lp[0], lp[1], r, r * r, k_varying()));
        EXPECT_GE(fit_log_model(rs, v)[1], bound[idx] - 0.1) << lp[0] << lp[1];
        WedgeOptions fine;
        fine.panels = 16;
        const double a = wedge_epsilons(lp[0], lp[1], 0.01, 1e-4, k_varying());
        const double b = wedge_epsilons(lp[0], lp[1], 0.01, 1e-4, k_varying(), fine);
        EXPECT_NEAR(a / b, 1.0, 5e-3);
        ++idx;
    }
    // constant c still feeds the mixed block
    EXPECT_GT(wedge_epsilons(2, 0, 0.02, 4e-4, k_const()), 0.0);
}

TEST(Wedge, Preconditions) {
    WedgeOptions coarse;
    coarse.panels = 2;
    EXPECT_THROW(wedge_epsilons(2, 0, 0.02, 4e-4, k_const(), coarse), PreconditionError);
    EXPECT_THROW(wedge_epsilons(1, 0, 0.02, 4e-4, k_const()), PreconditionError);
    EXPECT_THROW(wedge_epsilons(2, 0, 0.02, 0.02, k_const()), PreconditionError);
}
