#pragma once
// End-to-end model run: glued background, calibration f, continuity solve, recovery of the flat cylinder metric.

#include <cmath>
#include <string>

#include "acyl/glue_construct.hpp"
#include "acyl/ma_solver.hpp"

namespace acyl {

struct PipelineOptions {
    GlueParams glue;
    double t_max = 12.0;
    int n_t = 481;
    int steps = 4;
    bool check_resolution = true;
    MaOptions solver;
};

struct PipelineReport {
    int n_t = 0;
    double annulus_samples = 0.0;
    double t_b = 0.0;
    double lambda = 0.0;
    double calibration_integral = 0.0;
    double f_decay_rate = 0.0;
    double potential_error = 0.0;  ///< sup |u - (lambda t^2 - Phi)| modulo span{1, t}
    double metric_error = 0.0;     ///< sup of the discrete h11 + (1/4) D^2 u - lambda / 2
    double compat_shift = 0.0;
    double residual = 0.0;
    int newton_iterations = 0;
    int path_steps = 0;
    double min_eigenvalue = 0.0;
};

/// Symmetric (t-only) reduction: omega + i ddbar u should equal lambda dt ^ dtheta + omega_T2.
inline PipelineReport run_pipeline(const PipelineOptions& o) {
    const auto g = make_grid(-o.t_max, o.t_max, o.n_t, 1, 1, 1, false);
    PipelineReport rep;
    rep.n_t = o.n_t;
    rep.annulus_samples = annulus_samples(g, o.glue.r, o.glue.s);
    auto vc = solve_volume_condition(g, o.glue, o.check_resolution);
    auto bg = build_background(g, o.glue, vc.t_b, o.check_resolution);
    auto cal = compute_calibration_f(bg);
    rep.t_b = vc.t_b;
    rep.lambda = bg.lambda;
    rep.calibration_integral = cal.integral_residual;
    rep.f_decay_rate = cal.decay_rate;
    MaSolver solver(bg.omega, o.solver);
    auto st = solver.continuity_solve(cal.f, o.steps);
    rep.compat_shift = st.compat_shift;
    rep.residual = st.residual_norm;
    rep.newton_iterations = st.newton_iterations;
    rep.path_steps = st.path_steps;
    rep.min_eigenvalue = st.min_eigenvalue;
    ScalarField diff(g, st.u.symmetry());
    for (int i = 0; i < g.n_t; ++i) diff[i] = st.u[i] - (bg.lambda * g.t(i) * g.t(i) - bg.potential[i]);
    rep.potential_error = sup_abs(kernel_projected(diff));
    auto H = solver_hessian(st.u);
    for (int i = 0; i < g.n_t; ++i)
        rep.metric_error = std::max(rep.metric_error, std::abs(bg.omega.h11[i] + H.h11[i] - 0.5 * bg.lambda));
    return rep;
}

}  // namespace acyl
