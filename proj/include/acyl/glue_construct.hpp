#pragma once
// Background ACyl Kahler metric on P^1 x T^2 minus {0, inf} x T^2, glued symmetrically at both ends.

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "acyl/kahler_kernel.hpp"

namespace acyl {

// ---------------------------------------------------------------------------
// Smoothstep and quadrature

/// C^3 septic smoothstep on [0, 1] and its first three derivatives.
inline std::array<double, 4> smoothstep(double x) {
    if (x <= 0.0) return {0.0, 0.0, 0.0, 0.0};
    if (x >= 1.0) return {1.0, 0.0, 0.0, 0.0};
    const double x2 = x * x, x3 = x2 * x;
    const double y = 1.0 - x;
    return {x2 * x2 * (35.0 - 84.0 * x + 70.0 * x2 - 20.0 * x3), 140.0 * x3 * y * y * y,
            420.0 * x2 * y * y * (1.0 - 2.0 * x), 840.0 * x * y * (1.0 - 5.0 * x + 5.0 * x2)};
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
inline const std::pair<std::vector<double>, std::vector<double>>& gauss_legendre(int n) {
    static thread_local std::vector<std::pair<std::vector<double>, std::vector<double>>> cache(64);
    auto& e = cache.at(static_cast<std::size_t>(n));
    if (!e.first.empty()) return e;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    e.first.resize(n);
    e.second.resize(n);
    for (int k = 0; k < n; ++k) {
        e.first[k] = es.eigenvalues()[k];
        e.second[k] = 2.0 * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
    }
    return e;
}

inline double gl_integrate(const std::function<double(double)>& f, double a, double b, int n = 16) {
    if (b <= a) return 0.0;
    const auto& [x, w] = gauss_legendre(n);
    const double m = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += w[k] * f(m + h * x[k]);
    return s * h;
}

// ---------------------------------------------------------------------------
// Sampled radial profiles

/// Samples of a radial function on a log-spaced grid over (0, 1].
struct RadialProfile {
    std::vector<double> rho;
    std::vector<double> value;
    double support_radius = 0.0;

    std::size_t size() const { return rho.size(); }
};

inline RadialProfile make_radial_profile(const std::function<double(double)>& g, int n, double rho_min = 1e-6) {
    if (n < 3 || !(rho_min > 0.0 && rho_min < 1.0)) throw PreconditionError("radial grid: bad size or range");
    RadialProfile p;
    p.rho.resize(n);
    p.value.resize(n);
    const double du = -std::log(rho_min) / (n - 1);
    for (int k = 0; k < n; ++k) {
        p.rho[k] = k == n - 1 ? 1.0 : rho_min * std::exp(du * k);
        p.value[k] = g(p.rho[k]);
        if (p.value[k] != 0.0) p.support_radius = p.rho[k];
    }
    return p;
}

struct RadialPotential {
    RadialProfile G;        ///< i ddbar G = gamma, G = 0 near the unit circle
    RadialProfile Ghat;     ///< G - log_coeff log rho
    RadialProfile Ghat_r;   ///< d Ghat / d rho
    RadialProfile Ghat_rr;  ///< d^2 Ghat / d rho^2
    double log_coeff = 0.0;
    double total = 0.0;  ///< integral of gamma = g dx dy over the disk
};

/// Radial solution of (1/2) Laplacian G = g with G = 0 outside the support.
inline RadialPotential radial_potential(const RadialProfile& g) {
    const std::size_t n = g.size();
    if (n < 3) throw PreconditionError("radial_potential: too few samples");
    if (g.value.back() != 0.0 || g.value[n - 2] != 0.0)
        throw PreconditionError("radial_potential: support touches the unit circle");
    // m(rho) = int_0^rho g sigma d sigma, trapezoid in log rho
    std::vector<double> m(n);
    m[0] = 0.5 * g.value[0] * g.rho[0] * g.rho[0];
    for (std::size_t k = 1; k < n; ++k) {
        const double du = std::log(g.rho[k] / g.rho[k - 1]);
        m[k] = m[k - 1] + 0.5 * du *
                              (g.value[k] * g.rho[k] * g.rho[k] + g.value[k - 1] * g.rho[k - 1] * g.rho[k - 1]);
    }
    const double M = m.back();
    RadialPotential out;
    out.total = 2.0 * kPi * M;
    out.log_coeff = -2.0 * M;
    for (auto* p : {&out.G, &out.Ghat, &out.Ghat_r, &out.Ghat_rr}) {
        p->rho = g.rho;
        p->value.assign(n, 0.0);
        p->support_radius = g.support_radius;
    }
    // G' rho = 2 (m - M); integrate from the outer edge inward in log rho
    for (std::size_t k = n - 1; k-- > 0;) {
        const double du = std::log(g.rho[k + 1] / g.rho[k]);
        out.G.value[k] = out.G.value[k + 1] - du * ((m[k + 1] - M) + (m[k] - M));
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double r = g.rho[k];
        out.Ghat.value[k] = out.G.value[k] - out.log_coeff * std::log(r);
        out.Ghat_r.value[k] = 2.0 * m[k] / r;
        out.Ghat_rr.value[k] = -out.Ghat_r.value[k] / r + 2.0 * g.value[k];
    }
    return out;
}

struct DerivativeBoundsReport {
    double max_ratio_gradient = 0.0;
    double max_ratio_hessian = 0.0;
    double rho0 = 0.0;
    bool passed = false;
};

/**
 * @brief Check |grad Ghat| <= psi (rho^2 - rho0^2)/rho and |Hess Ghat| <= sqrt(10) psi pointwise.
 *
 * psi(rho) = max_{|v| <= rho} |g(v)|, rho0 = the last radius where psi vanishes. The Hessian norm is Frobenius.
 */
inline DerivativeBoundsReport derivative_bounds_check(const RadialProfile& g, double slack = 1e-3) {
    auto pot = radial_potential(g);
    DerivativeBoundsReport rep;
    double psi = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        psi = std::max(psi, std::abs(g.value[k]));
        if (psi == 0.0) rep.rho0 = g.rho[k];
    }
    auto ratio = [](double num, double den) {
        if (den > 0.0) return num / den;
        return num > 1e-300 ? kInf : 0.0;
    };
    psi = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double r = g.rho[k];
        psi = std::max(psi, std::abs(g.value[k]));
        const double gr = std::abs(pot.Ghat_r.value[k]);
        const double hess = std::hypot(pot.Ghat_rr.value[k], pot.Ghat_r.value[k] / r);
        rep.max_ratio_gradient =
            std::max(rep.max_ratio_gradient, ratio(gr, psi * std::max(0.0, r * r - rep.rho0 * rep.rho0) / r));
        rep.max_ratio_hessian = std::max(rep.max_ratio_hessian, ratio(hess, std::sqrt(10.0) * psi));
    }
    rep.passed = rep.max_ratio_gradient <= 1.0 + slack && rep.max_ratio_hessian <= 1.0 + slack;
    return rep;
}

/// One to three signed (1 - x^2)^4 bumps centred in [0.1, 0.7] with widths in [0.02, 0.12].
template <class Rng>
std::function<double(double)> random_radial_bump(Rng& rng) {
    std::uniform_real_distribution<double> U(0, 1);
    int n = 1 + static_cast<int>(3 * U(rng));
    std::vector<std::array<double, 3>> parts;
    for (int k = 0; k < n; ++k) {
        double c = 0.1 + 0.6 * U(rng), w = 0.02 + 0.1 * U(rng), a = 2 * U(rng) - 0.5;
        parts.push_back({c, w, a});
    }
    return [parts](double rho) {
        double v = 0;
        for (auto& [c, w, a] : parts) {
            double x = (rho - c) / w;
            if (std::abs(x) < 1) v += a * std::pow(1 - x * x, 4);
        }
        return v;
    };
}

// ---------------------------------------------------------------------------
// Model gluing data

struct GlueParams {
    double r = 0.05;
    double s = 0.0025;
    double r0 = 0.3;
    double torus_b = 1.0;      ///< omega_T2 = i b dz2 ^ dz2bar
    double omega_scale = 1.0;  ///< Omega = c (dw/w) ^ dz2
    double lambda = 0.0;       ///< 0 selects lambda b = c^2

    double lam() const { return lambda > 0.0 ? lambda : omega_scale * omega_scale / torus_b; }
    double t_r() const { return -std::log(r); }

    void validate() const {
        if (!(s > 0.0 && r > 0.0 && r0 < 1.0)) throw PreconditionError("glue: need 0 < s, 0 < r, r0 < 1");
        if (!(r - 2.0 * s > 0.0 && r + 2.0 * s < r0)) throw PreconditionError("glue: need s << r << r0");
        if (!(torus_b > 0.0 && omega_scale > 0.0)) throw PreconditionError("glue: torus and Omega scales must be positive");
    }
};

/// Bump density g of beta = g (i/2) dw ^ dwbar: 1 on [r-s, r+s], smoothstep edges, support [r-2s, r+2s].
struct AnnulusBump {
    double r, s;

    double g(double rho) const {
        const double a = r - 2 * s, b = r + 2 * s;
        if (rho <= a || rho >= b) return 0.0;
        if (rho < r - s) return smoothstep((rho - a) / s)[0];
        if (rho > r + s) return smoothstep((b - rho) / s)[0];
        return 1.0;
    }
    std::array<double, 3> pieces() const { return {r - s, r + s, r + 2 * s}; }

    /// int_0^rho g sigma d sigma, exact for the polynomial pieces.
    double m(double rho) const {
        double lo = r - 2 * s, acc = 0.0;
        for (double edge : pieces()) {
            double hi = std::min(rho, edge);
            acc += gl_integrate([this](double x) { return g(x) * x; }, lo, hi, 8);
            if (rho <= edge) break;
            lo = edge;
        }
        return acc;
    }
    double mass() const { return m(r + 2 * s); }

    /// Potential G(rho) with (1/2) Laplacian G = g and G = 0 for rho >= r + 2s.
    double G(double rho) const {
        const double a = r - 2 * s, b = r + 2 * s, M = mass();
        auto dG = [&](double x) { return 2.0 * (m(x) - M) / x; };
        if (rho >= b) return 0.0;
        double acc = 0.0, hi = b;
        const std::array<double, 4> edges{r + s, r - s, a, 0.0};
        for (double edge : edges) {
            double lo = std::max(rho, edge);
            if (edge == 0.0) {
                // below the support G' = -2M / x
                acc -= 2.0 * M * std::log(hi / lo);
                break;
            }
            acc += gl_integrate(dG, lo, hi, 24);
            if (rho >= edge) break;
            hi = edge;
        }
        return -acc;
    }
};

/// Radial cutoff chi(t): 1 for rho < r - s, 0 for rho > r + s, smoothstep in log rho. Returns chi, chi', chi''.
inline std::array<double, 3> cutoff_in_t(double t, double r, double s) {
    const double la = std::log(r - s), lb = std::log(r + s), L = lb - la;
    auto S = smoothstep((-t - la) / L);
    return {1.0 - S[0], S[1] / L, -S[2] / (L * L)};
}

/// u = (t - t_r)^2 = (log rho)^2 + (log r)^2 - 2 log r log rho; returns u, u', u''.
inline std::array<double, 3> cylinder_potential_in_t(double t, double r) {
    const double d = t + std::log(r);
    return {d * d, 2.0 * d, 2.0};
}

/// Samples of the t-width of the gluing annulus r - s < rho < r + s.
inline double annulus_samples(const CylinderGrid& g, double r, double s) {
    return std::log((r + s) / (r - s)) / g.ht();
}

inline void require_resolved(const CylinderGrid& g, double r, double s) {
    const double n = annulus_samples(g, r, s);
    if (n < 8.0)
        throw PreconditionError("annulus under-resolved: " + std::to_string(n) +
                                " t-samples across the gluing annulus (need 8)");
}

struct CutoffReport {
    ScalarField chi_u;
    double normpot_constant = 0.0;  ///< sup (|u| + s |u_w|) / (|log r| s^2 / r^2) on the annulus
    double cutoff_constant = 0.0;   ///< sup s |chi_w| + s^2 |chi_wwbar|
};

/// chi u on the t > 0 end of a grid, with the measured constants of the Taylor and cutoff bounds.
inline CutoffReport cylinder_cutoff_potential(const CylinderGrid& g, double r, double s) {
    if (!(0 < s && 2 * s < r && r < 1)) throw PreconditionError("cutoff: need 0 < 2s < r < 1");
    require_resolved(g, r, s);
    CutoffReport rep{ScalarField(g, Symmetry::t_only)};
    const double scale = std::abs(std::log(r)) * s * s / (r * r);
    for (int i = 0; i < g.n_t; ++i) {
        const double t = g.t(i), rho = std::exp(-t);
        auto c = cutoff_in_t(t, r, s);
        auto u = cylinder_potential_in_t(t, r);
        rep.chi_u[i] = c[0] * u[0];
        if (rho >= r - 2 * s && rho <= r + 2 * s) {
            // |f_w| = |f_rho|/2 and f_rho = -f_t / rho for radial f
            const double u_w = 0.5 * std::abs(u[1]) / rho;
            rep.normpot_constant = std::max(rep.normpot_constant, (std::abs(u[0]) + s * u_w) / scale);
        }
        // chi_wwbar = (1/4) Laplacian = chi_tt / (4 rho^2)
        const double chi_w = 0.5 * std::abs(c[1]) / rho, chi_ww = 0.25 * std::abs(c[2]) / (rho * rho);
        rep.cutoff_constant = std::max(rep.cutoff_constant, s * chi_w + s * s * chi_ww);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Background metric

/// Horizontal coefficient and potential of the background at one t (both ends included).
struct BackgroundPoint {
    double h11;       ///< total
    double h11_rest;  ///< without the bump
    double beta;      ///< bump coefficient per unit t_b
    double potential;
};

inline BackgroundPoint background_point(const GlueParams& p, double t_b, double t, const AnnulusBump& bump,
                                        double G_edge, double t_edge) {
    const double lam = p.lam();
    double fs = 0.25 / (std::cosh(t) * std::cosh(t));
    double pot_fs = t > 0 ? std::log1p(std::exp(-2.0 * t)) : -2.0 * t + std::log1p(std::exp(2.0 * t));
    double cu2 = 0.0, cu = 0.0, beta = 0.0, B = 0.0;
    for (double tt : {t, -t}) {
        auto c = cutoff_in_t(tt, p.r, p.s);
        auto u = cylinder_potential_in_t(tt, p.r);
        cu2 += c[2] * u[0] + 2.0 * c[1] * u[1] + c[0] * u[2];
        cu += c[0] * u[0];
        const double rho = std::exp(-tt);
        beta += 0.5 * bump.g(rho) * rho * rho;
        // below the bump G is linear in t; avoid quadrature there
        if (rho <= p.r - 2 * p.s) B += G_edge + 2.0 * bump.mass() * (tt - t_edge);
        else B += bump.G(rho);
    }
    BackgroundPoint bp;
    bp.h11_rest = fs + 0.25 * lam * cu2;
    bp.beta = beta;
    bp.h11 = bp.h11_rest + t_b * beta;
    bp.potential = pot_fs + lam * cu + t_b * B;
    return bp;
}

struct EndData {
    double h11_limit = 0.0;
    double decay_rate = 0.0;
};

struct BackgroundMetric {
    Form11Field omega;
    GlueParams params;
    double t_b = 0.0;
    double lambda = 0.0;
    double min_eigenvalue = 0.0;
    std::array<int, 4> argmin{};
    std::array<EndData, 2> ends{};  ///< t -> -inf, t -> +inf
    ScalarField potential;          ///< Phi with omega = i ddbar Phi + omega_T2
    ScalarField rest;               ///< h11 without the bump
    ScalarField beta;               ///< bump coefficient per unit t_b
};

/// Smallest t_b keeping the horizontal coefficient positive at every sample.
inline double positivity_threshold(const ScalarField& rest, const ScalarField& beta) {
    double need = -kInf;
    for (std::size_t n = 0; n < rest.size(); ++n) {
        if (beta[n] > 0.0) need = std::max(need, -rest[n] / beta[n]);
        else if (rest[n] <= 0.0) return kInf;
    }
    return need;
}

inline BackgroundMetric assemble_background(const CylinderGrid& g, const GlueParams& p, double t_b,
                                            bool check_resolution = true) {
    p.validate();
    if (g.half_cylinder) throw PreconditionError("build_background: needs a bi-infinite grid");
    if (check_resolution) require_resolved(g, p.r, p.s);
    BackgroundMetric bg;
    bg.params = p;
    bg.t_b = t_b;
    bg.lambda = p.lam();
    AnnulusBump bump{p.r, p.s};
    const double t_edge = -std::log(p.r - 2 * p.s);
    const double G_edge = bump.G(p.r - 2 * p.s);
    ScalarField h11(g, Symmetry::t_only), h22(g, Symmetry::t_only, p.torus_b);
    bg.potential = ScalarField(g, Symmetry::t_only);
    bg.rest = ScalarField(g, Symmetry::t_only);
    bg.beta = ScalarField(g, Symmetry::t_only);
    for (int i = 0; i < g.n_t; ++i) {
        auto bp = background_point(p, t_b, g.t(i), bump, G_edge, t_edge);
        h11[i] = bp.h11;
        bg.rest[i] = bp.h11_rest;
        bg.beta[i] = bp.beta;
        bg.potential[i] = bp.potential;
    }
    bg.omega = Form11Field(h11, ComplexField(g, Symmetry::t_only), h22);
    auto spec = positivity_spectrum(bg.omega);
    bg.min_eigenvalue = spec.global_min;
    bg.argmin = spec.argmin;
    // approach to lambda dt dtheta at each end, fitted on the outer half of each side
    for (int side = 0; side < 2; ++side) {
        std::vector<double> ts, vs;
        for (int i = 0; i < g.n_t; ++i) {
            double t = side == 0 ? -g.t(i) : g.t(i);
            if (t > 0) ts.push_back(t), vs.push_back(std::abs(h11[i] - 0.5 * bg.lambda));
        }
        bg.ends[side].h11_limit = side == 0 ? h11[0] : h11[g.n_t - 1];
        double tmax = side == 0 ? -g.t_min : g.t_max;
        bg.ends[side].decay_rate = fit_decay_series(ts, vs, 0.5 * tmax, tmax).rate;
    }
    return bg;
}

/// Assemble the glued form and require positivity.
inline BackgroundMetric build_background(const CylinderGrid& g, const GlueParams& p, double t_b,
                                         bool check_resolution = true) {
    auto bg = assemble_background(g, p, t_b, check_resolution);
    if (!(bg.min_eigenvalue > 0.0)) {
        const double need = positivity_threshold(bg.rest, bg.beta);
        throw PositivityError("background not positive: min eigenvalue " + std::to_string(bg.min_eigenvalue) +
                                  " at t = " + std::to_string(g.t(bg.argmin[0])) + "; try t_b > " +
                                  std::to_string(need) + " (heuristic 2|log r|/r^2 = " +
                                  std::to_string(2.0 * std::abs(std::log(p.r)) / (p.r * p.r)) + ")",
                              bg.argmin, bg.min_eigenvalue);
    }
    return bg;
}

/// Quadrature of the density difference 8 b h11 - 4 c^2 over the grid, with analytic Fubini-Study tails.
inline double volume_integral(const CylinderGrid& g, const GlueParams& p, const ScalarField& h11, bool include_tails) {
    ScalarField d(g, Symmetry::t_only);
    const double hol = 4.0 * p.omega_scale * p.omega_scale;
    for (int i = 0; i < g.n_t; ++i) d[i] = 8.0 * p.torus_b * h11[i] - hol;
    double v = integrate(d);
    if (include_tails) {
        // beyond the window only the FS term 1/(4 cosh^2) differs from the limit; int_T^inf 1/cosh^2 = 1 - tanh T
        const double tail = 2.0 * p.torus_b * ((1.0 - std::tanh(g.t_max)) + (1.0 - std::tanh(-g.t_min)));
        v += 2.0 * kPi * tail;
    }
    return v;
}

struct VolumeCondition {
    double t_b = 0.0;
    double c0 = 0.0;
    double c1 = 0.0;
    double c0_exact = 0.0;  ///< closed form 8 pi b (1 - 2 lambda t_r) at matching scales
    double c1_exact = 0.0;  ///< closed form 8 pi b (2 int g rho d rho)
    double positivity_min = 0.0;
    double heuristic = 0.0;  ///< 2 |log r| / r^2
};

/// Solve int(omega_t^2 - Omega Omegabar) = c0 + c1 t_b = 0 for the bump amplitude.
inline VolumeCondition solve_volume_condition(const CylinderGrid& g, const GlueParams& p,
                                             bool check_resolution = true) {
    auto bg = assemble_background(g, p, 0.0, check_resolution);
    const bool tails = std::abs(p.lam() * p.torus_b - p.omega_scale * p.omega_scale) < 1e-14;
    VolumeCondition vc;
    vc.c0 = volume_integral(g, p, bg.rest, tails);
    ScalarField d(g, Symmetry::t_only);
    for (int i = 0; i < g.n_t; ++i) d[i] = 8.0 * p.torus_b * bg.beta[i];
    vc.c1 = integrate(d);
    AnnulusBump bump{p.r, p.s};
    vc.c0_exact = 8.0 * kPi * p.torus_b * (1.0 - 2.0 * p.lam() * p.t_r());
    vc.c1_exact = 8.0 * kPi * p.torus_b * 2.0 * bump.mass();
    if (!(vc.c1 > 0.0)) throw NumericalError("volume condition: c1 <= 0 (grid failure)");
    if (!(vc.c0 < 0.0)) throw NumericalError("volume condition: c0 >= 0");
    vc.t_b = -vc.c0 / vc.c1;
    vc.positivity_min = positivity_threshold(bg.rest, bg.beta);
    vc.heuristic = 2.0 * std::abs(std::log(p.r)) / (p.r * p.r);
    if (!(vc.t_b > vc.positivity_min))
        throw NumericalError("volume condition: t_b = " + std::to_string(vc.t_b) +
                             " is below the positivity threshold " + std::to_string(vc.positivity_min));
    return vc;
}

struct CalibrationReport {
    ScalarField f;
    double integral_residual = 0.0;  ///< int (e^f - 1) omega^2 over the window
    double volume = 0.0;             ///< int omega^2 over the window
    double decay_rate = 0.0;
};

/// f = log(Omega density / omega^2 density) and the window integral of (e^f - 1) omega^2.
inline CalibrationReport compute_calibration_f(const BackgroundMetric& bg, bool include_tails = true) {
    const auto& g = bg.omega.grid();
    auto top = top_power(bg.omega);
    auto hol = holomorphic_volume_density(g, bg.params.omega_scale);
    CalibrationReport rep{ScalarField(g, top.symmetry())};
    ScalarField diff(g, top.symmetry());
    for (std::size_t n = 0; n < top.size(); ++n) {
        if (!(top[n] > 0.0)) throw NumericalError("calibration: non-positive volume density");
        rep.f[n] = std::log(hol.at_full(0, 0, 0, 0) / top[n]);
        diff[n] = (std::exp(rep.f[n]) - 1.0) * top[n];
    }
    rep.volume = integrate(top);
    rep.integral_residual = integrate(diff);
    if (include_tails) {
        const double b = bg.params.torus_b;
        rep.integral_residual -= 2.0 * kPi * 2.0 * b * ((1.0 - std::tanh(g.t_max)) + (1.0 - std::tanh(-g.t_min)));
    }
    std::vector<double> ts, vs;
    for (int i = 0; i < g.n_t; ++i)
        if (g.t(i) > 0) ts.push_back(g.t(i)), vs.push_back(std::abs(rep.f[i]));
    rep.decay_rate = fit_decay_series(ts, vs, 0.5 * g.t_max, g.t_max).rate;
    return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Parse a derived rule of the form "s = r^k" or "s = c*r^k".
inline std::function<double(double)> parse_rule(const std::string& rule) {
    static const std::regex re(R"(\s*s\s*=\s*(?:([0-9.eE+-]+)\s*\*\s*)?r\s*\^\s*([0-9.eE+-]+)\s*)");
    std::smatch m;
    if (!std::regex_match(rule, m, re)) throw SchemaError("unrecognized rule: " + rule);
    const double c = m[1].matched ? std::stod(m[1].str()) : 1.0, k = std::stod(m[2].str());
    return [c, k](double r) { return c * std::pow(r, k); };
}

struct SweepRow {
    double r, s, r0, t_b, c0, c1, min_eig;
};

/// Grid fine enough to resolve the annulus with the requested number of samples.
inline CylinderGrid resolving_grid(double r, double s, double t_max, double samples = 16.0) {
    const double h = std::log((r + s) / (r - s)) / samples;
    int n = static_cast<int>(std::ceil(2.0 * t_max / h)) + 1;
    return make_grid(-t_max, t_max, n, 1, 1, 1, false);
}

inline SweepRow sweep_point(const GlueParams& p, double t_max = 12.0, double samples = 16.0) {
    auto g = resolving_grid(p.r, p.s, t_max, samples);
    auto vc = solve_volume_condition(g, p);
    auto bg = build_background(g, p, vc.t_b);
    return {p.r, p.s, p.r0, vc.t_b, vc.c0, vc.c1, bg.min_eigenvalue};
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "r,s,r0,t_b,c0,c1,min_eig\n";
    os.precision(17);
    for (const auto& w : rows)
        os << w.r << ',' << w.s << ',' << w.r0 << ',' << w.t_b << ',' << w.c0 << ',' << w.c1 << ',' << w.min_eig
           << '\n';
}

}  // namespace acyl
