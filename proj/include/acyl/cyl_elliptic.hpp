#pragma once

/**
 * @file cyl_elliptic.hpp
 * @brief Translation-invariant elliptic analysis on cylinders.
 *
 * Critical weights, per-Fourier-mode right inverses for the Cauchy-Riemann operator
 * d/dt + i d/dtheta and for the flat Laplacian, and the cokernel bookkeeping that goes
 * with them. Truncated ends use transparent boundary relations built from the exact
 * exponential solutions of each mode.
 */

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include <functional>
#include <optional>
#include <random>

#include "field_core.hpp"

namespace acyl {

enum class OpKind { dbar, laplacian };
enum class DomainKind { half_dirichlet, bi_infinite };

inline std::string to_string(OpKind k) { return k == OpKind::dbar ? "dbar" : "laplacian"; }
inline std::string to_string(DomainKind d) { return d == DomainKind::bi_infinite ? "bi_infinite" : "half_dirichlet"; }

/// Cross-section S^1 (radius 1), optionally times the unit torus T^2.
struct CrossSection {
    bool with_torus = false;
};

struct CriticalWeight {
    double value = 0.0;
    int solutions = 0;        ///< independent solutions e^{-delta t} p(t) (cross-section factor included)
    int polynomial_degree = 0;
};

/// Eigenvalues k^2 + 4 pi^2 (m^2 + n^2) up to `bound` with multiplicities, sorted.
inline std::vector<std::pair<double, int>> cross_section_spectrum(const CrossSection& cs, double bound) {
    std::map<long long, std::pair<double, int>> acc;  // keyed on rounded value
    const int kmax = static_cast<int>(std::floor(std::sqrt(std::max(bound, 0.0)))) + 1;
    const int mmax = cs.with_torus ? static_cast<int>(std::floor(std::sqrt(std::max(bound, 0.0)) / (2 * kPi))) + 1 : 0;
    for (int k = -kmax; k <= kmax; ++k)
        for (int m = -mmax; m <= mmax; ++m)
            for (int n = -mmax; n <= mmax; ++n) {
                double lam = k * k + 4.0 * kPi * kPi * (m * m + n * n);
                if (lam > bound + 1e-12) continue;
                long long key = std::llround(lam * 1e9);
                auto& e = acc[key];
                e.first = lam;
                e.second += 1;
            }
    std::vector<std::pair<double, int>> out;
    for (auto& [k, v] : acc) out.push_back(v);
    return out;
}

/**
 * @brief Weights delta in [lo, hi] at which the model operator has solutions e^{-delta t} p(t).
 *
 * dbar on R x S^1: the mode e^{i k theta} solves a' - k a = 0, so the weights are the integers.
 * Laplacian on R x X: a'' = lambda a gives e^{+-sqrt(lambda) t}; lambda = 0 gives 1 and t.
 */
inline std::vector<CriticalWeight> critical_weights(OpKind op, const CrossSection& cs, double lo, double hi) {
    std::vector<CriticalWeight> out;
    if (hi < lo) return out;
    if (op == OpKind::dbar) {
        if (cs.with_torus) throw PreconditionError("critical_weights: dbar is defined on R x S^1 only");
        for (long k = static_cast<long>(std::ceil(lo)); k <= static_cast<long>(std::floor(hi)); ++k)
            out.push_back({static_cast<double>(k), 1, 0});
        return out;
    }
    const double r = std::max(std::abs(lo), std::abs(hi));
    for (auto [lam, mult] : cross_section_spectrum(cs, r * r)) {
        const double k = std::sqrt(lam);
        if (lam == 0.0) {
            if (lo <= 0.0 && 0.0 <= hi) out.push_back({0.0, 2 * mult, 1});
            continue;
        }
        if (lo <= -k && -k <= hi) out.push_back({-k, mult, 0});
        if (lo <= k && k <= hi) out.push_back({k, mult, 0});
    }
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.value < b.value; });
    return out;
}

inline bool is_critical(OpKind op, const CrossSection& cs, double delta, double tol = 1e-9) {
    for (const auto& w : critical_weights(op, cs, delta - 1.0, delta + 1.0))
        if (std::abs(w.value - delta) <= tol) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Cokernel bookkeeping

/// A linear functional f -> sum_i w_i conj(kernel(t_i)) f_mode(t_i) on one cross-section mode.
struct CokernelFunctional {
    std::string name;
    double eigenvalue = 0.0;              ///< cross-section eigenvalue of the mode it acts on
    std::function<double(double)> kernel;  ///< adjoint kernel element as a function of t
};

/**
 * @brief Conditions a right-hand side must satisfy for the Laplacian at weight delta.
 *
 * Bi-infinite: each mode whose exponent sqrt(lambda) lies below delta contributes its
 * subexponential adjoint solutions (1 and t at lambda = 0; e^{+-kt} otherwise).
 * Half-cylinder with Dirichlet data: the adjoint solutions must vanish at t = 0 (t and sinh kt).
 */
inline std::vector<CokernelFunctional> cokernel_conditions(DomainKind dom, double delta, const CrossSection& cs = {}) {
    if (!(delta > 0.0)) throw PreconditionError("cokernel_conditions: delta must be positive");
    if (is_critical(OpKind::laplacian, cs, delta)) throw PreconditionError("cokernel_conditions: critical weight");
    std::vector<CokernelFunctional> out;
    for (auto [lam, mult] : cross_section_spectrum(cs, delta * delta)) {
        const double k = std::sqrt(lam);
        for (int m = 0; m < mult; ++m) {
            std::string tag = "lambda=" + std::to_string(lam) + "#" + std::to_string(m);
            if (dom == DomainKind::bi_infinite) {
                if (lam == 0.0) {
                    out.push_back({"<f,1>", lam, [](double) { return 1.0; }});
                    out.push_back({"<f,t>", lam, [](double t) { return t; }});
                } else {
                    out.push_back({"<f,e^{kt}> " + tag, lam, [k](double t) { return std::exp(k * t); }});
                    out.push_back({"<f,e^{-kt}> " + tag, lam, [k](double t) { return std::exp(-k * t); }});
                }
            } else {
                if (lam == 0.0)
                    out.push_back({"<f,t> (double integral of <f,1>)", lam, [](double t) { return t; }});
                else
                    out.push_back({"<f,sinh kt> " + tag, lam, [k](double t) { return std::sinh(k * t); }});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Periodic transforms on stored axes

/// Forward (normalized) or inverse DFT along every stored periodic axis.
inline void transform_periodic(ComplexField& f, bool forward) {
    const auto d = f.dims();
    std::array<int, 4> stride{d[1] * d[2] * d[3], d[2] * d[3], d[3], 1};
    for (int a = 1; a < 4; ++a) {
        const int n = d[a];
        if (n == 1) continue;
        auto& p = detail::fft_cache().get(n);
        auto* b = reinterpret_cast<cplx*>(p.buf);
        for (std::size_t base = 0; base < f.size(); ++base) {
            if ((base / stride[a]) % n != 0) continue;
            for (int m = 0; m < n; ++m) b[m] = f[base + static_cast<std::size_t>(m) * stride[a]];
            fftw_execute(forward ? p.fwd : p.bwd);
            const double s = forward ? 1.0 / n : 1.0;
            for (int m = 0; m < n; ++m) f[base + static_cast<std::size_t>(m) * stride[a]] = b[m] * s;
        }
    }
}

/// Cross-section eigenvalue of stored mode (j, k, l).
inline double mode_eigenvalue(const ComplexField& f, int j, int k, int l) {
    const auto d = f.dims();
    double kt = detail::wavenumber(j, d[1]);
    double m = detail::wavenumber(k, d[2]);
    double n = detail::wavenumber(l, d[3]);
    return kt * kt + 4.0 * kPi * kPi * (m * m + n * n);
}

// ---------------------------------------------------------------------------
// Mode ODE solves

namespace detail {

/// Local decay rate of a sampled tail, falling back when the samples do not look exponential.
inline double tail_rate(cplx inner, cplx outer, double h, double fallback) {
    if (std::abs(outer) == 0.0 || std::abs(inner) == 0.0) return fallback;
    cplx q = inner / outer;
    if (std::abs(q.imag()) > 1e-8 * std::abs(q) || q.real() <= 1.0) return fallback;
    return std::log(q.real()) / h;
}

}  // namespace detail

/// Where the free constants of a mode solve are fixed.
enum class ModeEnds {
    weighted,   ///< half-line; left end keeps e^{delta t} a stationary
    dirichlet,  ///< half-line; a = 0 at the left end
    bi          ///< both ends transparent
};

struct ModeSolution {
    std::vector<cplx> a;
    double residual = 0.0;  ///< max interior residual relative to max |rhs|
};

/**
 * @brief Solve a'' - lambda a = f on the t-samples of a grid.
 *
 * The right end always carries the transparent relation a' + k a = -f_T/(sigma + k) that
 * removes e^{kt}; sigma is the local decay rate of f. When k < delta the slow solution
 * e^{-kt} is removed too and the left end is left free (weighted) or the data must meet
 * the cokernel condition (dirichlet, bi).
 */
inline ModeSolution solve_laplacian_mode(const std::vector<cplx>& f, double h, double t0, double lambda,
                                         double delta, ModeEnds ends) {
    const int n = static_cast<int>(f.size());
    if (n < 4) throw PreconditionError("mode solve needs at least 4 samples");
    const double k = std::sqrt(lambda);
    const double h2 = h * h;
    using SpMat = Eigen::SparseMatrix<cplx>;
    std::vector<Eigen::Triplet<cplx>> trip;
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
    const double sig_r = detail::tail_rate(f[n - 2], f[n - 1], h, std::max(delta, 1e-3));
    const double sig_l = detail::tail_rate(f[1], f[0], h, std::max(delta, 1e-3));
    const bool slow = k < delta;

    for (int i = 1; i < n - 1; ++i) {
        trip.emplace_back(i, i - 1, 1.0 / h2);
        trip.emplace_back(i, i, -2.0 / h2 - lambda);
        trip.emplace_back(i, i + 1, 1.0 / h2);
        rhs[i] = f[i];
    }
    // right end: ghost a_n = a_{n-2} + 2h(gamma - k a_{n-1})
    const cplx gam_r = -f[n - 1] / (sig_r + k);
    // the last row is the ODE with the ghost eliminated, unless the bi-infinite zero mode
    // needs it for the normalization a(+inf) = 0
    const bool bi_zero = ends == ModeEnds::bi && lambda == 0.0;
    if (bi_zero) {
        trip.emplace_back(n - 1, n - 1, 1.0);
        rhs[n - 1] = f[n - 1] / (sig_r * sig_r);
    } else {
        trip.emplace_back(n - 1, n - 2, 2.0 / h2);
        trip.emplace_back(n - 1, n - 1, -2.0 / h2 - lambda - 2.0 * k / h);
        rhs[n - 1] = f[n - 1] - 2.0 * gam_r / h;
    }
    // left end
    if (ends == ModeEnds::dirichlet) {
        trip.emplace_back(0, 0, 1.0);
        rhs[0] = 0.0;
    } else if (ends == ModeEnds::bi) {
        // a' - k a = f_L/(sigma + k); ghost a_{-1} = a_1 - 2h(gamma + k a_0)
        const cplx gam_l = f[0] / (sig_l + k);
        trip.emplace_back(0, 1, 2.0 / h2);
        trip.emplace_back(0, 0, -2.0 / h2 - lambda - 2.0 * k / h);
        rhs[0] = f[0] + 2.0 * gam_l / h;
    } else if (!slow) {
        // (e^{delta t} a)' = 0: a' + delta a = 0, ghost a_{-1} = a_1 + 2h delta a_0
        trip.emplace_back(0, 1, 2.0 / h2);
        trip.emplace_back(0, 0, -2.0 / h2 + 2.0 * delta / h - lambda);
        rhs[0] = f[0];
    } else {
        // no condition at the left; pin the slow solution at the right instead
        cplx p = f[n - 1] / (sig_r * sig_r - lambda);
        if (std::abs(sig_r * sig_r - lambda) < 1e-12) throw NumericalError("mode solve: resonant tail");
        trip.emplace_back(0, n - 1, 1.0);
        rhs[0] = p;
    }
    SpMat A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<SpMat> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw NumericalError("mode solve: singular system");
    Eigen::VectorXcd a = lu.solve(rhs);
    for (int it = 0; it < 2; ++it) {
        Eigen::VectorXcd r = rhs - A * a;
        a += lu.solve(r);
    }
    ModeSolution out;
    out.a.assign(a.data(), a.data() + n);
    double fmax = 0.0, rmax = 0.0;
    for (int i = 0; i < n; ++i) fmax = std::max(fmax, std::abs(f[i]));
    for (int i = 1; i < n - 1; ++i) {
        cplx r = (a[i + 1] - 2.0 * a[i] + a[i - 1]) / h2 - lambda * a[i] - f[i];
        rmax = std::max(rmax, std::abs(r));
    }
    out.residual = fmax > 0 ? rmax / fmax : rmax;
    (void)t0;
    return out;
}

/**
 * @brief Solve a' - k a = f on a half-line with the box (trapezoidal) scheme.
 *
 * If e^{kt} is not in the weighted space (k > -delta) the solution is integrated in from
 * the right, otherwise the left value is fixed so that e^{delta t} a is stationary there.
 */
inline ModeSolution solve_dbar_mode(const std::vector<cplx>& f, double h, double k, double delta) {
    const int n = static_cast<int>(f.size());
    if (n < 2) throw PreconditionError("mode solve needs at least 2 samples");
    std::vector<cplx> a(n);
    const double c1 = 1.0 + 0.5 * h * k, c2 = 1.0 - 0.5 * h * k;
    if (k > -delta) {
        double sig = detail::tail_rate(n >= 2 ? f[n - 2] : f[n - 1], f[n - 1], h, delta);
        if (std::abs(k + sig) < 1e-12) sig = delta;
        a[n - 1] = -f[n - 1] / (k + sig);
        for (int i = n - 2; i >= 0; --i) a[i] = (a[i + 1] * c2 - 0.5 * h * (f[i] + f[i + 1])) / c1;
    } else {
        a[0] = -f[0] / (k + delta);
        for (int i = 0; i + 1 < n; ++i) a[i + 1] = (a[i] * c1 + 0.5 * h * (f[i] + f[i + 1])) / c2;
    }
    ModeSolution out{a, 0.0};
    double fmax = 0, rmax = 0;
    for (int i = 0; i + 1 < n; ++i) {
        cplx r = (a[i + 1] - a[i]) / h - 0.5 * k * (a[i] + a[i + 1]) - 0.5 * (f[i] + f[i + 1]);
        rmax = std::max(rmax, std::abs(r));
        fmax = std::max(fmax, std::abs(f[i]));
    }
    out.residual = fmax > 0 ? rmax / fmax : rmax;
    return out;
}

/**
 * @brief Per-mode right inverse at a fixed weight.
 *
 * For dbar the mode index is the circle frequency k; for the Laplacian it selects the
 * cross-section eigenvalue lambda = mode_index^2 (circle modes).
 */
inline ModeSolution solve_mode_ode(OpKind op, int mode_index, double delta, const std::vector<cplx>& rhs,
                                   const CylinderGrid& g) {
    CrossSection cs{};
    if (is_critical(op, cs, delta)) throw PreconditionError("solve_mode_ode: critical weight");
    if (static_cast<int>(rhs.size()) != g.n_t) throw PreconditionError("solve_mode_ode: rhs length");
    if (op == OpKind::dbar) return solve_dbar_mode(rhs, g.ht(), mode_index, delta);
    return solve_laplacian_mode(rhs, g.ht(), g.t_min, static_cast<double>(mode_index) * mode_index, delta,
                                ModeEnds::weighted);
}

// ---------------------------------------------------------------------------
// Whole-field solves

/// Box-scheme residual of (d/dt + i d/dtheta) f - F, relative to max |F|.
inline double dbar_box_residual(const ComplexField& f, const ComplexField& F) {
    auto fth = derivative(f, Axis::theta, 1);
    const auto d = f.dims();
    const int c = f.cross_size();
    const double h = f.grid().ht();
    double rmax = 0.0;
    for (int i = 0; i + 1 < d[0]; ++i)
        for (int n = 0; n < c; ++n) {
            std::size_t p = static_cast<std::size_t>(i) * c + n, q = p + c;
            cplx r = (f[q] - f[p]) / h + cplx(0, 0.5) * (fth[p] + fth[q]) - 0.5 * (F[p] + F[q]);
            rmax = std::max(rmax, std::abs(r));
        }
    double fm = sup_abs(F);
    return fm > 0 ? rmax / fm : rmax;
}

struct DbarSolveReport {
    ComplexField f;
    double residual = 0.0;
    double bound_constant = 0.0;  ///< ||f||_delta / ||F||_delta
};

/// Right inverse of d/dt + i d/dtheta on a half-cylinder at non-integer weight.
inline DbarSolveReport solve_dbar_cylinder(const ComplexField& F, double delta) {
    if (std::abs(delta - std::round(delta)) < 1e-9) throw PreconditionError("solve_dbar_cylinder: integer weight");
    ComplexField hat = F;
    transform_periodic(hat, true);
    const auto d = hat.dims();
    const int c = hat.cross_size();
    const double h = F.grid().ht();
    ComplexField out(F.grid(), F.symmetry());
    std::vector<cplx> line(d[0]);
    for (int j = 0; j < d[1]; ++j) {
        double k = detail::wavenumber(j, d[1]);
        if (d[1] > 1 && 2 * j == d[1]) k = 0.0;  // Nyquist bin carries no odd derivative
        for (int kk = 0; kk < d[2]; ++kk)
            for (int l = 0; l < d[3]; ++l) {
                const int n = (j * d[2] + kk) * d[3] + l;
                for (int i = 0; i < d[0]; ++i) line[i] = hat[static_cast<std::size_t>(i) * c + n];
                auto sol = solve_dbar_mode(line, h, k, delta);
                for (int i = 0; i < d[0]; ++i) out[static_cast<std::size_t>(i) * c + n] = sol.a[i];
            }
    }
    transform_periodic(out, false);
    DbarSolveReport rep{out, dbar_box_residual(out, F), 0.0};
    auto nf = weighted_sup_norm(F, delta, 0).value;
    rep.bound_constant = nf > 0 ? weighted_sup_norm(out, delta, 0).value / nf : 0.0;
    return rep;
}

struct LaplaceSolveReport {
    ScalarField u;
    double residual = 0.0;                       ///< interior relative residual
    std::vector<std::pair<std::string, double>> conditions;  ///< functional values (all within tolerance)
    double decay_rate = kInf;
};

/// Discrete flat Laplacian u_tt + u_thth + u_xx + u_yy (second differences in t).
inline ScalarField flat_laplacian(const ScalarField& u) {
    auto out = derivative(u, Axis::t, 2);
    out += derivative(u, Axis::theta, 2);
    out += derivative(u, Axis::x, 2);
    out += derivative(u, Axis::y, 2);
    return out;
}

/**
 * @brief Solve the flat Laplacian at weight delta below the first positive critical weight.
 *
 * Rejects right-hand sides whose cokernel functionals exceed `tol` relative to the data scale.
 */
inline LaplaceSolveReport solve_laplacian_weighted(const ScalarField& f, double delta, DomainKind dom,
                                                   double tol = 1e-4) {
    const auto& g = f.grid();
    CrossSection cs{f.dims()[2] > 1 || f.dims()[3] > 1};
    if (!(delta > 0.0)) throw PreconditionError("solve_laplacian_weighted: delta must be positive");
    if (is_critical(OpKind::laplacian, cs, delta)) throw PreconditionError("solve_laplacian_weighted: critical weight");
    if (dom == DomainKind::half_dirichlet && g.t_min != 0.0)
        throw PreconditionError("solve_laplacian_weighted: half-cylinder must start at t = 0");
    auto hat = to_complex(f);
    transform_periodic(hat, true);
    const auto d = hat.dims();
    const int c = hat.cross_size();
    const double h = g.ht();
    auto w = trapezoid_weights(g);
    const double fsup = sup_abs(f);

    LaplaceSolveReport rep;
    ComplexField out(g, f.symmetry());
    std::vector<cplx> line(d[0]);
    for (int j = 0; j < d[1]; ++j)
        for (int k = 0; k < d[2]; ++k)
            for (int l = 0; l < d[3]; ++l) {
                const int n = (j * d[2] + k) * d[3] + l;
                const double lam = mode_eigenvalue(hat, j, k, l);
                for (int i = 0; i < d[0]; ++i) line[i] = hat[static_cast<std::size_t>(i) * c + n];
                const double kk = std::sqrt(lam);
                if (kk < delta) {
                    // cokernel functionals of this mode
                    std::vector<std::pair<std::string, std::function<double(double)>>> fun;
                    if (dom == DomainKind::bi_infinite) {
                        if (lam == 0.0) {
                            fun.push_back({"<f,1>", [](double) { return 1.0; }});
                            fun.push_back({"<f,t>", [](double t) { return t; }});
                        } else {
                            fun.push_back({"<f,e^{kt}>", [kk](double t) { return std::exp(kk * t); }});
                            fun.push_back({"<f,e^{-kt}>", [kk](double t) { return std::exp(-kk * t); }});
                        }
                    } else {
                        if (lam == 0.0) fun.push_back({"<f,t>", [](double t) { return t; }});
                        else fun.push_back({"<f,sinh kt>", [kk](double t) { return std::sinh(kk * t); }});
                    }
                    for (auto& [name, ker] : fun) {
                        cplx v = 0.0;
                        double sc = 0.0;
                        for (int i = 0; i < d[0]; ++i) {
                            v += w[i] * ker(g.t(i)) * line[i];
                            sc += w[i] * std::abs(ker(g.t(i))) * std::abs(line[i]);
                        }
                        double kmass = 0.0;
                        for (int i = 0; i < d[0]; ++i) kmass += w[i] * std::abs(ker(g.t(i)));
                        sc += 1e-10 * fsup * kmass;
                        double rel = sc > 0 ? std::abs(v) / sc : 0.0;
                        if (rel > tol)
                            throw PreconditionError("cokernel condition " + name + " violated: value " +
                                                    std::to_string(std::abs(v)));
                        rep.conditions.push_back({name, rel});
                    }
                }
                ModeEnds ends = dom == DomainKind::bi_infinite ? ModeEnds::bi : ModeEnds::dirichlet;
                auto sol = solve_laplacian_mode(line, h, g.t_min, lam, delta, ends);
                for (int i = 0; i < d[0]; ++i) out[static_cast<std::size_t>(i) * c + n] = sol.a[i];
            }
    transform_periodic(out, false);
    rep.u = real_part(out);
    // residual in physical space on interior samples
    auto lap = flat_laplacian(rep.u);
    double rmax = 0.0;
    for (int i = 1; i < g.n_t - 1; ++i)
        for (int n = 0; n < rep.u.cross_size(); ++n) {
            std::size_t p = static_cast<std::size_t>(i) * rep.u.cross_size() + n;
            rmax = std::max(rmax, std::abs(lap[p] - f[p]));
        }
    double fm = sup_abs(f);
    rep.residual = fm > 0 ? rmax / fm : rmax;
    if (sup_abs(rep.u) > 0) {
        double t_hi = g.t_max, t_lo = std::max(0.0, g.t_min) + 0.5 * (g.t_max - std::max(0.0, g.t_min));
        rep.decay_rate = fit_decay_rate(rep.u, t_lo, t_hi).rate;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Diagnostics

/**
 * @brief Condition number of the weighted mode operator on a periodic t-window.
 *
 * Conjugating a'' - lambda a by e^{-delta t} gives b'' - 2 delta b' + (delta^2 - lambda) b,
 * discretized spectrally on a window of length `window` with `n` samples and solved densely.
 * Returns the largest condition number over the cross-section modes with lambda <= lambda_max.
 */
inline double mode_condition_number(double delta, const CrossSection& cs, double lambda_max, double window = 8 * kPi,
                                    int n = 32) {
    // spectral differentiation matrix on the window
    Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<cplx> e(n, 0.0);
        e[j] = 1.0;
        detail::spectral_line(e, 1, window);
        for (int i = 0; i < n; ++i) D(i, j) = e[i];
    }
    Eigen::MatrixXcd D2 = D * D;
    double worst = 0.0;
    for (auto [lam, mult] : cross_section_spectrum(cs, lambda_max)) {
        Eigen::MatrixXcd A = D2 - 2.0 * delta * D +
                             (delta * delta - lam) * Eigen::MatrixXcd::Identity(n, n);
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A);
        auto s = svd.singularValues();
        double c = s(n - 1) > 0 ? s(0) / s(n - 1) : kInf;
        worst = std::max(worst, c);
    }
    return worst;
}

/// Largest ||u||_delta / ||f||_delta over random decaying right-hand sides on a half-line mode.
inline double estimate_bound_constant(double delta, int mode_index, const CylinderGrid& g, int trials,
                                      unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::uniform_real_distribution<double> R(0.0, 1.0);
    double best = 0.0;
    for (int tr = 0; tr < trials; ++tr) {
        // sum of smooth decaying pieces with rates at least delta
        double a1 = U(rng), a2 = U(rng), c = 1.0 + 4.0 * R(rng), s = 0.5 + R(rng);
        double r2 = delta + 0.2 + R(rng);
        std::vector<cplx> f(g.n_t);
        for (int i = 0; i < g.n_t; ++i) {
            double t = g.t(i);
            f[i] = a1 * std::exp(-delta * t) * std::exp(-0.5 * std::pow((t - c) / s, 2)) * 4.0 +
                   a2 * std::exp(-r2 * t);
        }
        auto sol = solve_laplacian_mode(f, g.ht(), g.t_min, static_cast<double>(mode_index) * mode_index, delta,
                                        ModeEnds::weighted);
        double nu = 0, nf = 0;
        for (int i = 0; i < g.n_t; ++i) {
            double e = std::exp(delta * g.t(i));
            nu = std::max(nu, e * std::abs(sol.a[i]));
            nf = std::max(nf, e * std::abs(f[i]));
        }
        best = std::max(best, nu / nf);
    }
    return best;
}

}  // namespace acyl
