#pragma once
// Complex Monge-Ampere solver on the model cylinder: continuity path, damped Newton, oracles and decay diagnostics.

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "acyl/cyl_elliptic.hpp"
#include "acyl/kahler_kernel.hpp"

namespace acyl {

// ---------------------------------------------------------------------------
// Discrete operators used by the solver: reflected ghosts in t, spectral in the periodic directions

/// t-derivative with reflected ghost samples (u_t = 0 at both ends).
template <class T>
Field<T> neumann_t(const Field<T>& f, int order) {
    Field<T> out(f.grid(), f.symmetry());
    const int n = f.dims()[0], c = f.cross_size();
    const double h = f.grid().ht();
    for (int i = 0; i < n; ++i) {
        const int lo = i == 0 ? 1 : i - 1, hi = i == n - 1 ? n - 2 : i + 1;
        for (int m = 0; m < c; ++m) {
            const std::size_t p = static_cast<std::size_t>(i) * c + m;
            const T a = f[static_cast<std::size_t>(lo) * c + m], b = f[static_cast<std::size_t>(hi) * c + m];
            if (order == 1) out[p] = (b - a) / (2.0 * h);
            else out[p] = (a - 2.0 * f[p] + b) / (h * h);
        }
    }
    return out;
}

/// The solver's complex Hessian (1/4-scaled, as iddbar).
inline Form11Field solver_hessian(const ScalarField& u) {
    auto ut = neumann_t(u, 1);
    auto uth = derivative(u, Axis::theta, 1);
    ScalarField h11 = neumann_t(u, 2) + derivative(u, Axis::theta, 2);
    ScalarField h22 = derivative(u, Axis::x, 2) + derivative(u, Axis::y, 2);
    ScalarField re = derivative(ut, Axis::x, 1) + derivative(uth, Axis::y, 1);
    ScalarField im = derivative(ut, Axis::y, 1) - derivative(uth, Axis::x, 1);
    h11 *= 0.25;
    h22 *= 0.25;
    ComplexField h12(u.grid(), re.symmetry());
    for (std::size_t n = 0; n < h12.size(); ++n) h12[n] = 0.25 * cplx(re[n], im[n]);
    return {std::move(h11), std::move(h12), std::move(h22)};
}

/// Window mean of u (trapezoid in t, cross-section mean): the pinned kernel coordinate.
inline double window_mean(const ScalarField& u) {
    const auto& g = u.grid();
    auto w = trapezoid_weights(g);
    auto m = cross_mean(u);
    double s = 0.0;
    for (int i = 0; i < g.n_t; ++i) s += w[i] * m[i];
    return s / (g.t_max - g.t_min);
}

/// Window t-moment of u, reported alongside the mean.
inline double t_moment(const ScalarField& u) {
    const auto& g = u.grid();
    auto w = trapezoid_weights(g);
    auto m = cross_mean(u);
    double s = 0.0;
    for (int i = 0; i < g.n_t; ++i) s += w[i] * g.t(i) * m[i];
    return s / (g.t_max - g.t_min);
}

inline ScalarField normalized(ScalarField u) {
    const double v = window_mean(u);
    for (auto& x : u.data()) x -= v;
    return u;
}

/// Remove the L^2 projection onto span{1, t} over the window (the bi-infinite kernel).
inline ScalarField kernel_projected(ScalarField u) {
    const auto& g = u.grid();
    auto w = trapezoid_weights(g);
    const int c = u.cross_size();
    double s0 = 0, s1 = 0, s2 = 0, m0 = 0, m1 = 0;
    for (int i = 0; i < g.n_t; ++i) {
        double row = 0;
        for (int k = 0; k < c; ++k) row += u[static_cast<std::size_t>(i) * c + k];
        row /= c;
        const double t = g.t(i);
        s0 += w[i], s1 += w[i] * t, s2 += w[i] * t * t, m0 += w[i] * row, m1 += w[i] * t * row;
    }
    const double det = s0 * s2 - s1 * s1, a = (m0 * s2 - m1 * s1) / det, b = (s0 * m1 - s1 * m0) / det;
    for (int i = 0; i < g.n_t; ++i)
        for (int k = 0; k < c; ++k) u[static_cast<std::size_t>(i) * c + k] -= a + b * g.t(i);
    return u;
}

/// Discrete F(u) = log det(h + H u) - log det h; throws PositivityError.
inline ScalarField solver_ma(const Form11Field& w, const ScalarField& u) {
    Form11Field wu = w + solver_hessian(u);
    require_positive(wu, "w + i ddbar u");
    return ma_ratio(w, wu);
}

/// Trapezoid integral of (e^f - 1) omega^2 and of its absolute value.
inline std::pair<double, double> integral_condition(const Form11Field& w, const ScalarField& f) {
    Symmetry s = join(w.symmetry(), f.symmetry());
    auto top = top_power(w.expanded(s));
    auto fe = f.expand(s);
    ScalarField a(top.grid(), s), b(top.grid(), s);
    for (std::size_t n = 0; n < a.size(); ++n) {
        a[n] = (std::exp(fe[n]) - 1.0) * top[n];
        b[n] = std::abs(a[n]);
    }
    return {integrate(a), integrate(b)};
}

// ---------------------------------------------------------------------------
// Linear algebra helpers

/// Restarted GMRES with right preconditioning; returns the relative residual reached.
template <class Apply, class Precond>
double gmres(const Apply& A, const Precond& M, const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol, int restart,
             int max_iter, int* iterations = nullptr) {
    const Eigen::Index n = b.size();
    const double bn = b.norm();
    if (x.size() != n) x = Eigen::VectorXd::Zero(n);
    if (bn == 0.0) {
        x.setZero();
        return 0.0;
    }
    int total = 0;
    double rel = 1.0;
    while (total < max_iter) {
        Eigen::VectorXd r = b - A(x);
        double beta = r.norm();
        rel = beta / bn;
        if (rel <= tol) break;
        Eigen::MatrixXd V(n, restart + 1), H = Eigen::MatrixXd::Zero(restart + 1, restart);
        std::vector<double> cs(restart), sn(restart);
        Eigen::VectorXd gvec = Eigen::VectorXd::Zero(restart + 1);
        gvec[0] = beta;
        V.col(0) = r / beta;
        int k = 0;
        for (; k < restart && total < max_iter; ++k, ++total) {
            Eigen::VectorXd w = A(M(V.col(k)));
            for (int j = 0; j <= k; ++j) {
                H(j, k) = w.dot(V.col(j));
                w -= H(j, k) * V.col(j);
            }
            H(k + 1, k) = w.norm();
            if (H(k + 1, k) > 0) V.col(k + 1) = w / H(k + 1, k);
            for (int j = 0; j < k; ++j) {
                const double t = cs[j] * H(j, k) + sn[j] * H(j + 1, k);
                H(j + 1, k) = -sn[j] * H(j, k) + cs[j] * H(j + 1, k);
                H(j, k) = t;
            }
            const double d = std::hypot(H(k, k), H(k + 1, k));
            cs[k] = H(k, k) / d;
            sn[k] = H(k + 1, k) / d;
            H(k, k) = d;
            H(k + 1, k) = 0.0;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] = cs[k] * gvec[k];
            rel = std::abs(gvec[k + 1]) / bn;
            if (rel <= tol || d == 0.0) {
                ++k;
                ++total;
                break;
            }
        }
        Eigen::VectorXd y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(gvec.head(k));
        x += M(V.leftCols(k) * y);
        if (rel <= tol) break;
    }
    if (iterations) *iterations = total;
    return (b - A(x)).norm() / bn;
}

// ---------------------------------------------------------------------------
// Solver

struct MaOptions {
    double tol = 1e-11;            ///< sup residual of F(u) - f - c
    int max_newton = 40;
    int max_halvings = 30;
    double gmres_tol = 1e-13;
    int gmres_restart = 60;
    int gmres_max_iter = 2000;
    double integral_tol = 1e-3;    ///< |int (e^f - 1) w^2| / int |e^f - 1| w^2
};

struct ContinuityState {
    double tau = 0.0;
    ScalarField u;
    ScalarField f_tau;
    double compat_shift = 0.0;  ///< scalar c with F(u) = f + c absorbing the discrete compatibility defect
    double residual_norm = 0.0;
    int newton_iterations = 0;
    int path_steps = 0;
    int bisections = 0;
    double kernel_normalization = 0.0;  ///< window mean (pinned)
    double kernel_moment = 0.0;         ///< window t-moment (reported)
    double min_eigenvalue = 0.0;
    double contraction_order = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> residual_history;
    std::vector<double> taus;
};

inline ScalarField path_f(const ScalarField& f, double tau) {
    ScalarField out = f;
    for (auto& v : out.data()) v = std::log1p(tau * std::expm1(v));
    return out;
}

/// Observed order log(r_{k+1}/r_k) / log(r_k/r_{k-1}) over the last three residuals above the noise floor.
inline double contraction_order(const std::vector<double>& r, double floor) {
    std::vector<double> q;
    for (double v : r)
        if (v > floor) q.push_back(v);
    if (q.size() < 3) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t k = q.size() - 2;
    return std::log(q[k + 1] / q[k]) / std::log(q[k] / q[k - 1]);
}

class MaSolver {
public:
    MaSolver(Form11Field omega, MaOptions opt = {}) : w_(std::move(omega)), opt_(opt) {
        require_positive(w_, "background form");
        if (w_.grid().half_cylinder) throw PreconditionError("ma solver: needs a bi-infinite grid");
    }

    const Form11Field& omega() const { return w_; }
    const MaOptions& options() const { return opt_; }

    /// Damped Newton for F(u) = f + c with the end normalization.
    ContinuityState newton_solve(const ScalarField& f, const ScalarField* u_init = nullptr, double delta = 0.0) const {
        check_integral(f);
        if (delta > 0.0) check_decay(f, delta);
        Symmetry s = join(w_.symmetry(), f.symmetry());
        if (u_init) s = join(s, u_init->symmetry());
        const Form11Field w = w_.expanded(s);
        const ScalarField fe = f.expand(s);
        ContinuityState st;
        st.tau = 1.0;
        st.f_tau = fe;
        st.u = u_init ? u_init->expand(s) : ScalarField(w.grid(), s);
        double c = 0.0;
        auto residual = [&](const ScalarField& u, double cc, ScalarField& R, double& norm) {
            R = solver_ma(w, u);
            norm = std::abs(window_mean(u));
            for (std::size_t n = 0; n < R.size(); ++n) {
                R[n] -= fe[n] + cc;
                norm = std::max(norm, std::abs(R[n]));
            }
        };
        ScalarField R;
        double rn = 0.0;
        residual(st.u, c, R, rn);
        st.residual_history.push_back(rn);
        double floor = std::max(opt_.tol, roundoff_floor(w, st.u));
        int it = 0;
        while (rn > floor && it < opt_.max_newton) {
            ++it;
            auto [v, dc] = newton_direction(w, st.u, R, floor);
            double alpha = 1.0;
            int halvings = 0;
            for (;;) {
                ScalarField trial = st.u;
                for (std::size_t n = 0; n < trial.size(); ++n) trial[n] += alpha * v[n];
                ScalarField Rt;
                double rt = kInf;
                try {
                    residual(trial, c + alpha * dc, Rt, rt);
                } catch (const PositivityError&) {
                    rt = kInf;
                }
                if (rt <= rn || (rt < 10.0 * floor && std::isfinite(rt))) {
                    st.u = std::move(trial);
                    c += alpha * dc;
                    R = std::move(Rt);
                    rn = rt;
                    break;
                }
                if (++halvings > opt_.max_halvings)
                    throw NumericalError("newton: damping exhausted at residual " + std::to_string(rn));
                alpha *= 0.5;
            }
            st.residual_history.push_back(rn);
            floor = std::max(opt_.tol, roundoff_floor(w, st.u));
            if (halvings > 0 && rn <= 10.0 * floor) break;
        }
        if (rn > 10.0 * floor) throw NumericalError("newton: no convergence, residual " + std::to_string(rn));
        st.compat_shift = c;
        st.residual_norm = rn;
        st.newton_iterations = it;
        st.kernel_normalization = window_mean(st.u);
        st.kernel_moment = t_moment(st.u);
        st.min_eigenvalue = positivity_spectrum(w + solver_hessian(st.u)).global_min;
        st.contraction_order = contraction_order(st.residual_history, 1e-12);
        return st;
    }

    /// Continuity path f_tau = log(1 + tau (e^f - 1)) with uniform steps and automatic bisection.
    ContinuityState continuity_solve(const ScalarField& f, int steps, const ScalarField* u_init = nullptr,
                                     double delta = 0.0) const {
        if (steps < 1) throw PreconditionError("continuity: need at least one step");
        check_integral(f);
        std::vector<double> todo;
        for (int k = steps; k >= 1; --k) todo.push_back(static_cast<double>(k) / steps);
        ContinuityState st;
        Symmetry s = join(w_.symmetry(), f.symmetry());
        if (u_init) s = join(s, u_init->symmetry());
        st.u = u_init ? u_init->expand(s) : ScalarField(w_.grid(), s);
        st.f_tau = ScalarField(w_.grid(), s);
        double tau = 0.0;
        int bis = 0, total_newton = 0, path = 0;
        std::vector<double> history, taus;
        while (!todo.empty()) {
            const double next = todo.back();
            try {
                auto fs = path_f(f, next);
                auto ns = newton_solve(fs, &st.u, delta);
                total_newton += ns.newton_iterations;
                history.insert(history.end(), ns.residual_history.begin(), ns.residual_history.end());
                st = std::move(ns);
                tau = next;
                st.tau = tau;
                taus.push_back(tau);
                todo.pop_back();
                ++path;
            } catch (const NumericalError&) {
                if (++bis > 10) throw NumericalError("continuity: path step failed after 10 bisections");
                todo.push_back(0.5 * (tau + next));
            }
        }
        st.bisections = bis;
        st.newton_iterations = total_newton;
        st.path_steps = path;
        st.taus = taus;
        st.residual_history = history;
        return st;
    }

    /// Solve the linearization at u: L_u v - dc = rhs with the end normalization.
    std::pair<ScalarField, double> solve_linear(const ScalarField& u, const ScalarField& rhs) const {
        Symmetry s = join(join(w_.symmetry(), u.symmetry()), rhs.symmetry());
        const Form11Field w = w_.expanded(s);
        ScalarField r = rhs.expand(s);
        for (auto& v : r.data()) v = -v;
        return newton_direction(w, u.expand(s), r, opt_.tol);
    }

    /// Round-off level of F(u): eps sup|u| / (h_t^2 min h11), the error of the second difference in t.
    static double roundoff_floor(const Form11Field& w, const ScalarField& u) {
        const double h = w.grid().ht();
        double m = kInf;
        for (std::size_t n = 0; n < w.h11.size(); ++n) m = std::min(m, w.h11[n]);
        if (!(m > 0.0)) return 0.0;
        return 4.0 * std::numeric_limits<double>::epsilon() * sup_abs(u) / (h * h * m);
    }

private:
    void check_integral(const ScalarField& f) const {
        auto [I, A] = integral_condition(w_, f);
        if (A > 0.0 && std::abs(I) > opt_.integral_tol * A)
            throw PreconditionError("integral condition violated: int (e^f - 1) w^2 = " + std::to_string(I) +
                                    " (relative " + std::to_string(std::abs(I) / A) + ")");
    }

    static void check_decay(const ScalarField& f, double delta) {
        const auto& g = f.grid();
        std::vector<double> t, v;
        const int c = f.cross_size();
        for (int i = 0; i < g.n_t; ++i) {
            double m = 0;
            for (int k = 0; k < c; ++k) m = std::max(m, std::abs(f[static_cast<std::size_t>(i) * c + k]));
            t.push_back(std::abs(g.t(i)));
            v.push_back(m);
        }
        const double T = std::min(-g.t_min, g.t_max);
        auto fit = fit_decay_series(t, v, 0.25 * T, 0.75 * T);
        if (fit.samples >= 4 && fit.rate < delta - 0.1)
            throw PreconditionError("f decays at rate " + std::to_string(fit.rate) + " < delta");
    }

    /// Newton direction: solve L_u v - dc = -R, N(v) = -N(u).
    std::pair<ScalarField, double> newton_direction(const Form11Field& w, const ScalarField& u,
                                                    const ScalarField& R, double floor) const {
        const auto& g = w.grid();
        const Symmetry s = w.symmetry();
        const Form11Field wu = w + solver_hessian(u);
        const std::size_t N = wu.size();
        // contraction coefficients
        std::vector<double> A(N), C(N);
        std::vector<cplx> B(N);
        for (std::size_t n = 0; n < N; ++n) {
            const double d = det(wu.h11[n], wu.h12[n], wu.h22[n]);
            A[n] = wu.h22[n] / d;
            C[n] = wu.h11[n] / d;
            B[n] = wu.h12[n] / d;
        }
        const auto dims = wu.h11.dims();
        const int nt = dims[0], cs = wu.h11.cross_size();
        // preconditioner coefficients: cross-section means
        std::vector<double> p(nt, 0.0), q(nt, 0.0);
        for (int i = 0; i < nt; ++i) {
            for (int m = 0; m < cs; ++m) {
                p[i] += A[static_cast<std::size_t>(i) * cs + m];
                q[i] += C[static_cast<std::size_t>(i) * cs + m];
            }
            p[i] /= cs;
            q[i] /= cs;
        }
        const double h = g.ht(), h2 = h * h;
        // bordered zero-mode system: [L0 -1; N 0]
        using SpMat = Eigen::SparseMatrix<double>;
        std::vector<Eigen::Triplet<double>> trip;
        for (int i = 0; i < nt; ++i) {
            const int lo = i == 0 ? 1 : i - 1, hi = i == nt - 1 ? nt - 2 : i + 1;
            const double k = 0.25 * p[i] / h2;
            trip.emplace_back(i, lo, k);
            trip.emplace_back(i, hi, k);
            trip.emplace_back(i, i, -2.0 * k);
            trip.emplace_back(i, nt, -1.0);
        }
        {
            auto tw = trapezoid_weights(g);
            for (int i = 0; i < nt; ++i) trip.emplace_back(nt, i, tw[i] / (g.t_max - g.t_min));
        }
        SpMat Z(nt + 1, nt + 1);
        Z.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<SpMat> zlu;
        zlu.compute(Z);
        if (zlu.info() != Eigen::Success) throw NumericalError("newton: singular zero-mode system");

        auto apply = [&](const Eigen::VectorXd& z) {
            ScalarField v(g, s);
            for (std::size_t n = 0; n < N; ++n) v[n] = z[static_cast<Eigen::Index>(n)];
            const double dc = z[static_cast<Eigen::Index>(N)];
            auto H = solver_hessian(v).expanded(s);
            Eigen::VectorXd out(N + 1);
            for (std::size_t n = 0; n < N; ++n)
                out[static_cast<Eigen::Index>(n)] =
                    A[n] * H.h11[n] + C[n] * H.h22[n] - 2.0 * std::real(B[n] * std::conj(H.h12[n])) - dc;
            out[static_cast<Eigen::Index>(N)] = window_mean(v);
            return out;
        };
        auto precond = [&](const Eigen::VectorXd& z) {
            ComplexField hat(g, s);
            for (std::size_t n = 0; n < N; ++n) hat[n] = z[static_cast<Eigen::Index>(n)];
            transform_periodic(hat, true);
            Eigen::VectorXd out(N + 1);
            double dc = 0.0;
            std::vector<cplx> rhs(nt), sol(nt), cp(nt);
            for (int m = 0; m < cs; ++m) {
                const int j = m / (dims[2] * dims[3]), kx = (m / dims[3]) % dims[2], ly = m % dims[3];
                const double kt = detail::wavenumber(j, dims[1]);
                const double mx = detail::wavenumber(kx, dims[2]), ny = detail::wavenumber(ly, dims[3]);
                const double lt = kt * kt, lx = 4.0 * kPi * kPi * (mx * mx + ny * ny);
                for (int i = 0; i < nt; ++i) rhs[i] = hat[static_cast<std::size_t>(i) * cs + m];
                if (m == 0) {
                    Eigen::VectorXd br(nt + 1), bi(nt + 1);
                    for (int i = 0; i < nt; ++i) br[i] = rhs[i].real(), bi[i] = rhs[i].imag();
                    br[nt] = z[static_cast<Eigen::Index>(N)];
                    bi[nt] = 0.0;
                    Eigen::VectorXd xr = zlu.solve(br), xi = zlu.solve(bi);
                    for (int i = 0; i < nt; ++i) sol[i] = cplx(xr[i], xi[i]);
                    dc = xr[nt];
                } else {
                    // Thomas algorithm for 1/4 p (D_tt - lt) - 1/4 q lx
                    std::vector<double> a(nt), b(nt), cc(nt);
                    for (int i = 0; i < nt; ++i) {
                        const double k = 0.25 * p[i] / h2;
                        a[i] = k, cc[i] = k;
                        b[i] = -2.0 * k - 0.25 * (p[i] * lt + q[i] * lx);
                    }
                    cc[0] *= 2.0;
                    a[nt - 1] *= 2.0;
                    std::vector<double> cprime(nt);
                    cprime[0] = cc[0] / b[0];
                    cp[0] = rhs[0] / b[0];
                    for (int i = 1; i < nt; ++i) {
                        const double den = b[i] - a[i] * cprime[i - 1];
                        cprime[i] = cc[i] / den;
                        cp[i] = (rhs[i] - a[i] * cp[i - 1]) / den;
                    }
                    sol[nt - 1] = cp[nt - 1];
                    for (int i = nt - 2; i >= 0; --i) sol[i] = cp[i] - cprime[i] * sol[i + 1];
                }
                for (int i = 0; i < nt; ++i) hat[static_cast<std::size_t>(i) * cs + m] = sol[i];
            }
            transform_periodic(hat, false);
            for (std::size_t n = 0; n < N; ++n) out[static_cast<Eigen::Index>(n)] = hat[n].real();
            out[static_cast<Eigen::Index>(N)] = dc;
            return out;
        };
        Eigen::VectorXd b(N + 1);
        for (std::size_t n = 0; n < N; ++n) b[static_cast<Eigen::Index>(n)] = -R[n];
        b[static_cast<Eigen::Index>(N)] = 0.0;
        // the normalization row asks N(u + v) = 0
        ScalarField ue = u.expand(s);
        b[static_cast<Eigen::Index>(N)] = -window_mean(ue);
        Eigen::VectorXd x;
        double rel = gmres(apply, precond, b, x, opt_.gmres_tol, opt_.gmres_restart, opt_.gmres_max_iter);
        if (!(rel < 1e-8) && !(rel * b.lpNorm<Eigen::Infinity>() <= floor)) throw NumericalError("newton: linear solve stalled at relative residual " + std::to_string(rel));
        ScalarField v(g, s);
        for (std::size_t n = 0; n < N; ++n) v[n] = x[static_cast<Eigen::Index>(n)];
        return {v, x[static_cast<Eigen::Index>(N)]};
    }

    Form11Field w_;
    MaOptions opt_;
};

// ---------------------------------------------------------------------------
// Oracles

struct RadialOracleResult {
    std::vector<double> u;  ///< with u(t = 0) = 0 (nearest sample)
    double shift = 0.0;     ///< constant c in F(u) = f + c
};

/**
 * @brief Symmetric reduction: h11 = a/2, h22 = b, so F(u) = f + c reads u'' = 2a(e^{f+c} - 1).
 *
 * Integrated by compensated summation of the reflected-ghost recurrence.
 */
inline RadialOracleResult radial_oracle(const std::vector<double>& a, const std::vector<double>& f, double h,
                                        double t_min, double tol = 1e-3) {
    const std::size_t n = a.size();
    if (f.size() != n || n < 3) throw PreconditionError("radial_oracle: size mismatch");
    double sa = 0.0, sf = 0.0, sabs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        sa += w * a[i];
        sf += w * a[i] * std::exp(f[i]);
        sabs += w * a[i] * std::abs(std::expm1(f[i]));
    }
    const double I = sf - sa;
    if (sabs > 0 && std::abs(I) > tol * sabs)
        throw PreconditionError("radial_oracle: solvability integral " + std::to_string(I * h));
    RadialOracleResult out;
    out.shift = std::log(sa / sf);
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * a[i] * std::expm1(f[i] + out.shift);
    // slopes on half-steps: d_{1/2} = h g_0 / 2, d_{i+1/2} = d_{i-1/2} + h g_i
    out.u.assign(n, 0.0);
    double d = 0.5 * h * g[0], dcomp = 0.0, u = 0.0, ucomp = 0.0;
    auto kahan = [](double& sum, double& comp, double x) {
        const double y = x - comp, t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    };
    for (std::size_t i = 1; i < n; ++i) {
        kahan(u, ucomp, h * d);
        out.u[i] = u;
        kahan(d, dcomp, h * g[i]);
    }
    const std::size_t i0 = static_cast<std::size_t>(std::llround(std::clamp(-t_min / h, 0.0, double(n - 1))));
    const double u0 = out.u[i0];
    for (auto& v : out.u) v -= u0;
    return out;
}

/// Periodic spectral differentiation matrices on [0, period) with n (even) samples.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> periodic_diff_matrices(int n, double period) {
    Eigen::MatrixXd D1 = Eigen::MatrixXd::Zero(n, n), D2 = Eigen::MatrixXd::Zero(n, n);
    const double hx = 2.0 * kPi / n, sc = 2.0 * kPi / period;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            if (j == k) {
                D2(j, k) = (-kPi * kPi / (3.0 * hx * hx) - 1.0 / 6.0) * sc * sc;
                continue;
            }
            const double x = (j - k) * hx / 2.0, sgn = ((j - k) % 2 == 0) ? 1.0 : -1.0;
            D1(j, k) = 0.5 * sgn / std::tan(x) * sc;
            D2(j, k) = -0.5 * sgn / (std::sin(x) * std::sin(x)) * sc * sc;
        }
    return {D1, D2};
}

struct TwodOracleResult {
    ScalarField u;
    double shift = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

/**
 * @brief Dense Newton for the (t,x)-reduced equation (a/2 + u_tt/4)(b + u_xx/4) - u_tx^2/16 = e^{f+c} (a/2) b.
 *
 * a(t) and b are read from a t-only background; derivatives come from explicit dense matrices.
 */
inline TwodOracleResult twod_oracle(const Form11Field& omega, const ScalarField& f, double tol = 1e-11,
                                    double integral_tol = 1e-3) {
    const auto& g = f.grid();
    const int nt = g.n_t, nx = g.n_x;
    if (nt * nx > 128 * 32 + 64) throw PreconditionError("twod_oracle: grid too large for dense Newton");
    if (omega.symmetry() != Symmetry::t_only) throw PreconditionError("twod_oracle: background must be t-only");
    ScalarField fe = f.expand(Symmetry::t_x);
    const int N = nt * nx;
    const double h = g.ht();
    Eigen::MatrixXd Dt = Eigen::MatrixXd::Zero(nt, nt), Dtt = Eigen::MatrixXd::Zero(nt, nt);
    for (int i = 0; i < nt; ++i) {
        const int lo = i == 0 ? 1 : i - 1, hi = i == nt - 1 ? nt - 2 : i + 1;
        Dtt(i, lo) += 1.0 / (h * h);
        Dtt(i, hi) += 1.0 / (h * h);
        Dtt(i, i) -= 2.0 / (h * h);
        Dt(i, hi) += 0.5 / h;
        Dt(i, lo) -= 0.5 / h;
    }
    auto [Dx, Dxx] = periodic_diff_matrices(nx, 1.0);
    std::vector<double> a2(nt), b(nt);
    for (int i = 0; i < nt; ++i) a2[i] = omega.h11[i], b[i] = omega.h22[i];
    // integral gate
    {
        double I = 0, S = 0;
        for (int i = 0; i < nt; ++i)
            for (int k = 0; k < nx; ++k) {
                const double w = (i == 0 || i == nt - 1) ? 0.5 : 1.0;
                const double v = w * std::expm1(fe(i, 0, k, 0)) * a2[i] * b[i];
                I += v, S += std::abs(v);
            }
        if (S > 0 && std::abs(I) > integral_tol * S) throw PreconditionError("twod_oracle: integral condition violated");
    }
    auto idx = [nx](int i, int k) { return i * nx + k; };
    const auto tw = trapezoid_weights(g);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(N);
    double c = 0.0;
    auto derivs = [&](const Eigen::VectorXd& uu, Eigen::MatrixXd& Utt, Eigen::MatrixXd& Uxx, Eigen::MatrixXd& Utx) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> U(uu.data(), nt, nx);
        Utt = Dtt * U;
        Uxx = U * Dxx.transpose();
        Utx = Dt * U * Dx.transpose();
    };
    auto residual = [&](const Eigen::VectorXd& uu, double cc, Eigen::VectorXd& R) {
        Eigen::MatrixXd Utt, Uxx, Utx;
        derivs(uu, Utt, Uxx, Utx);
        R.resize(N + 1);
        double mx = 0;
        for (int i = 0; i < nt; ++i)
            for (int k = 0; k < nx; ++k) {
                const double A = a2[i] + 0.25 * Utt(i, k), B = b[i] + 0.25 * Uxx(i, k), M = 0.25 * Utx(i, k);
                const double d = A * B - M * M;
                if (!(d > 0 && A > 0)) throw PositivityError("twod_oracle: lost positivity", {i, 0, k, 0}, d);
                R[idx(i, k)] = std::log(d / (a2[i] * b[i])) - fe(i, 0, k, 0) - cc;
                mx = std::max(mx, std::abs(R[idx(i, k)]));
            }
        double nrm = 0;
        for (int i = 0; i < nt; ++i)
            for (int k = 0; k < nx; ++k) nrm += tw[i] * uu[idx(i, k)];
        R[N] = nrm / (nx * (g.t_max - g.t_min));
        return std::max(mx, std::abs(R[N]));
    };
    TwodOracleResult out;
    Eigen::VectorXd R;
    double rn = residual(u, c, R);
    int it = 0;
    while (rn > tol && it < 40) {
        ++it;
        Eigen::MatrixXd Utt, Uxx, Utx;
        derivs(u, Utt, Uxx, Utx);
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(N + 1, N + 1);
        for (int i = 0; i < nt; ++i)
            for (int k = 0; k < nx; ++k) {
                const double A = a2[i] + 0.25 * Utt(i, k), B = b[i] + 0.25 * Uxx(i, k), M = 0.25 * Utx(i, k);
                const double d = A * B - M * M;
                const int r = idx(i, k);
                // dF = (B dA + A dB - 2 M dM) / d with dA = Dtt/4, dB = Dxx/4, dM = (Dt x Dx)/4
                for (int ii = 0; ii < nt; ++ii)
                    if (Dtt(i, ii) != 0.0) J(r, idx(ii, k)) += 0.25 * B * Dtt(i, ii) / d;
                for (int kk = 0; kk < nx; ++kk) J(r, idx(i, kk)) += 0.25 * A * Dxx(k, kk) / d;
                for (int ii = 0; ii < nt; ++ii) {
                    if (Dt(i, ii) == 0.0) continue;
                    for (int kk = 0; kk < nx; ++kk) J(r, idx(ii, kk)) -= 0.5 * M * Dt(i, ii) * Dx(k, kk) / d;
                }
                J(r, N) = -1.0;
            }
        for (int i = 0; i < nt; ++i)
            for (int k = 0; k < nx; ++k) J(N, idx(i, k)) = tw[i] / (nx * (g.t_max - g.t_min));
        Eigen::VectorXd step = J.partialPivLu().solve(-R);
        double alpha = 1.0;
        for (int half = 0;; ++half) {
            Eigen::VectorXd ut = u + alpha * step.head(N), Rt;
            double rt = kInf;
            try {
                rt = residual(ut, c + alpha * step[N], Rt);
            } catch (const PositivityError&) {
            }
            if (rt <= rn || rt < 10 * tol) {
                u = ut, c += alpha * step[N], R = Rt, rn = rt;
                break;
            }
            if (half > 30) throw NumericalError("twod_oracle: damping exhausted");
            alpha *= 0.5;
        }
    }
    out.u = ScalarField(g, Symmetry::t_x);
    for (int i = 0; i < nt; ++i)
        for (int k = 0; k < nx; ++k) out.u(i, 0, k, 0) = u[idx(i, k)];
    out.shift = c;
    out.iterations = it;
    out.residual = rn;
    return out;
}

// ---------------------------------------------------------------------------
// Decay diagnostics

/// Fitted decay of |w - w(end)| on the middle half of each side; the minimum over ends that carry signal.
inline double two_ended_decay_rate(const ScalarField& w, double frac_lo = 0.25, double frac_hi = 0.75) {
    const auto& g = w.grid();
    const int c = w.cross_size(), nt = g.n_t;
    double best = kInf;
    for (int side = 0; side < 2; ++side) {
        const double T = side == 0 ? -g.t_min : g.t_max;
        if (T <= 0) continue;
        const int iend = side == 0 ? 0 : nt - 1;
        double endmean = 0;
        for (int k = 0; k < c; ++k) endmean += w[static_cast<std::size_t>(iend) * c + k];
        endmean /= c;
        std::vector<double> ts, vs;
        for (int i = 0; i < nt; ++i) {
            const double t = side == 0 ? -g.t(i) : g.t(i);
            if (t <= 0) continue;
            double m = 0;
            for (int k = 0; k < c; ++k) m = std::max(m, std::abs(w[static_cast<std::size_t>(i) * c + k] - endmean));
            ts.push_back(t), vs.push_back(m);
        }
        auto fit = fit_decay_series(ts, vs, frac_lo * T, frac_hi * T);
        if (fit.samples >= 3) best = std::min(best, fit.rate);
    }
    return best;
}

struct DecayReport {
    std::vector<double> T;
    std::vector<double> Q_plus, Q_minus;  ///< int_{t > T} |grad u|^2 and int_{t < -T} |grad u|^2
    double eps_prime = kInf;              ///< fitted decay rate of Q_T
    double slab_rate = kInf;              ///< fitted decay of sup_{A_T} |u - u_T|
    bool q_monotone = true;
    std::vector<double> bootstrap_rates;
    std::vector<double> bootstrap_q_rates;
    std::vector<bool> q_checks;  ///< Q(u) rate >= min(2 d, eps) - 0.05 per pass
    bool regression = false;
    double ibp_lhs = 0.0, ibp_rhs = 0.0;  ///< int u (e^F - 1) w^2 and -int i du ^ dbar u ^ eta
    bool auxiliary_ok = true;
};

/// Q_T with the flat product metric dt^2 + dtheta^2 + dx^2 + dy^2, and slab oscillations of u.
inline DecayReport energy_decay_report(const ScalarField& u, double frac_lo = 0.25, double frac_hi = 0.75) {
    const auto& g = u.grid();
    DecayReport rep;
    ScalarField grad2 = u;
    {
        auto ut = derivative(u, Axis::t, 1), a = derivative(u, Axis::theta, 1), b = derivative(u, Axis::x, 1),
             c = derivative(u, Axis::y, 1);
        for (std::size_t n = 0; n < u.size(); ++n) grad2[n] = ut[n] * ut[n] + a[n] * a[n] + b[n] * b[n] + c[n] * c[n];
    }
    const int cs = u.cross_size(), nt = g.n_t;
    std::vector<double> row(nt);
    for (int i = 0; i < nt; ++i) {
        double s = 0;
        for (int k = 0; k < cs; ++k) s += grad2[static_cast<std::size_t>(i) * cs + k];
        row[i] = 2.0 * kPi * s / cs;  // cross-section has area 2 pi x 1
    }
    // cumulative trapezoid tails
    const double h = g.ht();
    std::vector<double> right(nt, 0.0), left(nt, 0.0);
    for (int i = nt - 2; i >= 0; --i) right[i] = right[i + 1] + 0.5 * h * (row[i] + row[i + 1]);
    for (int i = 1; i < nt; ++i) left[i] = left[i - 1] + 0.5 * h * (row[i] + row[i - 1]);
    const double Tmax = g.half_cylinder ? g.t_max : std::min(-g.t_min, g.t_max);
    std::vector<double> Ts, Qp, Qm;
    for (int i = 0; i < nt; ++i) {
        const double t = g.t(i);
        if (t < 0) continue;
        rep.T.push_back(t);
        rep.Q_plus.push_back(right[i]);
        int mirror = static_cast<int>(std::llround((-t - g.t_min) / h));
        rep.Q_minus.push_back(!g.half_cylinder && mirror >= 0 && mirror < nt ? left[mirror] : 0.0);
    }
    for (std::size_t k = 1; k < rep.T.size(); ++k)
        if (rep.T[k] > frac_lo * Tmax && rep.Q_plus[k] > rep.Q_plus[k - 1] * (1 + 1e-12)) rep.q_monotone = false;
    auto fp = fit_decay_series(rep.T, rep.Q_plus, frac_lo * Tmax, frac_hi * Tmax);
    auto fm = fit_decay_series(rep.T, rep.Q_minus, frac_lo * Tmax, frac_hi * Tmax);
    if (fp.samples >= 3) rep.eps_prime = std::min(rep.eps_prime, fp.rate);
    if (fm.samples >= 3) rep.eps_prime = std::min(rep.eps_prime, fm.rate);
    // slab averages over A_T = {T < t < T + 1} on the right end
    std::vector<double> ts, osc;
    const int w1 = std::max(1, static_cast<int>(std::llround(1.0 / h)));
    for (int i = 0; i + w1 < nt; ++i) {
        if (g.t(i) < 0) continue;
        double mean = 0;
        int cnt = 0;
        for (int j = i; j <= i + w1; ++j)
            for (int k = 0; k < cs; ++k) mean += u[static_cast<std::size_t>(j) * cs + k], ++cnt;
        mean /= cnt;
        double m = 0;
        for (int j = i; j <= i + w1; ++j)
            for (int k = 0; k < cs; ++k) m = std::max(m, std::abs(u[static_cast<std::size_t>(j) * cs + k] - mean));
        ts.push_back(g.t(i)), osc.push_back(m);
    }
    auto fs = fit_decay_series(ts, osc, frac_lo * Tmax, frac_hi * Tmax);
    if (fs.samples >= 3) rep.slab_rate = fs.rate;
    return rep;
}

/// Q(u) = det(H u) / det h: the quadratic part of e^F - 1 in complex dimension two.
inline ScalarField quadratic_part(const Form11Field& w, const ScalarField& u) {
    auto H = solver_hessian(u);
    Symmetry s = join(w.symmetry(), H.symmetry());
    auto we = w.expanded(s);
    auto He = H.expanded(s);
    ScalarField out(w.grid(), s);
    for (std::size_t n = 0; n < out.size(); ++n)
        out[n] = det(He.h11[n], He.h12[n], He.h22[n]) / det(we.h11[n], we.h12[n], we.h22[n]);
    return out;
}

/**
 * @brief Bootstrap passes: L_0 u = (e^f - 1) - Q(u) re-solved with the background linearization.
 *
 * The energy rate eps_prime of Q_T gives the pointwise start d_0 = min(eps_prime / 2, eps). Pass k checks
 * that Q(u) decays at least like min(2 d_k, eps) - 0.05, re-solves and certifies
 * d_{k+1} = min(measured rate of the re-solve, min(2 d_k, eps)).
 */
inline DecayReport bootstrap_check(const MaSolver& solver, const ContinuityState& st, double eps_prime, double eps,
                                   int max_passes = 3) {
    DecayReport rep;
    rep.eps_prime = eps_prime;
    const auto& w = solver.omega();
    Symmetry s = join(w.symmetry(), st.u.symmetry());
    ScalarField zero(w.grid(), s);
    ScalarField Q = quadratic_part(w, st.u);
    if (sup_abs(st.u) == 0.0) {
        rep.bootstrap_rates.assign(1, kInf);
        rep.bootstrap_q_rates.assign(1, kInf);
        rep.q_checks.assign(1, true);
        return rep;
    }
    ScalarField rhs = st.f_tau.expand(s);
    for (std::size_t n = 0; n < rhs.size(); ++n) rhs[n] = std::expm1(rhs[n] + st.compat_shift) - Q[n];
    double d = std::min(0.5 * eps_prime, eps);
    const double qrate = two_ended_decay_rate(Q);
    for (int pass = 0; pass < max_passes; ++pass) {
        const double target = std::min(2.0 * d, eps);
        rep.bootstrap_q_rates.push_back(qrate);
        rep.q_checks.push_back(qrate >= target - 0.05);
        auto [sol, dc] = solver.solve_linear(zero, rhs);
        (void)dc;
        const double measured = two_ended_decay_rate(sol);
        const double next = std::min(measured, target);
        if (next < d - 0.05) rep.regression = true;
        rep.bootstrap_rates.push_back(next);
        if (std::abs(next - d) < 0.01) break;
        d = next;
    }
    return rep;
}

/// Integration by parts: int u (e^F - 1) w^2 against -int i du ^ dbar u ^ (w + w_u); returns both sides.
inline std::pair<double, double> ibp_identity(const Form11Field& w, const ScalarField& u) {
    auto H = solver_hessian(u);
    Symmetry s = join(w.symmetry(), u.symmetry());
    auto we = w.expanded(s), wu = (w + H).expanded(s);
    auto ue = u.expand(s);
    auto ut = neumann_t(ue, 1), uth = derivative(ue, Axis::theta, 1), ux = derivative(ue, Axis::x, 1),
         uy = derivative(ue, Axis::y, 1);
    ScalarField lhs(w.grid(), s), rhs(w.grid(), s);
    for (std::size_t n = 0; n < lhs.size(); ++n) {
        lhs[n] = ue[n] * 8.0 * (det(wu.h11[n], wu.h12[n], wu.h22[n]) - det(we.h11[n], we.h12[n], we.h22[n]));
        const cplx d1 = 0.5 * cplx(ut[n], -uth[n]), d2 = 0.5 * cplx(ux[n], -uy[n]);
        // P = i du ^ dbar u has P_jk = d_j u conj(d_k u)
        const double P11 = std::norm(d1), P22 = std::norm(d2);
        const cplx P12 = d1 * std::conj(d2);
        const double E11 = we.h11[n] + wu.h11[n], E22 = we.h22[n] + wu.h22[n];
        const cplx E12 = we.h12[n] + wu.h12[n];
        rhs[n] = -4.0 * (P11 * E22 + P22 * E11 - 2.0 * std::real(P12 * std::conj(E12)));
    }
    return {integrate(lhs), integrate(rhs)};
}

/// Energy report plus the auxiliary-form identity at the converged state.
inline DecayReport energy_decay_report(const Form11Field& w, const ContinuityState& st, double rel_tol = 1e-2) {
    DecayReport rep = energy_decay_report(st.u);
    auto [a, b] = ibp_identity(w, st.u);
    rep.ibp_lhs = a;
    rep.ibp_rhs = b;
    rep.auxiliary_ok = std::abs(a - b) <= rel_tol * std::abs(b) + 1e-14;
    return rep;
}

struct UniquenessReport {
    double max_gap = 0.0;
    std::vector<ScalarField> solutions;
};

/// Solve along each schedule and from each initialization; report the max pairwise sup gap.
inline UniquenessReport uniqueness_check(const MaSolver& solver, const ScalarField& f, const std::vector<int>& schedules,
                                         const std::vector<ScalarField>& inits) {
    UniquenessReport rep;
    for (int steps : schedules) rep.solutions.push_back(normalized(solver.continuity_solve(f, steps).u));
    for (const auto& u0 : inits) rep.solutions.push_back(normalized(solver.newton_solve(f, &u0).u));
    if (rep.solutions.size() < 2) throw PreconditionError("uniqueness_check: need at least two runs");
    for (std::size_t a = 0; a < rep.solutions.size(); ++a)
        for (std::size_t b = a + 1; b < rep.solutions.size(); ++b) {
            auto d = rep.solutions[a] - rep.solutions[b];
            rep.max_gap = std::max(rep.max_gap, sup_abs(d));
        }
    return rep;
}

// ---------------------------------------------------------------------------
// Planted data shared by the CLI and the acceptance runs

/// amp sech(t)^rate (1 + 0.5 cos(2 pi x + phase) + 0.3 sin theta + 0.2 cos 2 pi y), restricted to the symmetry.
inline ScalarField planted_potential(const CylinderGrid& g, Symmetry s, double amp, double rate, double phase = 0.3) {
    ScalarField v(g, s);
    v.fill([&](double t, double th, double x, double y) {
        return amp * std::pow(std::cosh(t), -rate) *
               (1.0 + 0.5 * std::cos(2 * kPi * x + phase) + 0.3 * std::sin(th) + 0.2 * std::cos(2 * kPi * y));
    });
    return v;
}

/// h11 = 1/2 + (1/4) sech^2 t, h22 = 1: radially symmetric, flat at both ends.
inline Form11Field radial_test_background(const CylinderGrid& g) {
    auto w = constant_form(g, 0.5, 0.0, 1.0);
    w.h11.fill([](double t, double, double, double) { return 0.5 + 0.25 / std::pow(std::cosh(t), 2); });
    return w;
}

/// sup gap after pinning the window mean of each side.
inline double normalized_gap(const ScalarField& a, const ScalarField& b) {
    Symmetry s = join(a.symmetry(), b.symmetry());
    return sup_abs(normalized(a.expand(s)) - normalized(b.expand(s)));
}

}  // namespace acyl
