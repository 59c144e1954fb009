#pragma once
// Gauge fixing for perturbed complex structures on R+ x S^1 x T^2, Laurent expansions and the constructive i ddbar lemma.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "acyl/cyl_elliptic.hpp"
#include "acyl/kahler_kernel.hpp"

namespace acyl {

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

/// Product structure on (t, theta, x, y): d_t -> d_theta, d_x -> d_y.
inline Mat4 j_infinity() {
    Mat4 J = Mat4::Zero();
    J(1, 0) = 1.0;
    J(0, 1) = -1.0;
    J(3, 2) = 1.0;
    J(2, 3) = -1.0;
    return J;
}

/// A e^{-rate t} cos(m theta + 2 pi (a x + b y) + phase) added to one coordinate.
struct DisplacementMode {
    int target = 2;  ///< 0 = t, 1 = theta, 2 = x, 3 = y
    double amplitude = 0.0;
    double rate = 1.0;
    int theta_freq = 0;
    int torus_x = 0;
    int torus_y = 0;
    double phase = 0.0;
};

/// Diffeomorphism p -> p + D(p) exponentially asymptotic to the identity.
struct DiffeoSpec {
    std::vector<DisplacementMode> modes;

    Vec4 map(const Vec4& p) const {
        Vec4 q = p;
        for (const auto& m : modes) q[m.target] += value(m, p);
        return q;
    }

    Mat4 jacobian(const Vec4& p) const {
        Mat4 d = Mat4::Identity();
        for (const auto& m : modes) {
            const double e = m.amplitude * std::exp(-m.rate * p[0]);
            const double ph = m.theta_freq * p[1] + 2 * kPi * (m.torus_x * p[2] + m.torus_y * p[3]) + m.phase;
            const double c = std::cos(ph), s = std::sin(ph);
            d(m.target, 0) += -m.rate * e * c;
            d(m.target, 1) += -e * m.theta_freq * s;
            d(m.target, 2) += -e * 2 * kPi * m.torus_x * s;
            d(m.target, 3) += -e * 2 * kPi * m.torus_y * s;
        }
        return d;
    }

    /// Pullback of the product structure: dPhi^{-1} J_inf dPhi.
    Mat4 structure(const Vec4& p) const {
        if (modes.empty()) return j_infinity();
        Mat4 d = jacobian(p);
        return d.partialPivLu().solve(j_infinity() * d);
    }

    static double value(const DisplacementMode& m, const Vec4& p) {
        return m.amplitude * std::exp(-m.rate * p[0]) *
               std::cos(m.theta_freq * p[1] + 2 * kPi * (m.torus_x * p[2] + m.torus_y * p[3]) + m.phase);
    }
};

/// Endomorphism samples on the full grid, index order (t, theta, x, y).
struct EndoField {
    CylinderGrid grid;
    std::vector<Mat4> m;

    EndoField() = default;
    explicit EndoField(const CylinderGrid& g)
        : grid(g), m(static_cast<std::size_t>(g.n_t) * g.n_theta * g.n_x * g.n_y, Mat4::Zero()) {}

    std::size_t index(int i, int j, int k, int l) const {
        return ((static_cast<std::size_t>(i) * grid.n_theta + j) * grid.n_x + k) * grid.n_y + l;
    }
    Mat4& operator()(int i, int j, int k, int l) { return m[index(i, j, k, l)]; }
    const Mat4& operator()(int i, int j, int k, int l) const { return m[index(i, j, k, l)]; }

    ScalarField component(int r, int c) const {
        ScalarField f(grid, Symmetry::full);
        for (std::size_t n = 0; n < m.size(); ++n) f[n] = m[n](r, c);
        return f;
    }
    void set_component(int r, int c, const ScalarField& f) {
        for (std::size_t n = 0; n < m.size(); ++n) m[n](r, c) = f[n];
    }
    ScalarField norm() const {
        ScalarField f(grid, Symmetry::full);
        for (std::size_t n = 0; n < m.size(); ++n) f[n] = m[n].norm();
        return f;
    }
};

inline Vec4 grid_point(const CylinderGrid& g, int i, int j, int k, int l) {
    return Vec4(g.t(i), g.theta(j), g.x(k), g.y(l));
}

/// Fourth-order t-derivative with one-sided closures at both ends.
inline ScalarField dt4(const ScalarField& f) {
    const int n = f.dims()[0], c = f.cross_size();
    if (n < 5) throw PreconditionError("dt4: need at least 5 t-samples");
    const double h = f.grid().ht();
    ScalarField out(f.grid(), f.symmetry());
    auto at = [&](int i, int m) { return f[static_cast<std::size_t>(i) * c + m]; };
    for (int m = 0; m < c; ++m)
        for (int i = 0; i < n; ++i) {
            double v;
            if (i >= 2 && i <= n - 3)
                v = at(i - 2, m) - 8 * at(i - 1, m) + 8 * at(i + 1, m) - at(i + 2, m);
            else if (i == 0)
                v = -25 * at(0, m) + 48 * at(1, m) - 36 * at(2, m) + 16 * at(3, m) - 3 * at(4, m);
            else if (i == 1)
                v = -3 * at(0, m) - 10 * at(1, m) + 18 * at(2, m) - 6 * at(3, m) + at(4, m);
            else if (i == n - 2)
                v = 3 * at(n - 1, m) + 10 * at(n - 2, m) - 18 * at(n - 3, m) + 6 * at(n - 4, m) - at(n - 5, m);
            else
                v = 25 * at(n - 1, m) - 48 * at(n - 2, m) + 36 * at(n - 3, m) - 16 * at(n - 4, m) + 3 * at(n - 5, m);
            out[static_cast<std::size_t>(i) * c + m] = v / (12.0 * h);
        }
    return out;
}

/// Fitted decay rate of the cross-sectional sup over the middle half of the t-range.
inline double middle_decay_rate(const ScalarField& f) {
    const auto& g = f.grid();
    const double L = g.t_max - g.t_min;
    if (sup_abs(f) == 0.0) return kInf;
    return fit_decay_rate(f, g.t_min + 0.25 * L, g.t_min + 0.75 * L).rate;
}

// ---------------------------------------------------------------------------
// Perturbed structures

struct PerturbedStructure {
    CylinderGrid grid;
    DiffeoSpec spec;
    EndoField J;
    double deviation_sup = 0.0;
    double deviation_rate = kInf;  ///< fitted rate of |J - J_inf|
    double min_jacobian_det = 1.0;
    double square_defect = 0.0;  ///< max |J^2 + I|

    Mat4 at(const Vec4& p) const { return spec.structure(p); }
};

inline PerturbedStructure make_perturbed_structure(const CylinderGrid& g, DiffeoSpec spec, double delta) {
    PerturbedStructure ps;
    ps.grid = g;
    ps.spec = std::move(spec);
    ps.J = EndoField(g);
    const Mat4 Jinf = j_infinity();
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j)
            for (int k = 0; k < g.n_x; ++k)
                for (int l = 0; l < g.n_y; ++l) {
                    Vec4 p = grid_point(g, i, j, k, l);
                    const double d = ps.spec.jacobian(p).determinant();
                    ps.min_jacobian_det = std::min(ps.min_jacobian_det, d);
                    if (d < 0.2)
                        throw PreconditionError("displacement too large: Jacobian determinant " + std::to_string(d) +
                                                " at t = " + std::to_string(p[0]));
                    Mat4 J = ps.spec.structure(p);
                    ps.square_defect = std::max(ps.square_defect, (J * J + Mat4::Identity()).norm());
                    ps.J(i, j, k, l) = J;
                }
    EndoField dev = ps.J;
    for (auto& m : dev.m) m -= Jinf;
    auto nrm = dev.norm();
    ps.deviation_sup = sup_abs(nrm);
    ps.deviation_rate = middle_decay_rate(nrm);
    if (ps.deviation_rate < delta - 0.05)
        throw PreconditionError("structure decays at rate " + std::to_string(ps.deviation_rate) + " < delta");
    return ps;
}

// ---------------------------------------------------------------------------
// Holomorphic cylinders

struct CylinderFamily {
    std::array<ScalarField, 4> V;  ///< displacement (t, theta, x, y) of f_x from the tautological cylinder
    std::vector<double> residual;  ///< box dbar residual per torus point
    std::vector<double> lipschitz; ///< successive residual ratios of the iteration (max over torus points)
    int iterations = 0;
    double max_residual = 0.0;
    double contraction = 0.0;      ///< largest measured ratio
    double displacement_rate = kInf;
};

namespace detail {

// nonlinear part G = e_t + J(f)(e_theta + V_theta) - J_inf V_theta, complexified by J_inf
inline void dbar_parts(const PerturbedStructure& ps, const ComplexField& V1, const ComplexField& V2, int k, int l,
                       ComplexField& G1, ComplexField& G2, ComplexField& V1th, ComplexField& V2th) {
    const auto& g = V1.grid();
    V1th = derivative(V1, Axis::theta, 1);
    V2th = derivative(V2, Axis::theta, 1);
    G1 = ComplexField(g, Symmetry::t_theta);
    G2 = ComplexField(g, Symmetry::t_theta);
    const Mat4 Jinf = j_infinity();
    const double x0 = ps.grid.x(k), y0 = ps.grid.y(l);
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j) {
            const cplx a = V1(i, j, 0, 0), b = V2(i, j, 0, 0), at = V1th(i, j, 0, 0), bt = V2th(i, j, 0, 0);
            Vec4 f(g.t(i) + a.real(), g.theta(j) + a.imag(), x0 + b.real(), y0 + b.imag());
            Vec4 vth(at.real(), at.imag(), bt.real(), bt.imag());
            Vec4 eth(0, 1, 0, 0), et(1, 0, 0, 0);
            Vec4 G = et + ps.at(f) * (eth + vth) - Jinf * vth;
            G1(i, j, 0, 0) = cplx(G[0], G[1]);
            G2(i, j, 0, 0) = cplx(G[2], G[3]);
        }
}

inline double box_residual(const ComplexField& V, const ComplexField& Vth, const ComplexField& G) {
    const auto& g = V.grid();
    const double h = g.ht();
    double r = 0.0;
    for (int i = 0; i + 1 < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j) {
            cplx v = (V(i + 1, j, 0, 0) - V(i, j, 0, 0)) / h +
                     0.5 * (cplx(0, 1) * (Vth(i, j, 0, 0) + Vth(i + 1, j, 0, 0)) + G(i, j, 0, 0) + G(i + 1, j, 0, 0));
            r = std::max(r, std::abs(v));
        }
    return r;
}

}  // namespace detail

/**
 * @brief J-holomorphic cylinders f_x asymptotic to the tautological ones, by iterating V -> R(L V - dbar_x V).
 *
 * R is the mode-wise right inverse of d/dt + i d/dtheta at the given (non-integer) weight, applied to both
 * complex components; the residual is the box-scheme residual of df/dt + J(f) df/dtheta.
 */
inline CylinderFamily find_holomorphic_cylinders(const PerturbedStructure& ps, double weight = 1.5, double tol = 1e-10,
                                                 int max_iter = 60) {
    const auto& G = ps.grid;
    if (G.n_t < 3) throw PreconditionError("find_holomorphic_cylinders: grid too short");
    CylinderFamily fam;
    for (auto& v : fam.V) v = ScalarField(G, Symmetry::full);
    auto lg = make_grid(G.t_min, G.t_max, G.n_t, G.n_theta, 1, 1, true);
    std::vector<double> ratios;
    for (int k = 0; k < G.n_x; ++k)
        for (int l = 0; l < G.n_y; ++l) {
            ComplexField V1(lg, Symmetry::t_theta), V2(lg, Symmetry::t_theta), G1, G2, V1th, V2th;
            double prev = kInf, res = kInf;
            int it = 0;
            for (;; ++it) {
                detail::dbar_parts(ps, V1, V2, k, l, G1, G2, V1th, V2th);
                res = std::max(detail::box_residual(V1, V1th, G1), detail::box_residual(V2, V2th, G2));
                if (it > 0) {
                    const double q = res / prev;
                    if (prev > 100 * tol) {
                        if (static_cast<std::size_t>(it) > ratios.size()) ratios.resize(it, 0.0);
                        ratios[it - 1] = std::max(ratios[it - 1], q);
                    }
                    if (q >= 1.0) {
                        if (res <= 100 * tol) break;  // round-off floor of the tail selection
                        if (it >= 3)
                            throw NumericalError("cylinder contraction diverged at iterate " + std::to_string(it) +
                                                 " (ratio " + std::to_string(q) + ")");
                    }
                }
                prev = res;
                if (res <= tol || it >= max_iter) break;
                ComplexField F1 = G1, F2 = G2;
                F1 *= cplx(-1.0);
                F2 *= cplx(-1.0);
                V1 = solve_dbar_cylinder(F1, weight).f;
                V2 = solve_dbar_cylinder(F2, weight).f;
            }
            if (res > 100 * tol) throw NumericalError("cylinder iteration stalled at residual " + std::to_string(res));
            fam.iterations = std::max(fam.iterations, it);
            fam.residual.push_back(res);
            fam.max_residual = std::max(fam.max_residual, res);
            for (int i = 0; i < G.n_t; ++i)
                for (int j = 0; j < G.n_theta; ++j) {
                    fam.V[0](i, j, k, l) = V1(i, j, 0, 0).real();
                    fam.V[1](i, j, k, l) = V1(i, j, 0, 0).imag();
                    fam.V[2](i, j, k, l) = V2(i, j, 0, 0).real();
                    fam.V[3](i, j, k, l) = V2(i, j, 0, 0).imag();
                }
        }
    fam.lipschitz = ratios;
    for (double q : ratios) fam.contraction = std::max(fam.contraction, q);
    ScalarField mag(G, Symmetry::full);
    for (std::size_t n = 0; n < mag.size(); ++n)
        mag[n] = std::sqrt(std::pow(fam.V[0][n], 2) + std::pow(fam.V[1][n], 2) + std::pow(fam.V[2][n], 2) +
                           std::pow(fam.V[3][n], 2));
    fam.displacement_rate = middle_decay_rate(mag);
    return fam;
}

/// sup of the vertical offset of Phi(f_x) from the planted cylinder {x} (zero for the planted images).
inline double image_deviation(const PerturbedStructure& ps, const CylinderFamily& fam) {
    const auto& g = ps.grid;
    double m = 0.0;
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j)
            for (int k = 0; k < g.n_x; ++k)
                for (int l = 0; l < g.n_y; ++l) {
                    Vec4 p = grid_point(g, i, j, k, l);
                    Vec4 f = p + Vec4(fam.V[0](i, j, k, l), fam.V[1](i, j, k, l), fam.V[2](i, j, k, l),
                                      fam.V[3](i, j, k, l));
                    Vec4 q = ps.spec.map(f);
                    m = std::max({m, std::abs(q[2] - p[2]), std::abs(q[3] - p[3])});
                }
    return m;
}

/// J~ = F^* J for the gauge map F(t, theta, x, y) = f_x(t, theta).
inline EndoField gauge_structure(const PerturbedStructure& ps, const CylinderFamily& fam) {
    const auto& g = ps.grid;
    std::array<std::array<ScalarField, 4>, 4> dV;  // dV[a][c]: derivative of V_c along axis a
    for (int c = 0; c < 4; ++c) {
        dV[0][c] = dt4(fam.V[c]);
        dV[1][c] = derivative(fam.V[c], Axis::theta, 1);
        dV[2][c] = derivative(fam.V[c], Axis::x, 1);
        dV[3][c] = derivative(fam.V[c], Axis::y, 1);
    }
    EndoField out(g);
    for (std::size_t n = 0; n < out.m.size(); ++n) {
        Mat4 dF = Mat4::Identity();
        for (int a = 0; a < 4; ++a)
            for (int c = 0; c < 4; ++c) dF(c, a) += dV[a][c][n];
        Vec4 f(fam.V[0][n], fam.V[1][n], fam.V[2][n], fam.V[3][n]);
        const int l = static_cast<int>(n % g.n_y), k = static_cast<int>((n / g.n_y) % g.n_x);
        const int j = static_cast<int>((n / (static_cast<std::size_t>(g.n_y) * g.n_x)) % g.n_theta);
        const int i = static_cast<int>(n / (static_cast<std::size_t>(g.n_y) * g.n_x * g.n_theta));
        f += grid_point(g, i, j, k, l);
        out.m[n] = dF.partialPivLu().solve(ps.at(f) * dF);
    }
    return out;
}

/// Pointwise |dJ~/dt + J~ dJ~/dtheta| (Frobenius), fourth-order in t and spectral in theta.
inline ScalarField torsion_residual(const EndoField& Jt) {
    std::array<std::array<ScalarField, 4>, 4> Dt, Dth;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            auto comp = Jt.component(r, c);
            Dt[r][c] = dt4(comp);
            Dth[r][c] = derivative(comp, Axis::theta, 1);
        }
    ScalarField out(Jt.grid, Symmetry::full);
    for (std::size_t n = 0; n < out.size(); ++n) {
        Mat4 a, b;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) a(r, c) = Dt[r][c][n], b(r, c) = Dth[r][c][n];
        out[n] = (a + Jt.m[n] * b).norm();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structures planted directly in the gauge

/// Trigonometric polynomial sum amp e^{2 pi i (a x + b y)} on the torus.
struct TorusFunction {
    struct Term {
        cplx amp;
        int a, b;
    };
    std::vector<Term> terms;

    cplx value(double x, double y) const {
        cplx s = 0;
        for (const auto& t : terms) s += t.amp * std::exp(cplx(0, 2 * kPi * (t.a * x + t.b * y)));
        return s;
    }
    cplx dx(double x, double y) const {
        cplx s = 0;
        for (const auto& t : terms) s += t.amp * cplx(0, 2 * kPi * t.a) * std::exp(cplx(0, 2 * kPi * (t.a * x + t.b * y)));
        return s;
    }
    cplx dy(double x, double y) const {
        cplx s = 0;
        for (const auto& t : terms) s += t.amp * cplx(0, 2 * kPi * t.b) * std::exp(cplx(0, 2 * kPi * (t.a * x + t.b * y)));
        return s;
    }
};

struct GaugePlant {
    EndoField Jt;
    std::vector<Mat4> K1;  ///< first Laurent coefficient per torus point (index k * n_y + l)
};

/// Real 2x2 Jacobian of a complex function of (x, y): columns d/dx, d/dy.
inline Eigen::Matrix2d real_jacobian(cplx fx, cplx fy) {
    Eigen::Matrix2d m;
    m << fx.real(), fy.real(), fx.imag(), fy.imag();
    return m;
}

/**
 * @brief J~ = G^* J_inf for G(s, z) = (s, z + e^{-s} c(z) + e^{-2s} d(z)).
 *
 * Cylinders {z = const} map to J_inf-holomorphic curves, so J~ d_t = d_theta. The first coefficient is
 * K~1 = [J_v, Dc] on the vertical block, Dc the real Jacobian of c.
 */
inline GaugePlant planted_gauge(const CylinderGrid& g, const TorusFunction& c, const TorusFunction& d) {
    GaugePlant out{EndoField(g), {}};
    const Mat4 Jinf = j_infinity();
    Eigen::Matrix2d Jv;
    Jv << 0, -1, 1, 0;
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j)
            for (int k = 0; k < g.n_x; ++k)
                for (int l = 0; l < g.n_y; ++l) {
                    const cplx s(g.t(i), g.theta(j));
                    const cplx e1 = std::exp(-s), e2 = std::exp(-2.0 * s);
                    const double x = g.x(k), y = g.y(l);
                    const cplx bt = -e1 * c.value(x, y) - 2.0 * e2 * d.value(x, y);
                    const cplx bth = cplx(0, 1) * bt;
                    const cplx bx = e1 * c.dx(x, y) + e2 * d.dx(x, y), by = e1 * c.dy(x, y) + e2 * d.dy(x, y);
                    Mat4 dG = Mat4::Identity();
                    dG(2, 0) += bt.real(), dG(3, 0) += bt.imag();
                    dG(2, 1) += bth.real(), dG(3, 1) += bth.imag();
                    dG(2, 2) += bx.real(), dG(3, 2) += bx.imag();
                    dG(2, 3) += by.real(), dG(3, 3) += by.imag();
                    out.Jt(i, j, k, l) = dG.partialPivLu().solve(Jinf * dG);
                }
    for (int k = 0; k < g.n_x; ++k)
        for (int l = 0; l < g.n_y; ++l) {
            auto M = real_jacobian(c.dx(g.x(k), g.y(l)), c.dy(g.x(k), g.y(l)));
            Mat4 K1 = Mat4::Zero();
            K1.block<2, 2>(2, 2) = Jv * M - M * Jv;
            out.K1.push_back(K1);
        }
    return out;
}

inline EndoField deviation(const EndoField& Jt) {
    EndoField K = Jt;
    const Mat4 Jinf = j_infinity();
    for (auto& m : K.m) m -= Jinf;
    return K;
}

// ---------------------------------------------------------------------------
// Laurent expansion

/// Cauchy coefficient (1/2 pi) int w^{-1} K dtheta on the circle t = t(i), with w^{-1} A = e^t (cos + sin J_inf) A.
inline std::vector<Mat4> cauchy_coefficient(const EndoField& K, int i) {
    const auto& g = K.grid;
    const Mat4 Jinf = j_infinity();
    std::vector<Mat4> out(static_cast<std::size_t>(g.n_x) * g.n_y, Mat4::Zero());
    const double et = std::exp(g.t(i));
    for (int j = 0; j < g.n_theta; ++j) {
        const double th = g.theta(j);
        const Mat4 winv = et * (std::cos(th) * Mat4::Identity() + std::sin(th) * Jinf);
        for (int k = 0; k < g.n_x; ++k)
            for (int l = 0; l < g.n_y; ++l) out[static_cast<std::size_t>(k) * g.n_y + l] += winv * K(i, j, k, l);
    }
    for (auto& m : out) m /= g.n_theta;
    return out;
}

struct ExpansionReport {
    std::vector<Mat4> K1;
    double remainder_slope = kInf;
    double k_rate = kInf;
    bool passed = false;
    std::vector<double> circle_t;
};

/**
 * @brief K = w K~1 + L: K~1 averaged over the circles with t in [t_lo, t_hi], L's |w|-slope fitted on the same window.
 */
inline ExpansionReport extract_expansion(const EndoField& K, double alpha, double t_lo, double t_hi) {
    const auto& g = K.grid;
    ExpansionReport rep;
    const Mat4 Jinf = j_infinity();
    auto nrm = K.norm();
    const double ksup = sup_abs(nrm);
    rep.K1.assign(static_cast<std::size_t>(g.n_x) * g.n_y, Mat4::Zero());
    if (ksup == 0.0) {
        rep.passed = true;
        return rep;
    }
    rep.k_rate = fit_decay_rate(nrm, t_lo, t_hi).rate;
    if (rep.k_rate < 0.9) throw PreconditionError("extract_expansion: insufficient decay (rate " + std::to_string(rep.k_rate) + ")");
    int count = 0;
    for (int i = 0; i < g.n_t; ++i) {
        if (g.t(i) < t_lo - 1e-12 || g.t(i) > t_hi + 1e-12) continue;
        auto c = cauchy_coefficient(K, i);
        for (std::size_t n = 0; n < c.size(); ++n) rep.K1[n] += c[n];
        rep.circle_t.push_back(g.t(i));
        ++count;
    }
    if (count == 0) throw PreconditionError("extract_expansion: empty window");
    for (auto& m : rep.K1) m /= count;
    ScalarField L(g, Symmetry::full);
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j) {
            const double th = g.theta(j), e = std::exp(-g.t(i));
            const Mat4 w = e * (std::cos(th) * Mat4::Identity() - std::sin(th) * Jinf);
            for (int k = 0; k < g.n_x; ++k)
                for (int l = 0; l < g.n_y; ++l)
                    L(i, j, k, l) = (K(i, j, k, l) - w * rep.K1[static_cast<std::size_t>(k) * g.n_y + l]).norm();
        }
    rep.remainder_slope = sup_abs(L) == 0.0 ? kInf : fit_decay_rate(L, t_lo, t_hi).rate;
    rep.passed = rep.remainder_slope >= 1.0 + alpha - 0.05;
    return rep;
}

// ---------------------------------------------------------------------------
// Regularity of vertical (0,1)-data

struct KappaReport {
    double transport_residual = 0.0;    ///< |dk/dt + J dk/dtheta| / |k|, interior sup
    double max_negative_coefficient = 0.0;  ///< relative to the largest Laurent coefficient
    double slope = kInf;                ///< |w|-slope of |k|
    bool passed = false;
};

/**
 * @brief kappa : R+ x S^1 -> V (real dimension 4) with a constant complex structure calJ.
 *
 * Components in a calJ-adapted frame are expanded in Laurent series of w = e^{-t - i theta}.
 */
inline KappaReport kappa_regularity_check(const std::array<ScalarField, 4>& kappa, const Mat4& calJ,
                                          double residual_tol = 1e-3) {
    const auto& g = kappa[0].grid();
    KappaReport rep;
    if ((calJ * calJ + Mat4::Identity()).norm() > 1e-10) throw PreconditionError("kappa: calJ^2 != -1");
    ScalarField mag(g, kappa[0].symmetry());
    for (std::size_t n = 0; n < mag.size(); ++n)
        mag[n] = std::sqrt(std::pow(kappa[0][n], 2) + std::pow(kappa[1][n], 2) + std::pow(kappa[2][n], 2) +
                           std::pow(kappa[3][n], 2));
    const double ksup = sup_abs(mag);
    if (ksup == 0.0) {
        rep.passed = true;
        return rep;
    }
    std::array<ScalarField, 4> kt, kth;
    for (int c = 0; c < 4; ++c) kt[c] = dt4(kappa[c]), kth[c] = derivative(kappa[c], Axis::theta, 1);
    const int c0 = kappa[0].cross_size();
    double res = 0.0;
    for (int i = 2; i < g.n_t - 2; ++i)
        for (int m = 0; m < c0; ++m) {
            const std::size_t n = static_cast<std::size_t>(i) * c0 + m;
            Vec4 a(kt[0][n], kt[1][n], kt[2][n], kt[3][n]), b(kth[0][n], kth[1][n], kth[2][n], kth[3][n]);
            res = std::max(res, (a + calJ * b).norm() / std::max(mag[n], 1e-300));
        }
    rep.transport_residual = res;
    if (res > residual_tol)
        throw PreconditionError("kappa: transport equation residual " + std::to_string(res) + " too large");
    // adapted frame {e1, J e1, e2, J e2}
    Mat4 B;
    B.col(0) = Vec4::UnitX();
    B.col(1) = calJ * Vec4::UnitX();
    for (int c = 1; c < 4; ++c) {
        Vec4 e = Vec4::Unit(c);
        B.col(2) = e;
        B.col(3) = calJ * e;
        if (std::abs(B.determinant()) > 1e-6) break;
    }
    auto Binv = B.inverse();
    // complex components as fields, then Fourier in theta: f = sum a_n w^n has theta-frequency -n
    const int nth = g.n_theta;
    double neg = 0.0, all = 0.0;
    for (int comp = 0; comp < 2; ++comp) {
        for (int i = 0; i < g.n_t; ++i) {
            std::vector<cplx> line(nth);
            for (int j = 0; j < nth; ++j) {
                Vec4 v;
                for (int c = 0; c < 4; ++c) v[c] = kappa[c].at_full(i, j, 0, 0);
                Vec4 q = Binv * v;
                line[j] = cplx(q[2 * comp], q[2 * comp + 1]);
            }
            for (int fr = -nth / 2 + 1; fr < nth / 2; ++fr) {
                cplx s = 0;
                for (int j = 0; j < nth; ++j) s += line[j] * std::exp(cplx(0, -fr * g.theta(j)));
                s /= nth;
                const int n = -fr;  // Laurent index
                const double a = std::abs(s) * std::exp(n * g.t(i));
                if (n < 0) neg = std::max(neg, a);
                all = std::max(all, a);
            }
        }
    }
    rep.max_negative_coefficient = all > 0 ? neg / all : 0.0;
    rep.slope = middle_decay_rate(mag);
    rep.passed = rep.max_negative_coefficient <= 1e-8;
    return rep;
}

// ---------------------------------------------------------------------------
// Constructive i ddbar lemma on a Chebyshev grid in t

/// Chebyshev points on [a, b] in increasing order and the differentiation matrix.
struct ChebLine {
    std::vector<double> t;
    Eigen::MatrixXd D;
};

inline ChebLine cheb_line(double a, double b, int n) {
    if (n < 4) throw PreconditionError("cheb_line: need at least 4 points");
    const int N = n - 1;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = -std::cos(kPi * i / N);  // increasing
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    auto cw = [N](int i) { return (i == 0 || i == N) ? 2.0 : 1.0; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) D(i, j) = cw(i) / cw(j) * (((i + j) % 2) ? -1.0 : 1.0) / (x[i] - x[j]);
    for (int i = 0; i < n; ++i) D(i, i) = -D.row(i).sum();
    ChebLine out;
    out.t.resize(n);
    for (int i = 0; i < n; ++i) out.t[i] = a + 0.5 * (b - a) * (x[i] + 1.0);
    out.D = D * (2.0 / (b - a));
    return out;
}

/// Periodic sizes plus Chebyshev samples in t. Fields use `base` (whose uniform t-values are not used).
struct LemmaGrid {
    ChebLine line;
    CylinderGrid base;
};

inline LemmaGrid make_lemma_grid(double t0, double T, int n_t, int n_theta, int n_x, int n_y) {
    return {cheb_line(t0, T, n_t), make_grid(t0, T, n_t, n_theta, n_x, n_y, true)};
}

/// Fill a full field from f(t, theta, x, y) at the Chebyshev nodes.
template <class T, class F>
Field<T> lemma_fill(const LemmaGrid& lg, F&& f) {
    Field<T> out(lg.base, Symmetry::full);
    const auto& g = lg.base;
    for (int i = 0; i < g.n_t; ++i)
        for (int j = 0; j < g.n_theta; ++j)
            for (int k = 0; k < g.n_x; ++k)
                for (int l = 0; l < g.n_y; ++l) out(i, j, k, l) = f(lg.line.t[i], g.theta(j), g.x(k), g.y(l));
    return out;
}

inline ComplexField cheb_dt(const LemmaGrid& lg, const ComplexField& f) {
    const int n = f.dims()[0], c = f.cross_size();
    Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(f.data().data(), n, c);
    ComplexField out(f.grid(), f.symmetry());
    Eigen::Map<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> O(out.data().data(), n, c);
    O = lg.line.D.cast<cplx>() * M;
    return out;
}

/// Complex coefficients a_jk = d_j dbar_k xi of i ddbar xi for complex xi.
struct ComplexHessianField {
    ComplexField a11, a12, a21, a22;
};

inline ComplexHessianField lemma_ddbar(const LemmaGrid& lg, const ComplexField& xi) {
    auto d1 = [&](const ComplexField& f) {  // (d_t - i d_theta) / 2
        ComplexField a = cheb_dt(lg, f), b = derivative(f, Axis::theta, 1);
        b *= cplx(0, -1);
        a += b;
        a *= cplx(0.5);
        return a;
    };
    auto db1 = [&](const ComplexField& f) {
        ComplexField a = cheb_dt(lg, f), b = derivative(f, Axis::theta, 1);
        b *= cplx(0, 1);
        a += b;
        a *= cplx(0.5);
        return a;
    };
    auto d2 = [](const ComplexField& f) {
        ComplexField a = derivative(f, Axis::x, 1), b = derivative(f, Axis::y, 1);
        b *= cplx(0, -1);
        a += b;
        a *= cplx(0.5);
        return a;
    };
    auto db2 = [](const ComplexField& f) {
        ComplexField a = derivative(f, Axis::x, 1), b = derivative(f, Axis::y, 1);
        b *= cplx(0, 1);
        a += b;
        a *= cplx(0.5);
        return a;
    };
    auto b1 = db1(xi), b2 = db2(xi);
    return {d1(b1), d1(b2), d2(b1), d2(b2)};
}

/// The real form i ddbar xi for real xi.
inline Form11Field lemma_form(const LemmaGrid& lg, const ScalarField& xi) {
    auto H = lemma_ddbar(lg, to_complex(xi.expand(Symmetry::full)));
    return {real_part(H.a11), H.a12, real_part(H.a22)};
}

struct DdbarLemmaReport {
    ScalarField xi;
    double residual = 0.0;  ///< interior relative residual of i ddbar xi - eta
    double xi_slope = kInf;
    double dxi_slope = kInf;  ///< cylinder rate of |d xi|; the disk |w|-slope is this minus one
    double closedness = 0.0;
    double fiber_mean_vertical = 0.0;
    double fiber_mean_mixed = 0.0;
};

namespace detail {

// maximum over t-nodes 1..n-2 (collocation rows)
inline double interior_sup(const ComplexField& f) {
    const int n = f.dims()[0], c = f.cross_size();
    double m = 0;
    for (int i = 1; i < n - 1; ++i)
        for (int k = 0; k < c; ++k) m = std::max(m, std::abs(f[static_cast<std::size_t>(i) * c + k]));
    return m;
}

inline double fiber_mean_sup(const ComplexField& f) {
    const auto d = f.dims();
    double m = 0;
    for (int i = 0; i < d[0]; ++i)
        for (int j = 0; j < d[1]; ++j) {
            cplx s = 0;
            for (int k = 0; k < d[2]; ++k)
                for (int l = 0; l < d[3]; ++l) s += f(i, j, k, l);
            m = std::max(m, std::abs(s) / (d[2] * d[3]));
        }
    return m;
}

/// Wavenumber as seen by a first spectral derivative (Nyquist removed).
inline double odd_wavenumber(int j, int n) {
    if (n > 1 && 2 * j == n) return 0.0;
    return detail::wavenumber(j, n);
}

}  // namespace detail

/**
 * @brief xi = Re(xi1 + xi2 + xi3) with i ddbar xi = eta.
 *
 * xi1 inverts d1 dbar1 on each horizontal slice, zeta = R_d(eta_12 - xi1_,12) horizontally, xi2 = R_dbar(zeta) on each
 * torus fibre and xi3 = R_ddbar of the remaining vertical part. Horizontal inverses pick the solution decaying at
 * t = T; for theta-modes whose kernel lies in the weighted space the value at t0 is fixed to zero.
 */
inline DdbarLemmaReport ddbar_lemma_solve(const LemmaGrid& lg, const Form11Field& eta, double epsilon,
                                          double tol = 1e-8) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw PreconditionError("ddbar_lemma: epsilon must lie in (0, 1)");
    const auto& g = lg.base;
    Form11Field e = eta.expanded(Symmetry::full);
    const double scale = std::max({sup_abs(e.h11), sup_abs(e.h12), sup_abs(e.h22)});
    DdbarLemmaReport rep;
    rep.xi = ScalarField(g, Symmetry::full);
    if (scale == 0.0) return rep;
    rep.fiber_mean_vertical = detail::fiber_mean_sup(to_complex(e.h22)) / scale;
    rep.fiber_mean_mixed = detail::fiber_mean_sup(e.h12) / scale;
    if (rep.fiber_mean_vertical > tol)
        throw PreconditionError("ddbar_lemma: vertical part not fibrewise exact (fibre mean " +
                                std::to_string(rep.fiber_mean_vertical * scale) + ")");
    if (rep.fiber_mean_mixed > tol)
        throw PreconditionError("ddbar_lemma: mixed part has fibre mean " + std::to_string(rep.fiber_mean_mixed * scale));
    {
        // closedness: d2 h11 = d1 h21 and d2 h12 = d1 h22
        auto d1 = [&](const ComplexField& f) {
            ComplexField a = cheb_dt(lg, f), b = derivative(f, Axis::theta, 1);
            b *= cplx(0, -1);
            a += b;
            a *= cplx(0.5);
            return a;
        };
        auto d2 = [](const ComplexField& f) {
            ComplexField a = derivative(f, Axis::x, 1), b = derivative(f, Axis::y, 1);
            b *= cplx(0, -1);
            a += b;
            a *= cplx(0.5);
            return a;
        };
        ComplexField h21 = e.h12;
        for (auto& v : h21.data()) v = std::conj(v);
        rep.closedness = std::max(detail::interior_sup(d2(to_complex(e.h11)) - d1(h21)),
                                  detail::interior_sup(d2(e.h12) - d1(to_complex(e.h22)))) /
                         scale;
        if (rep.closedness > std::max(tol, 1e-6)) throw PreconditionError("ddbar_lemma: eta is not closed (defect " + std::to_string(rep.closedness) + ")");
    }
    const int n = g.n_t;
    const Eigen::MatrixXcd D = lg.line.D.cast<cplx>();
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(n, n);
    const auto dims = stored_dims(g, Symmetry::full);
    const int cs = dims[1] * dims[2] * dims[3];
    auto line_solve = [&](ComplexField& hat, auto&& op_for_mode) {
        std::vector<Eigen::PartialPivLU<Eigen::MatrixXcd>> cache(dims[1]);
        std::vector<bool> ready(dims[1], false);
        for (int m = 0; m < cs; ++m) {
            const int j = m / (dims[2] * dims[3]);
            Eigen::VectorXcd rhs(n);
            for (int i = 0; i < n; ++i) rhs[i] = hat[static_cast<std::size_t>(i) * cs + m];
            Eigen::MatrixXcd A;
            auto bcfix = op_for_mode(j, A, rhs);
            if (!ready[j]) {
                cache[j].compute(A);
                ready[j] = true;
            }
            Eigen::VectorXcd sol = cache[j].solve(rhs);
            bcfix(sol);
            for (int i = 0; i < n; ++i) hat[static_cast<std::size_t>(i) * cs + m] = sol[i];
        }
    };
    // step 1: (1/4)(D^2 - k^2) xi1 = h11 per theta-mode
    ComplexField xi1 = to_complex(e.h11);
    transform_periodic(xi1, true);
    line_solve(xi1, [&](int j, Eigen::MatrixXcd& A, Eigen::VectorXcd& rhs) {
        const double k = detail::odd_wavenumber(j, dims[1]);
        A = 0.25 * (D * D - k * k * I);
        if (k == 0.0) {
            A.row(n - 1) = D.row(n - 1);  // xi' (T) = 0
            A.row(0) = I.row(0);          // xi(t0) = 0, then shift by a constant
            rhs[0] = 0, rhs[n - 1] = 0;
            return std::function<void(Eigen::VectorXcd&)>([n](Eigen::VectorXcd& s) {
                const cplx c = s[n - 1];
                for (int i = 0; i < n; ++i) s[i] -= c;
            });
        }
        const double ak = std::abs(k);
        A.row(n - 1) = D.row(n - 1) + ak * I.row(n - 1);  // no growing mode
        A.row(0) = I.row(0);
        rhs[0] = 0, rhs[n - 1] = 0;
        return std::function<void(Eigen::VectorXcd&)>([](Eigen::VectorXcd&) {});
    });
    transform_periodic(xi1, false);
    // step 2: (1/2)(D + k) zeta = rho with rho = h12 - (xi1)_{,1 2bar}
    auto H1 = lemma_ddbar(lg, xi1);
    ComplexField zeta = e.h12 - H1.a12;
    transform_periodic(zeta, true);
    line_solve(zeta, [&](int j, Eigen::MatrixXcd& A, Eigen::VectorXcd& rhs) {
        const double k = detail::odd_wavenumber(j, dims[1]);
        A = 0.5 * (D + k * I);
        if (k > 0.0) {
            A.row(0) = I.row(0);  // kernel e^{-k t} is admissible: pin at t0
            rhs[0] = 0;
        } else {
            A.row(n - 1) = I.row(n - 1);  // integrate in from T
            rhs[n - 1] = 0;
        }
        return std::function<void(Eigen::VectorXcd&)>([](Eigen::VectorXcd&) {});
    });
    // step 3: dbar2 xi2 = zeta fibrewise, symbol pi (i m - n)
    ComplexField xi2 = zeta;  // still in Fourier space
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dims[1]; ++j)
            for (int k = 0; k < dims[2]; ++k)
                for (int l = 0; l < dims[3]; ++l) {
                    const double a = detail::odd_wavenumber(k, dims[2]), b = detail::odd_wavenumber(l, dims[3]);
                    const cplx sym = kPi * cplx(-b, a);
                    xi2(i, j, k, l) = std::abs(sym) > 0 ? xi2(i, j, k, l) / sym : cplx(0);
                }
    transform_periodic(xi2, false);
    // step 4: d2 dbar2 xi3 = h22 - (xi1 + xi2)_{,2 2bar}, symbol -pi^2 (m^2 + n^2)
    auto H2 = lemma_ddbar(lg, xi2);
    ComplexField r3 = to_complex(e.h22) - H1.a22 - H2.a22;
    transform_periodic(r3, true);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dims[1]; ++j)
            for (int k = 0; k < dims[2]; ++k)
                for (int l = 0; l < dims[3]; ++l) {
                    const double a = detail::odd_wavenumber(k, dims[2]), b = detail::odd_wavenumber(l, dims[3]);
                    const double sym = -kPi * kPi * (a * a + b * b);
                    r3(i, j, k, l) = sym != 0.0 ? r3(i, j, k, l) / sym : cplx(0);
                }
    transform_periodic(r3, false);
    ComplexField total = xi1 + xi2 + r3;
    rep.xi = real_part(total);
    // residual at the collocation rows
    auto F = lemma_form(lg, rep.xi);
    rep.residual = std::max({detail::interior_sup(to_complex(F.h11 - e.h11)), detail::interior_sup(F.h12 - e.h12),
                             detail::interior_sup(to_complex(F.h22 - e.h22))}) /
                   scale;
    // decay slopes of |xi| and |d xi| over the middle half
    auto dxi_t = real_part(cheb_dt(lg, to_complex(rep.xi)));
    auto a = derivative(rep.xi, Axis::theta, 1), b = derivative(rep.xi, Axis::x, 1), c = derivative(rep.xi, Axis::y, 1);
    const double L = lg.line.t.back() - lg.line.t.front();
    const double lo = lg.line.t.front() + 0.25 * L, hi = lg.line.t.front() + 0.75 * L;
    std::vector<double> ts, vx, vd;
    const int c0 = rep.xi.cross_size();
    for (int i = 0; i < n; ++i) {
        double mx = 0, md = 0;
        for (int m = 0; m < c0; ++m) {
            const std::size_t p = static_cast<std::size_t>(i) * c0 + m;
            mx = std::max(mx, std::abs(rep.xi[p]));
            md = std::max(md, std::sqrt(dxi_t[p] * dxi_t[p] + a[p] * a[p] + b[p] * b[p] + c[p] * c[p]));
        }
        ts.push_back(lg.line.t[i]);
        vx.push_back(mx);
        vd.push_back(md);
    }
    rep.xi_slope = fit_decay_series(ts, vx, lo, hi).rate;
    rep.dxi_slope = fit_decay_series(ts, vd, lo, hi).rate;
    return rep;
}

// ---------------------------------------------------------------------------
// Planted examples shared by the CLI and the acceptance runs

/// Three displacement modes in x, y and t, the slowest of rate 1.5.
inline DiffeoSpec example_diffeo(double amp = 0.05) {
    DiffeoSpec s;
    s.modes.push_back({2, amp, 2.0, 1, 1, 0, 0.3});
    s.modes.push_back({3, 0.6 * amp, 1.5, 0, 0, 1, 0.0});
    s.modes.push_back({0, 0.8 * amp, 2.0, 1, 0, 0, 1.1});
    return s;
}

inline GaugePlant example_gauge_plant(const CylinderGrid& g, double d_amp = 0.02) {
    TorusFunction c{{{cplx(0.05, 0.01), 1, 0}, {cplx(0.0, 0.03), 0, 1}}};
    TorusFunction d{{{cplx(d_amp, 0.0), 1, 0}}};
    return planted_gauge(g, c, d);
}

inline double max_entry_diff(const std::vector<Mat4>& a, const std::vector<Mat4>& b) {
    double m = 0;
    for (std::size_t n = 0; n < a.size(); ++n) m = std::max(m, (a[n] - b[n]).cwiseAbs().maxCoeff());
    return m;
}

/// exp(-2t)(1 + 0.3 cos theta) + exp(-1.5t) cos 2 pi x + 0.5 exp(-1.2t) sin(theta + 2 pi y).
inline ScalarField example_lemma_potential(const LemmaGrid& lg) {
    return lemma_fill<double>(lg, [](double t, double th, double x, double y) {
        return std::exp(-2 * t) * (1 + 0.3 * std::cos(th)) + std::exp(-1.5 * t) * std::cos(2 * kPi * x) +
               0.5 * std::exp(-1.2 * t) * std::sin(th + 2 * kPi * y);
    });
}

}  // namespace acyl
