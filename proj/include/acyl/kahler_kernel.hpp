#pragma once
// (1,1)-forms on R x S^1 x T^2 with coordinates z1 = t + i theta, z2 = x + i y.

#include <array>
#include <cmath>
#include <string>

#include "acyl/field_core.hpp"

namespace acyl {

/// Raised when a form that must be positive is not.
struct PositivityError : NumericalError {
    PositivityError(const std::string& m, std::array<int, 4> at, double ev)
        : NumericalError(m), sample(at), min_eigenvalue(ev) {}
    std::array<int, 4> sample;
    double min_eigenvalue;
};

/**
 * @brief Hermitian (1,1)-form i h_{jk} dz_j ^ dzbar_k with n = 2.
 *
 * h11 and h22 are real, h12 is complex and h21 = conj(h12). All three share one symmetry tag.
 */
struct Form11Field {
    ScalarField h11;
    ComplexField h12;
    ScalarField h22;

    Form11Field() = default;
    Form11Field(ScalarField a, ComplexField b, ScalarField c) : h11(std::move(a)), h12(std::move(b)), h22(std::move(c)) {
        unify();
    }

    const CylinderGrid& grid() const { return h11.grid(); }
    Symmetry symmetry() const { return h11.symmetry(); }
    std::size_t size() const { return h11.size(); }

    const ScalarField& horizontal() const { return h11; }
    const ComplexField& mixed() const { return h12; }
    const ScalarField& vertical() const { return h22; }

    Form11Field& operator+=(const Form11Field& o) {
        h11 += o.h11;
        h12 += o.h12;
        h22 += o.h22;
        unify();
        return *this;
    }
    friend Form11Field operator+(Form11Field a, const Form11Field& b) { return a += b; }
    Form11Field& operator*=(double s) {
        h11 *= s;
        h12 *= cplx(s);
        h22 *= s;
        return *this;
    }

    Form11Field expanded(Symmetry s) const {
        Form11Field o;
        o.h11 = h11.expand(s);
        o.h12 = h12.expand(s);
        o.h22 = h22.expand(s);
        return o;
    }

    void unify() {
        Symmetry s = join(join(h11.symmetry(), h12.symmetry()), h22.symmetry());
        h11 = h11.expand(s);
        h12 = h12.expand(s);
        h22 = h22.expand(s);
    }
};

/// Constant form with the given coefficients.
inline Form11Field constant_form(const CylinderGrid& g, double a, cplx b, double c) {
    return {ScalarField(g, Symmetry::t_only, a), ComplexField(g, Symmetry::t_only, b), ScalarField(g, Symmetry::t_only, c)};
}

struct ComplexHessian {
    double h11;
    cplx h12;
    double h22;
};

/// Complex Hessian from real second derivatives.
inline ComplexHessian complex_hessian(double u_tt, double u_thth, double u_xx, double u_yy, double u_tx, double u_ty,
                                      double u_thx, double u_thy) {
    return {0.25 * (u_tt + u_thth), 0.25 * cplx(u_tx + u_thy, u_ty - u_thx), 0.25 * (u_xx + u_yy)};
}

/// i ddbar u, with spectral derivatives in the periodic directions and second-order differences in t.
inline Form11Field iddbar(const ScalarField& u) {
    const auto& g = u.grid();
    auto ut = derivative(u, Axis::t, 1);
    ScalarField h11 = derivative(u, Axis::t, 2) + derivative(u, Axis::theta, 2);
    ScalarField h22 = derivative(u, Axis::x, 2) + derivative(u, Axis::y, 2);
    ScalarField re = derivative(ut, Axis::x, 1) + derivative(derivative(u, Axis::theta, 1), Axis::y, 1);
    ScalarField im = derivative(ut, Axis::y, 1) - derivative(derivative(u, Axis::theta, 1), Axis::x, 1);
    h11 *= 0.25;
    h22 *= 0.25;
    ComplexField h12(g, re.symmetry());
    for (std::size_t n = 0; n < h12.size(); ++n) h12[n] = 0.25 * cplx(re[n], im[n]);
    return {std::move(h11), std::move(h12), std::move(h22)};
}

inline double det(double a, cplx b, double c) { return a * c - std::norm(b); }

inline double min_eigenvalue(double a, cplx b, double c) {
    const double m = 0.5 * (a + c), r = std::hypot(0.5 * (a - c), std::abs(b));
    return m - r;
}

/// Density of omega^2 relative to dt dtheta dx dy: 8 det h.
inline ScalarField top_power(const Form11Field& w) {
    ScalarField out(w.grid(), w.symmetry());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = 8.0 * det(w.h11[n], w.h12[n], w.h22[n]);
    return out;
}

/// Density of Omega ^ conj(Omega) for Omega = c (dw/w) ^ dz2.
inline ScalarField holomorphic_volume_density(const CylinderGrid& g, cplx c = 1.0) {
    return ScalarField(g, Symmetry::t_only, 4.0 * std::norm(c));
}

struct PositivityReport {
    ScalarField min_eig;
    double global_min = kInf;
    std::array<int, 4> argmin{0, 0, 0, 0};
};

inline std::array<int, 4> unravel(const std::array<int, 4>& d, std::size_t n) {
    std::array<int, 4> a{};
    for (int k = 3; k >= 0; --k) {
        a[k] = static_cast<int>(n % d[k]);
        n /= d[k];
    }
    return a;
}

inline PositivityReport positivity_spectrum(const Form11Field& w) {
    PositivityReport rep{ScalarField(w.grid(), w.symmetry())};
    std::size_t best = 0;
    for (std::size_t n = 0; n < w.size(); ++n) {
        double e = min_eigenvalue(w.h11[n], w.h12[n], w.h22[n]);
        rep.min_eig[n] = e;
        if (e < rep.global_min) {
            rep.global_min = e;
            best = n;
        }
    }
    rep.argmin = unravel(rep.min_eig.dims(), best);
    return rep;
}

inline void require_positive(const Form11Field& w, const std::string& what) {
    auto rep = positivity_spectrum(w);
    if (!(rep.global_min > 0.0)) {
        auto a = rep.argmin;
        throw PositivityError(what + " is not positive: min eigenvalue " + std::to_string(rep.global_min) +
                                  " at sample (" + std::to_string(a[0]) + "," + std::to_string(a[1]) + "," +
                                  std::to_string(a[2]) + "," + std::to_string(a[3]) + ")",
                              a, rep.global_min);
    }
}

/// log(det(w + i ddbar u) / det w) for forms given directly.
inline ScalarField ma_ratio(const Form11Field& w, const Form11Field& wu) {
    Symmetry s = join(w.symmetry(), wu.symmetry());
    Form11Field a = w.expanded(s), b = wu.expanded(s);
    ScalarField out(w.grid(), s);
    for (std::size_t n = 0; n < out.size(); ++n)
        out[n] = std::log(det(b.h11[n], b.h12[n], b.h22[n]) / det(a.h11[n], a.h12[n], a.h22[n]));
    return out;
}

/// F(u) with (w + i ddbar u)^2 = e^F w^2.
inline ScalarField ma_operator(const Form11Field& w, const ScalarField& u) {
    require_positive(w, "reference form");
    Form11Field wu = w + iddbar(u);
    require_positive(wu, "w + i ddbar u");
    return ma_ratio(w, wu);
}

/// v -> g_u^{jk} d_j d_kbar v, the derivative of ma_operator at u.
class LinearizedMA {
public:
    explicit LinearizedMA(Form11Field wu) : w_(std::move(wu)) { require_positive(w_, "linearization point"); }

    const Form11Field& form() const { return w_; }

    /// trace(h^{-1} H) for a Hessian H at sample n.
    double contract(std::size_t n, double H11, cplx H12, double H22) const {
        const double a = w_.h11[n], c = w_.h22[n];
        const cplx b = w_.h12[n];
        return (c * H11 + a * H22 - 2.0 * std::real(b * std::conj(H12))) / det(a, b, c);
    }

    ScalarField apply(const ScalarField& v) const {
        Form11Field H = iddbar(v);
        Symmetry s = join(H.symmetry(), w_.symmetry());
        Form11Field Hs = H.expanded(s);
        if (s != w_.symmetry()) return LinearizedMA(w_.expanded(s)).apply(v);
        ScalarField out(v.grid(), s);
        for (std::size_t n = 0; n < out.size(); ++n) out[n] = contract(n, Hs.h11[n], Hs.h12[n], Hs.h22[n]);
        return out;
    }

private:
    Form11Field w_;
};

inline LinearizedMA linearize(const Form11Field& wu) { return LinearizedMA(wu); }

/**
 * @brief Discrete closedness defect of a (1,1)-form.
 *
 * Interior max (two t-samples dropped at each end) of |d_2 h_{11} - d_1 h_{21}| and |d_2 h_{12} - d_1 h_{22}| with d_1 = (d_t - i d_theta)/2, d_2 = (d_x - i d_y)/2.
 */
inline double closedness_defect(const Form11Field& w) {
    auto d1 = [](const ComplexField& f) {
        ComplexField a = derivative(f, Axis::t, 1), b = derivative(f, Axis::theta, 1);
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
    ComplexField h21 = w.h12;
    for (auto& v : h21.data()) v = std::conj(v);
    ComplexField e1 = d2(to_complex(w.h11)) - d1(h21);
    ComplexField e2 = d2(w.h12) - d1(to_complex(w.h22));
    const int c = e1.cross_size(), nt = e1.dims()[0];
    double m = 0.0;
    for (int i = 2; i < nt - 2; ++i)
        for (int n = 0; n < c; ++n) {
            std::size_t p = static_cast<std::size_t>(i) * c + n;
            m = std::max({m, std::abs(e1[p]), std::abs(e2[p])});
        }
    return m;
}

inline void write_form(std::ostream& os, const Form11Field& w) {
    write_field(os, w.h11);
    write_field(os, w.h12);
    write_field(os, w.h22);
}

inline Form11Field read_form(std::istream& is, const CylinderGrid* expected = nullptr) {
    auto a = read_field_record<double>(is, expected);
    auto b = read_field_record<cplx>(is, expected);
    auto c = read_field_record<double>(is, expected);
    if (is.peek() != std::char_traits<char>::eof()) throw IoError("form payload has trailing bytes");
    return {std::move(a), std::move(b), std::move(c)};
}

}  // namespace acyl
