#pragma once

/**
 * @file field_core.hpp
 * @brief Cylinder grids, sampled fields, weighted norms, decay fits and the ACYLF1 container.
 *
 * The model cylinder is R x S^1 x T^2 with coordinates (t, theta, x, y), theta of period
 * 2*pi and x, y of period 1. Periodic directions are differentiated spectrally, t by
 * second-order finite differences.
 */

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

namespace acyl {

using cplx = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind { schema, precondition, numerical, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error(ErrorKind::schema, w) {}
};
struct PreconditionError : Error {
    explicit PreconditionError(const std::string& w) : Error(ErrorKind::precondition, w) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error(ErrorKind::numerical, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::io, w) {}
};

// ---------------------------------------------------------------------------
// Grid

/// Uniform samples in t, periodic samples in theta (period 2 pi) and x, y (period 1).
struct CylinderGrid {
    double t_min = 0.0;
    double t_max = 1.0;
    int n_t = 2;
    int n_theta = 1;
    int n_x = 1;
    int n_y = 1;
    bool half_cylinder = false;

    double ht() const { return (t_max - t_min) / (n_t - 1); }
    double t(int i) const { return t_min + i * ht(); }
    double theta(int j) const { return 2.0 * kPi * j / n_theta; }
    double x(int k) const { return static_cast<double>(k) / n_x; }
    double y(int l) const { return static_cast<double>(l) / n_y; }

    /// Disk coordinate of the end at t = +infinity.
    cplx w(int i, int j) const { return std::exp(cplx(-t(i), -theta(j))); }
    /// Disk coordinate of the end at t = -infinity.
    cplx w_second(int i, int j) const { return std::exp(cplx(t(i), -theta(j))); }

    bool operator==(const CylinderGrid&) const = default;
};

inline bool is_pow2(int n) { return n >= 1 && std::has_single_bit(static_cast<unsigned>(n)); }

inline CylinderGrid make_grid(double t_min, double t_max, int n_t, int n_theta, int n_x, int n_y,
                              bool half_cylinder) {
    if (!(t_max > t_min)) throw PreconditionError("make_grid: non-positive t range");
    if (n_t < 2) throw PreconditionError("make_grid: n_t must be at least 2");
    if (!is_pow2(n_theta) || !is_pow2(n_x) || !is_pow2(n_y))
        throw PreconditionError("make_grid: periodic counts must be powers of two");
    if (half_cylinder && t_min < 0.0) throw PreconditionError("make_grid: half cylinder needs t_min >= 0");
    return CylinderGrid{t_min, t_max, n_t, n_theta, n_x, n_y, half_cylinder};
}

// ---------------------------------------------------------------------------
// Symmetry tags

enum class Symmetry { full, t_only, t_x, t_theta };

inline std::string to_string(Symmetry s) {
    switch (s) {
    case Symmetry::full: return "full";
    case Symmetry::t_only: return "t-only";
    case Symmetry::t_x: return "(t,x)-only";
    case Symmetry::t_theta: return "(t,theta)-only";
    }
    return "full";
}

inline Symmetry symmetry_from_string(const std::string& s) {
    if (s == "full") return Symmetry::full;
    if (s == "t-only") return Symmetry::t_only;
    if (s == "(t,x)-only") return Symmetry::t_x;
    if (s == "(t,theta)-only") return Symmetry::t_theta;
    throw SchemaError("unknown symmetry tag: " + s);
}

/// Stored extents (t, theta, x, y) for a symmetry tag.
inline std::array<int, 4> stored_dims(const CylinderGrid& g, Symmetry s) {
    switch (s) {
    case Symmetry::full: return {g.n_t, g.n_theta, g.n_x, g.n_y};
    case Symmetry::t_only: return {g.n_t, 1, 1, 1};
    case Symmetry::t_x: return {g.n_t, 1, g.n_x, 1};
    case Symmetry::t_theta: return {g.n_t, g.n_theta, 1, 1};
    }
    return {g.n_t, g.n_theta, g.n_x, g.n_y};
}

/// Smallest tag whose stored coordinates include those of both arguments.
inline Symmetry join(Symmetry a, Symmetry b) {
    if (a == b) return a;
    if (a == Symmetry::t_only) return b;
    if (b == Symmetry::t_only) return a;
    return Symmetry::full;
}

// ---------------------------------------------------------------------------
// Fields

template <class T>
class Field {
public:
    using value_type = T;

    Field() = default;
    Field(const CylinderGrid& g, Symmetry s, T fill = T{}) : grid_(g), sym_(s), dims_(stored_dims(g, s)) {
        data_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] * dims_[3], fill);
    }

    const CylinderGrid& grid() const { return grid_; }
    Symmetry symmetry() const { return sym_; }
    const std::array<int, 4>& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    int cross_size() const { return dims_[1] * dims_[2] * dims_[3]; }

    std::size_t index(int i, int j, int k, int l) const {
        return ((static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l;
    }
    T& operator()(int i, int j, int k, int l) { return data_[index(i, j, k, l)]; }
    const T& operator()(int i, int j, int k, int l) const { return data_[index(i, j, k, l)]; }
    T& operator[](std::size_t n) { return data_[n]; }
    const T& operator[](std::size_t n) const { return data_[n]; }

    /// Value at full-grid indices; reduced coordinates are ignored.
    const T& at_full(int i, int j, int k, int l) const {
        return (*this)(i, dims_[1] == 1 ? 0 : j, dims_[2] == 1 ? 0 : k, dims_[3] == 1 ? 0 : l);
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    /// Fill from f(t, theta, x, y) at the stored samples.
    template <class F>
    Field& fill(F&& f) {
        for (int i = 0; i < dims_[0]; ++i)
            for (int j = 0; j < dims_[1]; ++j)
                for (int k = 0; k < dims_[2]; ++k)
                    for (int l = 0; l < dims_[3]; ++l)
                        (*this)(i, j, k, l) = static_cast<T>(f(grid_.t(i), grid_.theta(j), grid_.x(k), grid_.y(l)));
        return *this;
    }

    /// Broadcast to a (weakly) larger symmetry tag.
    Field expand(Symmetry target) const {
        if (target == sym_) return *this;
        Symmetry j = join(sym_, target);
        if (j != target) throw PreconditionError("expand: target tag does not contain the field's coordinates");
        Field out(grid_, target);
        auto d = out.dims();
        for (int i = 0; i < d[0]; ++i)
            for (int a = 0; a < d[1]; ++a)
                for (int b = 0; b < d[2]; ++b)
                    for (int c = 0; c < d[3]; ++c) out(i, a, b, c) = at_full(i, a, b, c);
        return out;
    }

    Field& operator+=(const Field& o) { return combine(o, [](T a, T b) { return a + b; }); }
    Field& operator-=(const Field& o) { return combine(o, [](T a, T b) { return a - b; }); }
    Field& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }
    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(T s, Field a) { return a *= s; }

    bool all_finite() const {
        for (const auto& v : data_)
            if (!std::isfinite(std::abs(v))) return false;
        return true;
    }

private:
    template <class Op>
    Field& combine(const Field& o, Op op) {
        if (!(o.grid_ == grid_)) throw PreconditionError("field arithmetic on different grids");
        if (o.sym_ != sym_) {
            Symmetry j = join(sym_, o.sym_);
            *this = expand(j);
            Field oe = o.expand(j);
            for (std::size_t n = 0; n < data_.size(); ++n) data_[n] = op(data_[n], oe.data_[n]);
            return *this;
        }
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] = op(data_[n], o.data_[n]);
        return *this;
    }

    CylinderGrid grid_{};
    Symmetry sym_ = Symmetry::full;
    std::array<int, 4> dims_{1, 1, 1, 1};
    std::vector<T> data_;
};

using ScalarField = Field<double>;
using ComplexField = Field<cplx>;

inline ComplexField to_complex(const ScalarField& f) {
    ComplexField c(f.grid(), f.symmetry());
    for (std::size_t n = 0; n < f.size(); ++n) c[n] = f[n];
    return c;
}

inline ScalarField real_part(const ComplexField& f) {
    ScalarField r(f.grid(), f.symmetry());
    for (std::size_t n = 0; n < f.size(); ++n) r[n] = f[n].real();
    return r;
}

inline ScalarField imag_part(const ComplexField& f) {
    ScalarField r(f.grid(), f.symmetry());
    for (std::size_t n = 0; n < f.size(); ++n) r[n] = f[n].imag();
    return r;
}

template <class T>
double sup_abs(const Field<T>& f) {
    double m = 0.0;
    for (const auto& v : f.data()) m = std::max(m, std::abs(v));
    return m;
}

/// Average over the stored cross-section at each t.
template <class T>
std::vector<T> cross_mean(const Field<T>& f) {
    std::vector<T> out(f.dims()[0], T{});
    const int c = f.cross_size();
    for (int i = 0; i < f.dims()[0]; ++i) {
        T s{};
        for (int n = 0; n < c; ++n) s += f[static_cast<std::size_t>(i) * c + n];
        out[i] = s / static_cast<double>(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Differentiation

enum class Axis { t = 0, theta = 1, x = 2, y = 3 };

namespace detail {

struct FftPlanCache {
    struct Plans {
        fftw_plan fwd;
        fftw_plan bwd;
        fftw_complex* buf;
    };
    std::map<int, Plans> plans;

    // the FFTW planner is shared by all threads
    static std::mutex& planner_mutex() {
        static std::mutex mu;
        return mu;
    }

    Plans& get(int n) {
        auto it = plans.find(n);
        if (it != plans.end()) return it->second;
        std::lock_guard<std::mutex> lock(planner_mutex());
        auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        Plans p{fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE),
                fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE), buf};
        return plans.emplace(n, p).first->second;
    }
    ~FftPlanCache() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        for (auto& [n, p] : plans) {
            fftw_destroy_plan(p.fwd);
            fftw_destroy_plan(p.bwd);
            fftw_free(p.buf);
        }
    }
};

inline FftPlanCache& fft_cache() {
    thread_local FftPlanCache cache;
    return cache;
}

/// Signed wavenumber of DFT bin m for length n.
inline int wavenumber(int m, int n) { return m <= n / 2 ? m : m - n; }

/// In-place spectral derivative of a periodic line of length n and period L.
inline void spectral_line(std::vector<cplx>& line, int order, double period) {
    const int n = static_cast<int>(line.size());
    if (n == 1) {
        line[0] = order == 0 ? line[0] : cplx(0.0);
        return;
    }
    auto& p = fft_cache().get(n);
    std::memcpy(p.buf, line.data(), sizeof(cplx) * n);
    fftw_execute(p.fwd);
    auto* b = reinterpret_cast<cplx*>(p.buf);
    const double base = 2.0 * kPi / period;
    for (int m = 0; m < n; ++m) {
        int k = wavenumber(m, n);
        if (order % 2 == 1 && 2 * m == n) k = 0;  // Nyquist mode has no odd derivative
        cplx fac = std::pow(cplx(0.0, base * k), order);
        b[m] *= fac / static_cast<double>(n);
    }
    fftw_execute(p.bwd);
    std::memcpy(line.data(), p.buf, sizeof(cplx) * n);
}

}  // namespace detail

/// Second-order finite difference of a uniformly sampled line (one-sided at the ends).
template <class T>
std::vector<T> fd_line(const std::vector<T>& u, double h, int order) {
    const int n = static_cast<int>(u.size());
    std::vector<T> d(n, T{});
    if (order == 0) return u;
    if (order == 1) {
        if (n < 3) {
            for (int i = 0; i < n; ++i) d[i] = (u[n - 1] - u[0]) / ((n - 1) * h);
            return d;
        }
        for (int i = 1; i < n - 1; ++i) d[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
        d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        d[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
        return d;
    }
    if (order == 2) {
        if (n < 4) throw PreconditionError("second t-derivative needs at least 4 samples");
        const double h2 = h * h;
        for (int i = 1; i < n - 1; ++i) d[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
        d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2;
        d[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / h2;
        return d;
    }
    throw PreconditionError("fd_line: order must be 0, 1 or 2");
}

/// Derivative of the given order along one axis; same symmetry tag as the input.
template <class T>
Field<T> derivative(const Field<T>& f, Axis axis, int order) {
    Field<T> out(f.grid(), f.symmetry());
    const auto d = f.dims();
    const int a = static_cast<int>(axis);
    if (order == 0) return f;
    if (d[a] == 1 && a != 0) return out;  // field does not depend on this coordinate
    const int len = d[a];
    std::array<int, 4> stride{d[1] * d[2] * d[3], d[2] * d[3], d[3], 1};
    const std::size_t total = f.size();
    std::vector<T> line(len);
    std::vector<cplx> cl(len);
    for (std::size_t base = 0; base < total; ++base) {
        // visit each line once: base must have zero coordinate along the axis
        std::size_t coord = (base / stride[a]) % len;
        if (coord != 0) continue;
        for (int m = 0; m < len; ++m) line[m] = f[base + static_cast<std::size_t>(m) * stride[a]];
        if (a == 0) {
            auto r = fd_line(line, f.grid().ht(), order);
            for (int m = 0; m < len; ++m) out[base + static_cast<std::size_t>(m) * stride[a]] = r[m];
        } else {
            for (int m = 0; m < len; ++m) cl[m] = cplx(line[m]);
            detail::spectral_line(cl, order, a == 1 ? 2.0 * kPi : 1.0);
            for (int m = 0; m < len; ++m) {
                if constexpr (std::is_same_v<T, double>)
                    out[base + static_cast<std::size_t>(m) * stride[a]] = cl[m].real();
                else
                    out[base + static_cast<std::size_t>(m) * stride[a]] = cl[m];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weighted norms

struct WeightedNormReport {
    double delta = 0.0;
    int k = 0;
    double value = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
};

/**
 * @brief Discrete surrogate of the weighted C^k norm: max of e^{delta t} |d^a u| over |a| <= k.
 *
 * Only samples with t >= 0 are used, so on a bi-infinite grid this measures the end at
 * t = +infinity.
 */
template <class T>
WeightedNormReport weighted_sup_norm(const Field<T>& f, double delta, int k) {
    if (k < 0 || k > 2) throw PreconditionError("weighted_sup_norm: k must be in {0,1,2}");
    std::vector<Field<T>> parts{f};
    const Axis axes[4] = {Axis::t, Axis::theta, Axis::x, Axis::y};
    if (k >= 1) {
        std::vector<Field<T>> first;
        for (Axis a : axes) first.push_back(derivative(f, a, 1));
        for (auto& p : first) parts.push_back(p);
        if (k == 2) {
            for (int i = 0; i < 4; ++i) {
                parts.push_back(derivative(f, axes[i], 2));
                for (int j = i + 1; j < 4; ++j) parts.push_back(derivative(first[i], axes[j], 1));
            }
        }
    }
    const auto& g = f.grid();
    const int c = f.cross_size();
    double best = 0.0;
    double lo = kInf, hi = -kInf;
    for (int i = 0; i < f.dims()[0]; ++i) {
        double t = g.t(i);
        if (t < 0.0) continue;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
        double w = std::exp(delta * t);
        for (const auto& p : parts)
            for (int n = 0; n < c; ++n) best = std::max(best, w * std::abs(p[static_cast<std::size_t>(i) * c + n]));
    }
    if (lo == kInf) throw PreconditionError("weighted_sup_norm: grid has no samples with t >= 0");
    return {delta, k, best, lo, hi};
}

// ---------------------------------------------------------------------------
// Decay fits

struct DecayFit {
    double rate = kInf;       ///< fitted decay rate; +inf when the field vanishes
    double intercept = 0.0;   ///< log-amplitude at t = 0
    double residual = 0.0;    ///< rms of the log-linear fit
    int samples = 0;
};

/// Ordinary least squares y = a + b x; returns {a, b, rms}.
inline std::array<double, 3> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) throw PreconditionError("linear_fit: need at least two points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw PreconditionError("linear_fit: degenerate abscissae");
    double b = sxy / sxx;
    double a = my - b * mx;
    double r = 0;
    for (std::size_t i = 0; i < n; ++i) r += std::pow(y[i] - a - b * x[i], 2);
    return {a, b, std::sqrt(r / n)};
}

/// Fit of log(series) against t on samples with t in [t_lo, t_hi] and positive values.
inline DecayFit fit_decay_series(const std::vector<double>& t, const std::vector<double>& v, double t_lo,
                                 double t_hi) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_lo - 1e-12 || t[i] > t_hi + 1e-12) continue;
        if (v[i] > 0.0 && std::isfinite(v[i])) {
            xs.push_back(t[i]);
            ys.push_back(std::log(v[i]));
        }
    }
    DecayFit out;
    if (xs.size() < 2) return out;
    auto [a, b, rms] = linear_fit(xs, ys);
    out.rate = -b;
    out.intercept = a;
    out.residual = rms;
    out.samples = static_cast<int>(xs.size());
    return out;
}

/// Decay rate of the cross-sectional sup of |f| over the window.
template <class T>
DecayFit fit_decay_rate(const Field<T>& f, double t_lo, double t_hi) {
    const auto& g = f.grid();
    if (t_lo < g.t_min - 1e-12 || t_hi > g.t_max + 1e-12 || !(t_hi > t_lo))
        throw PreconditionError("fit_decay_rate: window outside the grid");
    std::vector<double> ts, vs;
    const int c = f.cross_size();
    for (int i = 0; i < f.dims()[0]; ++i) {
        double m = 0.0;
        for (int n = 0; n < c; ++n) m = std::max(m, std::abs(f[static_cast<std::size_t>(i) * c + n]));
        ts.push_back(g.t(i));
        vs.push_back(m);
    }
    return fit_decay_series(ts, vs, t_lo, t_hi);
}

// ---------------------------------------------------------------------------
// ACYLF1 container

namespace detail {

inline void put_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_le(std::istream& is, double& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
    return true;
}

}  // namespace detail

template <class T>
constexpr const char* dtype_name() {
    return std::is_same_v<T, double> ? "f64" : "c128";
}

template <class T>
void write_field(std::ostream& os, const Field<T>& f) {
    const auto& g = f.grid();
    nlohmann::json h = {{"magic", "ACYLF1"}, {"t_min", g.t_min},       {"t_max", g.t_max},
                        {"n_t", g.n_t},      {"n_theta", g.n_theta},   {"n_x", g.n_x},
                        {"n_y", g.n_y},      {"half_cylinder", g.half_cylinder},
                        {"symmetry", to_string(f.symmetry())},         {"dtype", dtype_name<T>()}};
    os << h.dump() << '\n';
    for (const auto& v : f.data()) {
        if constexpr (std::is_same_v<T, double>) {
            detail::put_le(os, v);
        } else {
            detail::put_le(os, v.real());
            detail::put_le(os, v.imag());
        }
    }
}

template <class T>
void write_field(const std::string& path, const Field<T>& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_field(os, f);
}

/// Read one field record, leaving the stream positioned after it.
template <class T>
Field<T> read_field_record(std::istream& is, const CylinderGrid* expected = nullptr) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("field header: empty input");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw IoError(std::string("field header: malformed JSON: ") + e.what());
    }
    if (!h.is_object() || h.value("magic", "") != "ACYLF1") throw IoError("field header: bad magic");
    for (const char* key : {"t_min", "t_max", "n_t", "n_theta", "n_x", "n_y", "symmetry", "dtype"})
        if (!h.contains(key)) throw IoError(std::string("field header: missing ") + key);
    if (h["dtype"].get<std::string>() != dtype_name<T>()) throw IoError("field header: dtype mismatch");
    CylinderGrid g;
    try {
        g = make_grid(h["t_min"].get<double>(), h["t_max"].get<double>(), h["n_t"].get<int>(),
                      h["n_theta"].get<int>(), h["n_x"].get<int>(), h["n_y"].get<int>(),
                      h.value("half_cylinder", false));
    } catch (const Error& e) {
        throw IoError(std::string("field header: ") + e.what());
    }
    if (expected && !(g.n_t == expected->n_t && g.n_theta == expected->n_theta && g.n_x == expected->n_x &&
                      g.n_y == expected->n_y))
        throw IoError("field dimensions do not match the expected grid");
    Field<T> f(g, symmetry_from_string(h["symmetry"].get<std::string>()));
    for (auto& v : f.data()) {
        double re = 0, im = 0;
        if (!detail::get_le(is, re)) throw IoError("field payload truncated");
        if constexpr (std::is_same_v<T, double>) {
            v = re;
        } else {
            if (!detail::get_le(is, im)) throw IoError("field payload truncated");
            v = cplx(re, im);
        }
    }
    return f;
}

/// Read a field; when `expected` is given its dimensions must match the header.
template <class T>
Field<T> read_field(std::istream& is, const CylinderGrid* expected = nullptr) {
    auto f = read_field_record<T>(is, expected);
    if (is.peek() != std::char_traits<char>::eof()) throw IoError("field payload has trailing bytes");
    return f;
}

template <class T>
Field<T> read_field(const std::string& path, const CylinderGrid* expected = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_field<T>(is, expected);
}

// ---------------------------------------------------------------------------
// Quadrature helpers

/// Trapezoidal weights on the t-samples of a grid.
inline std::vector<double> trapezoid_weights(const CylinderGrid& g) {
    std::vector<double> w(g.n_t, g.ht());
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

/// Integral over the truncated cylinder (trapezoid in t, rectangle rule in the periodic directions).
inline double integrate(const ScalarField& f) {
    const auto& g = f.grid();
    auto w = trapezoid_weights(g);
    auto m = cross_mean(f);
    double s = 0.0;
    for (int i = 0; i < g.n_t; ++i) s += w[i] * m[i];
    return s * 2.0 * kPi;  // cross-section volume: 2 pi x 1 x 1
}

}  // namespace acyl
