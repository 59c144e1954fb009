#pragma once
// Experiment runner behind the acyl_cy binary: config blocks, subcommand runners, exit codes.

#include <atomic>
#include <cctype>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "acyl/cyl_elliptic.hpp"
#include "acyl/estimates_lab.hpp"
#include "acyl/gauge_lab.hpp"
#include "acyl/glue_construct.hpp"
#include "acyl/ma_solver.hpp"
#include "acyl/pipeline.hpp"
#include "acyl/report.hpp"

namespace acyl {

namespace fs = std::filesystem;

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s{"elliptic", "glue", "solve", "gauge", "estimates", "pipeline", "report"};
    return s;
}

enum ExitCode { kExitPass = 0, kExitFail = 1, kExitSchema = 2, kExitNumerical = 3 };

// ---------------------------------------------------------------------------
// Config blocks

/// Strict reader over one JSON object: unknown keys are schema errors, resolved values are echoed.
class Params {
public:
    Params(const json& j, std::string where) : j_(j.is_null() ? json::object() : j), where_(std::move(where)) {
        if (!j_.is_object()) throw SchemaError(where_ + ": expected an object");
    }

    double num(const std::string& k, double def) {
        double v = def;
        if (auto* p = take(k)) {
            if (!p->is_number()) throw SchemaError(at(k) + ": expected a number");
            v = p->get<double>();
        }
        echo_[k] = v;
        return v;
    }
    int integer(const std::string& k, int def) {
        int v = def;
        if (auto* p = take(k)) {
            if (!p->is_number_integer()) throw SchemaError(at(k) + ": expected an integer");
            v = p->get<int>();
        }
        echo_[k] = v;
        return v;
    }
    bool flag(const std::string& k, bool def) {
        bool v = def;
        if (auto* p = take(k)) {
            if (!p->is_boolean()) throw SchemaError(at(k) + ": expected true or false");
            v = p->get<bool>();
        }
        echo_[k] = v;
        return v;
    }
    std::string str(const std::string& k, const std::string& def, const std::vector<std::string>& allowed = {}) {
        std::string v = def;
        if (auto* p = take(k)) {
            if (!p->is_string()) throw SchemaError(at(k) + ": expected a string");
            v = p->get<std::string>();
        }
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end())
            throw SchemaError(at(k) + ": unknown value '" + v + "'");
        echo_[k] = v;
        return v;
    }
    std::vector<double> nums(const std::string& k, const std::vector<double>& def) {
        std::vector<double> v = def;
        if (auto* p = take(k)) {
            if (!p->is_array()) throw SchemaError(at(k) + ": expected an array of numbers");
            v.clear();
            for (const auto& e : *p) {
                if (!e.is_number()) throw SchemaError(at(k) + ": expected an array of numbers");
                v.push_back(e.get<double>());
            }
        }
        echo_[k] = v;
        return v;
    }
    std::vector<int> ints(const std::string& k, const std::vector<int>& def) {
        std::vector<int> v = def;
        if (auto* p = take(k)) {
            if (!p->is_array()) throw SchemaError(at(k) + ": expected an array of integers");
            v.clear();
            for (const auto& e : *p) {
                if (!e.is_number_integer()) throw SchemaError(at(k) + ": expected an array of integers");
                v.push_back(e.get<int>());
            }
        }
        echo_[k] = v;
        return v;
    }
    template <class F>
    auto nested(const std::string& k, F&& f) {
        const json* p = take(k);
        Params child(p ? *p : json::object(), at(k));
        auto out = f(child);
        echo_[k] = child.finish();
        return out;
    }

    /// Rejects unread keys and returns the resolved block.
    json finish() {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw SchemaError(at(it.key()) + ": unknown key");
        return echo_;
    }

private:
    const json* take(const std::string& k) {
        seen_.insert(k);
        auto it = j_.find(k);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string at(const std::string& k) const { return where_ + "." + k; }

    json j_;
    std::string where_;
    std::set<std::string> seen_;
    json echo_ = json::object();
};

inline CylinderGrid read_grid(Params& P, const std::string& key, const CylinderGrid& def) {
    return P.nested(key, [&](Params& G) {
        return make_grid(G.num("t_min", def.t_min), G.num("t_max", def.t_max), G.integer("n_t", def.n_t),
                         G.integer("n_theta", def.n_theta), G.integer("n_x", def.n_x), G.integer("n_y", def.n_y),
                         def.half_cylinder);
    });
}

struct ExperimentConfig {
    std::string subcommand;
    unsigned long long seed = 1;
    std::string out;
    int workers = 0;                    ///< 0 until resolved: flag, config, ACYL_CY_WORKERS, then 1
    double tol_scale = 1.0;
    json blocks = json::object();       ///< raw module blocks keyed by subcommand
    std::vector<std::string> inputs;    ///< report inputs
    bool list_critical = false;         ///< elliptic: print the weight list
};

/// Top-level keys: subcommand, seed, out, workers, tol_scale and one block per subcommand.
inline ExperimentConfig parse_config(const json& j, const std::string& subcommand) {
    if (j.is_null() || (j.is_object() && j.empty())) throw SchemaError("empty config");
    if (!j.is_object()) throw SchemaError("config: expected an object");
    ExperimentConfig c;
    c.subcommand = subcommand;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        const auto& v = it.value();
        if (k == "subcommand") {
            if (!v.is_string() || v.get<std::string>() != subcommand)
                throw SchemaError("config.subcommand does not match '" + subcommand + "'");
        } else if (k == "seed") {
            if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
                throw SchemaError("config.seed: expected a non-negative integer");
            c.seed = v.get<unsigned long long>();
        } else if (k == "out") {
            if (!v.is_string()) throw SchemaError("config.out: expected a string");
            c.out = v.get<std::string>();
        } else if (k == "workers") {
            if (!v.is_number_integer() || v.get<int>() < 1) throw SchemaError("config.workers: expected an integer >= 1");
            c.workers = v.get<int>();
        } else if (k == "tol_scale") {
            if (!v.is_number() || !(v.get<double>() > 0)) throw SchemaError("config.tol_scale: expected a positive number");
            c.tol_scale = v.get<double>();
        } else if (std::find(subcommands().begin(), subcommands().end(), k) != subcommands().end()) {
            if (!v.is_object()) throw SchemaError("config." + k + ": expected an object");
            c.blocks[k] = v;
        } else {
            throw SchemaError("config." + k + ": unknown key");
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Jobs

/// Runs body(i) for i in [0, n) on up to `workers` threads; results go to caller-owned slot i.
inline void parallel_for(int n, int workers, const std::function<void(int)>& body) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

/// Per-job seed, independent of the worker count.
inline unsigned long long job_seed(unsigned long long seed, unsigned long long job) {
    std::seed_seq q{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(job), static_cast<std::uint32_t>(job >> 32)};
    std::uint32_t parts[2];
    q.generate(parts, parts + 2);
    return (static_cast<unsigned long long>(parts[0]) << 32) | parts[1];
}

struct RunContext {
    ExperimentConfig cfg;
    fs::path out;
    std::ostream* console = &std::cout;

    double tol(double x) const { return x * cfg.tol_scale; }
    fs::path file(const std::string& name) const { return out / name; }
};

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

inline double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) lx.push_back(std::log(x[i])), ly.push_back(std::log(y[i]));
    return linear_fit(lx, ly)[1];
}

// ---------------------------------------------------------------------------
// elliptic

inline void run_elliptic(RunContext& ctx, Params& P, SolveReport& rep) {
    const auto op_name = P.str("operator", "laplacian", {"laplacian", "dbar"});
    const OpKind op = op_name == "dbar" ? OpKind::dbar : OpKind::laplacian;
    CrossSection cs{P.flag("torus", false)};
    const auto range = P.nums("range", {-5.0, 5.0});
    if (range.size() != 2 || !(range[0] < range[1])) throw SchemaError("elliptic.range: expected [lo, hi] with lo < hi");
    const int samples = P.integer("scan_samples", 189);
    const double offset = P.num("scan_offset", 1e-6);
    const double lambda_max = P.num("lambda_max", 36.0);
    const double threshold = P.num("condition_threshold", 1e6);

    std::vector<CriticalWeight> listed;
    {
        StageTimer t(rep, "critical_weights");
        listed = critical_weights(op, cs, range[0], range[1]);
    }
    json wl = json::array();
    CsvTable wt{{"weight", "solutions", "polynomial_degree"}, {}};
    for (const auto& w : listed) {
        wl.push_back({{"weight", w.value}, {"solutions", w.solutions}, {"polynomial_degree", w.polynomial_degree}});
        wt.rows.push_back({csv_number(w.value), std::to_string(w.solutions), std::to_string(w.polynomial_degree)});
    }
    rep.metrics["critical_weights"] = wl;
    write_csv(ctx.file("critical_weights.csv"), wt);
    if (ctx.cfg.list_critical)
        for (const auto& w : listed)
            *ctx.console << w.value << " " << w.solutions << " " << w.polynomial_degree << "\n";

    if (op == OpKind::laplacian && !cs.with_torus) {
        const int lo = static_cast<int>(std::ceil(range[0])), hi = static_cast<int>(std::floor(range[1]));
        bool ok = static_cast<int>(listed.size()) == hi - lo + 1;
        for (std::size_t k = 0; ok && k < listed.size(); ++k) {
            const auto& w = listed[k];
            ok = w.value == static_cast<double>(lo + static_cast<int>(k)) &&
                 w.solutions == 2 && w.polynomial_degree == (w.value == 0.0 ? 1 : 0);
        }
        rep.verdict("critical_weights_integers", 1, ok,
                    std::to_string(listed.size()) + " weights on [" + fmt(range[0]) + ", " + fmt(range[1]) + "]");
    }

    if (op == OpKind::laplacian) {
        StageTimer t(rep, "condition_scan");
        const double a = range[0] - 0.5, b = range[1] + 0.5;
        auto near = critical_weights(op, cs, a, b);
        std::mt19937_64 rng(ctx.cfg.seed);
        std::uniform_real_distribution<double> off(-offset, offset);
        std::vector<double> deltas;
        for (int j = 0; j < samples; ++j) deltas.push_back(a + (j + 0.5) * (b - a) / samples);
        for (const auto& w : near) deltas.push_back(w.value + off(rng));
        std::vector<double> cond(deltas.size());
        parallel_for(static_cast<int>(deltas.size()), ctx.cfg.workers,
                     [&](int i) { cond[i] = mode_condition_number(deltas[i], cs, lambda_max); });
        bool ok = true;
        int flagged = 0;
        CsvTable st{{"delta", "condition", "near_listed"}, {}};
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            double dist = kInf;
            for (const auto& w : near) dist = std::min(dist, std::abs(deltas[i] - w.value));
            const bool is_near = dist <= offset, degenerate = cond[i] >= threshold;
            ok = ok && is_near == degenerate;
            flagged += degenerate;
            st.rows.push_back({csv_number(deltas[i]), csv_number(cond[i]), is_near ? "1" : "0"});
        }
        write_csv(ctx.file("condition_scan.csv"), st);
        PlotSpec p{"weighted mode condition number", "delta", "condition", false, true, {}};
        std::vector<std::size_t> order(deltas.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto x, auto y) { return deltas[x] < deltas[y]; });
        PlotSeries s{"scan", {}, {}, true};
        for (auto k : order) s.x.push_back(deltas[k]), s.y.push_back(cond[k]);
        p.series.push_back(s);
        write_svg(ctx.file("condition_scan.svg"), p);
        rep.metrics["scan"] = {{"samples", deltas.size()}, {"degenerate", flagged}, {"threshold", threshold}};
        rep.verdict("condition_scan", 1, ok,
                    std::to_string(flagged) + " of " + std::to_string(deltas.size()) + " samples degenerate");
    }
}

// ---------------------------------------------------------------------------
// glue

inline GlueParams read_glue_params(Params& P) {
    GlueParams g;
    g.r = P.num("r", g.r);
    g.s = P.num("s", g.s);
    g.r0 = P.num("r0", g.r0);
    g.torus_b = P.num("torus_b", g.torus_b);
    g.omega_scale = P.num("omega_scale", g.omega_scale);
    g.validate();
    return g;
}

inline void run_glue(RunContext& ctx, Params& P, SolveReport& rep) {
    const GlueParams gp = read_glue_params(P);
    const double t_max = P.num("t_max", 12.0), samples = P.num("samples", 16.0), perturb = P.num("perturb", 0.01);
    {
        StageTimer t(rep, "volume_condition");
        auto g = resolving_grid(gp.r, gp.s, t_max, samples);
        auto vc = solve_volume_condition(g, gp);
        auto bg = build_background(g, gp, vc.t_b);
        auto cal = compute_calibration_f(bg);
        double worst = 0.0;
        for (double d : {-perturb, perturb}) {
            auto moved = compute_calibration_f(build_background(g, gp, vc.t_b * (1 + d)));
            const double shift = moved.integral_residual - cal.integral_residual;
            worst = std::max(worst, std::abs(shift / (-vc.c1 * vc.t_b * d) - 1.0));
        }
        const double rel = std::abs(cal.integral_residual) / cal.volume;
        rep.metrics["volume_condition"] = {
            {"n_t", g.n_t},          {"t_b", vc.t_b},         {"c0", vc.c0},
            {"c1", vc.c1},           {"c0_exact", vc.c0_exact}, {"c1_exact", vc.c1_exact},
            {"heuristic", vc.heuristic}, {"positivity_min", vc.positivity_min},
            {"integral_residual", cal.integral_residual}, {"volume", cal.volume}, {"relative_integral", rel},
            {"linearity_deviation", worst}, {"f_decay_rate", num(cal.decay_rate)}, {"min_eigenvalue", bg.min_eigenvalue}};
        rep.verdict("integral_condition", 3, rel <= ctx.tol(1e-8), "relative integral " + fmt(rel));
        rep.verdict("volume_linearity", 3, worst <= ctx.tol(1e-6), "relative deviation " + fmt(worst));
    }
    P.nested("sweep", [&](Params& S) {
        const bool on = S.flag("enabled", true);
        const auto rule_text = S.str("rule", "s = r^2");
        const auto rs = S.nums("r", {0.1, 0.07, 0.05, 0.035, 0.025, 0.018});
        if (!on) return 0;
        if (rs.size() < 3) throw SchemaError("glue.sweep.r: need at least three radii");
        StageTimer t(rep, "sweep");
        auto rule = parse_rule(rule_text);
        std::vector<SweepRow> rows(rs.size());
        parallel_for(static_cast<int>(rs.size()), ctx.cfg.workers, [&](int i) {
            GlueParams q = gp;
            q.r = rs[i], q.s = rule(rs[i]);
            q.validate();
            rows[i] = sweep_point(q, t_max, samples);
        });
        std::ofstream os(ctx.file("sweep.csv"));
        write_sweep_csv(os, rows);
        std::vector<double> model, tb;
        for (const auto& r : rows) model.push_back(std::abs(std::log(r.r)) / (r.r * r.s)), tb.push_back(r.t_b);
        const double slope = log_slope(model, tb);
        rep.metrics["sweep"] = {{"rule", rule_text}, {"r", rs}, {"t_b", tb}, {"model", model}, {"slope", slope}};
        rep.verdict("bump_scaling", 4, std::abs(slope - 1.0) <= 0.05, "slope against |log r|/(r s): " + fmt(slope));
        write_svg(ctx.file("sweep.svg"),
                  PlotSpec{"bump amplitude t_b", "|log r|/(r s)", "t_b", true, true, {{"t_b", model, tb, true},
                                                                                      {"model", model, model, false}}});
        return 0;
    });
    P.nested("bumps", [&](Params& B) {
        const int count = B.integer("count", 100), n = B.integer("samples", 10000);
        const double slack = B.num("slack", 1e-3);
        if (count < 0 || n < 2) throw SchemaError("glue.bumps: need count >= 0 and samples >= 2");
        StageTimer t(rep, "derivative_bounds");
        std::vector<DerivativeBoundsReport> out(count);
        parallel_for(count, ctx.cfg.workers, [&](int i) {
            std::mt19937_64 rng(job_seed(ctx.cfg.seed, i));
            out[i] = derivative_bounds_check(make_radial_profile(random_radial_bump(rng), n + 1), slack);
        });
        double mg = 0, mh = 0;
        bool ok = true;
        for (const auto& r : out) mg = std::max(mg, r.max_ratio_gradient), mh = std::max(mh, r.max_ratio_hessian), ok &= r.passed;
        rep.metrics["derivative_bounds"] = {{"profiles", count}, {"samples", n + 1}, {"max_ratio_gradient", mg},
                                            {"max_ratio_hessian", mh}};
        if (count > 0)
            rep.verdict("derivative_bounds", 5, ok, "max ratios " + fmt(mg) + " (gradient), " + fmt(mh) + " (Hessian)");
        return 0;
    });
}

// ---------------------------------------------------------------------------
// solve

struct PlantedDraw {
    double amp, rate, phase;
};

inline PlantedDraw draw_planted(unsigned long long seed, double rate_lo, double rate_hi, double amp_lo, double amp_hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    PlantedDraw d;
    d.rate = rate_lo + (rate_hi - rate_lo) * U(rng);
    d.amp = amp_lo + (amp_hi - amp_lo) * U(rng);
    d.phase = 2 * kPi * U(rng);
    return d;
}

inline void run_solve(RunContext& ctx, Params& P, SolveReport& rep) {
    const auto background = P.str("background", "flat", {"flat", "radial", "file"});
    const auto background_path = P.str("background_path", "");
    const auto sym = symmetry_from_string(P.str("symmetry", "(t,x)-only", {"full", "t-only", "(t,x)-only", "(t,theta)-only"}));
    auto g = read_grid(P, "grid", make_grid(-30, 30, 601, 1, 8, 1, false));
    const auto f_source = P.str("f_source", "planted", {"planted", "file"});
    const auto f_path = P.str("f_path", "");
    const double amp = P.num("amp", 0.05), rate = P.num("rate", 0.6), phase = P.num("phase", 0.3);
    const int steps = P.integer("steps", 4);
    const double eps = P.num("eps", 1.0);
    const double tol = P.num("newton_tol", 1e-11);
    const auto checks_json = P.nested("checks", [&](Params& C) {
        return json{{"decay", C.flag("decay", true)},
                    {"oracles", C.flag("oracles", true)},
                    {"uniqueness", C.flag("uniqueness", true)},
                    {"planted_trials", C.integer("planted_trials", 10)},
                    {"uniqueness_instances", C.integer("uniqueness_instances", 5)},
                    {"twod_n_x", C.integer("twod_n_x", 32)}};
    });

    Form11Field w;
    if (background == "file") {
        std::ifstream is(background_path, std::ios::binary);
        if (!is) throw IoError("cannot read background " + background_path);
        w = read_form(is, &g);
    } else {
        w = background == "flat" ? constant_form(g, 0.5, 0.0, 1.0) : radial_test_background(g);
    }
    ScalarField f, v;
    bool planted = f_source == "planted";
    if (planted) {
        v = planted_potential(g, sym, amp, rate, phase);
        f = solver_ma(w, v);
    } else {
        f = read_field<double>(f_path);
        if (!(f.grid() == g)) throw SchemaError("solve.f_path: grid does not match solve.grid");
    }
    MaOptions mo;
    mo.tol = tol;
    MaSolver solver(w, mo);
    ContinuityState st;
    {
        StageTimer t(rep, "continuity_solve");
        st = steps > 0 ? solver.continuity_solve(f, steps) : solver.newton_solve(f);
    }
    rep.metrics["solve"] = {{"residual", st.residual_norm},
                            {"residual_history", num(st.residual_history)},
                            {"newton_iterations", st.newton_iterations},
                            {"path_steps", st.path_steps},
                            {"compat_shift", st.compat_shift},
                            {"min_eigenvalue", st.min_eigenvalue},
                            {"kernel_normalization", st.kernel_normalization},
                            {"kernel_moment", st.kernel_moment}};
    {
        std::vector<double> it(st.residual_history.size());
        std::iota(it.begin(), it.end(), 0.0);
        write_csv(ctx.file("residual_history.csv"), series_table({"iteration", "residual"}, {it, st.residual_history}));
        write_svg(ctx.file("residual_history.svg"),
                  PlotSpec{"Newton residual history", "iteration", "sup residual", false, true,
                           {{"residual", it, st.residual_history, true}}});
    }
    if (planted) {
        const double gap = normalized_gap(st.u, v);
        rep.metrics["solve"]["planted_gap"] = gap;
        rep.verdict("planted_recovery", 0, gap <= ctx.tol(1e-8), "sup gap " + fmt(gap));
    }

    if (checks_json["decay"]) {
        StageTimer t(rep, "decay");
        const double f_rate = two_ended_decay_rate(f);
        auto er = energy_decay_report(st.u);
        const double certify = std::min(f_rate, eps) - 0.05;
        auto bs = bootstrap_check(solver, st, er.eps_prime, eps);
        const double target = 0.95 * std::min(2.0 * certify, f_rate);
        const double reached = bs.bootstrap_rates.empty() ? -kInf : bs.bootstrap_rates.back();
        rep.metrics["decay"] = {{"f_rate", num(f_rate)},
                                {"eps_prime", num(er.eps_prime)},
                                {"slab_rate", num(er.slab_rate)},
                                {"bootstrap_rates", num(bs.bootstrap_rates)},
                                {"bootstrap_q_rates", num(bs.bootstrap_q_rates)},
                                {"target", num(target)}};
        write_csv(ctx.file("decay_q.csv"), series_table({"T", "Q_plus", "Q_minus"}, {er.T, er.Q_plus, er.Q_minus}));
        write_svg(ctx.file("decay_q.svg"), PlotSpec{"Q_T energy tails", "T", "Q_T", false, true,
                                                    {{"Q_plus", er.T, er.Q_plus, false}, {"Q_minus", er.T, er.Q_minus, false}}});
        rep.verdict("energy_rate", 8, er.eps_prime >= certify,
                    "eps' = " + fmt(er.eps_prime) + " against " + fmt(certify));
        rep.verdict("bootstrap", 8, bs.bootstrap_rates.size() <= 3 && reached >= target,
                    std::to_string(bs.bootstrap_rates.size()) + " passes reach " + fmt(reached) + " against " + fmt(target));
    }

    if (checks_json["oracles"]) {
        StageTimer t(rep, "oracles");
        // radial oracle on a symmetric f
        double radial_gap;
        {
            auto gr = make_grid(-10, 10, 401, 1, 1, 1, false);
            auto wr = radial_test_background(gr);
            auto shape = [](double t, double beta) {
                return 0.8 * std::exp(-(t - 1) * (t - 1)) + beta * std::exp(-(t + 2) * (t + 2) / 2);
            };
            auto integral = [&](double beta) {
                double s = 0;
                for (int i = 0; i < gr.n_t; ++i) s += wr.h11[i] * std::expm1(shape(gr.t(i), beta));
                return s;
            };
            double lo = -5, hi = 0;
            for (int k = 0; k < 200; ++k) ((integral(0.5 * (lo + hi)) > 0) ? hi : lo) = 0.5 * (lo + hi);
            const double beta = 0.5 * (lo + hi);
            ScalarField fr(gr, Symmetry::t_only);
            fr.fill([&](double t, double, double, double) { return shape(t, beta); });
            std::vector<double> a(gr.n_t), fv(gr.n_t);
            for (int i = 0; i < gr.n_t; ++i) a[i] = 2 * wr.h11[i], fv[i] = fr[i];
            auto ro = radial_oracle(a, fv, gr.ht(), gr.t_min);
            ScalarField ur(gr, Symmetry::t_only);
            for (int i = 0; i < gr.n_t; ++i) ur[i] = ro.u[i];
            radial_gap = normalized_gap(MaSolver(wr, mo).newton_solve(fr).u, ur);
        }
        // dense (t, x) Newton oracle
        double twod_gap;
        {
            auto g2 = make_grid(-4, 4, 128, 1, checks_json["twod_n_x"].get<int>(), 1, false);
            auto w2 = constant_form(g2, 0.5, 0, 8.0);
            ScalarField v2(g2, Symmetry::t_x);
            v2.fill([](double t, double, double x, double) { return 0.5 * std::exp(-t * t) * std::cos(2 * kPi * x); });
            auto f2 = solver_ma(w2, v2);
            twod_gap = normalized_gap(twod_oracle(w2, f2).u, MaSolver(w2, mo).newton_solve(f2).u);
        }
        // random planted potentials
        const int trials = checks_json["planted_trials"];
        auto gp = make_grid(-30, 30, 601, 1, 8, 1, false);
        auto wp = constant_form(gp, 0.5, 0, 1.0);
        std::vector<double> gaps(trials), rates(trials);
        parallel_for(trials, ctx.cfg.workers, [&](int i) {
            auto d = draw_planted(job_seed(ctx.cfg.seed, 1000 + i), 0.3, 1.5, 0.02, 0.08);
            auto vp = planted_potential(gp, Symmetry::t_x, d.amp, d.rate, d.phase);
            rates[i] = d.rate;
            gaps[i] = normalized_gap(MaSolver(wp, mo).newton_solve(solver_ma(wp, vp)).u, vp);
        });
        const double worst = gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end());
        rep.metrics["oracles"] = {{"radial_gap", radial_gap}, {"twod_gap", twod_gap}, {"planted_gaps", gaps},
                                  {"planted_rates", rates}};
        rep.verdict("radial_oracle", 7, radial_gap <= ctx.tol(1e-8), "gap " + fmt(radial_gap));
        rep.verdict("twod_oracle", 7, twod_gap <= ctx.tol(1e-6), "gap " + fmt(twod_gap));
        rep.verdict("manufactured_recovery", 7, worst <= ctx.tol(1e-8),
                    std::to_string(trials) + " planted potentials, worst gap " + fmt(worst));
    }

    if (checks_json["uniqueness"]) {
        StageTimer t(rep, "uniqueness");
        const int n = checks_json["uniqueness_instances"];
        auto gu = make_grid(-8, 8, 81, 1, 8, 1, false);
        auto wu = constant_form(gu, 0.5, 0, 1.0);
        std::vector<double> gaps(n);
        parallel_for(n, ctx.cfg.workers, [&](int i) {
            const auto seed = job_seed(ctx.cfg.seed, 2000 + i);
            auto d = draw_planted(seed, 1.0, 2.0, 0.05, 0.1);
            MaSolver s(wu, mo);
            auto fu = solver_ma(wu, planted_potential(gu, Symmetry::t_x, d.amp, d.rate, d.phase));
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> U(-1, 1);
            // admissible random start: low x-modes under a Gaussian envelope
            const double c0 = 0.02 * U(rng), c1 = 0.02 * U(rng), ph = kPi * U(rng), width = 1.5 + U(rng);
            ScalarField init(gu, Symmetry::t_x);
            init.fill([&](double t, double, double x, double) {
                return (c0 + c1 * std::cos(2 * kPi * x + ph)) * std::exp(-0.5 * t * t / (width * width));
            });
            gaps[i] = uniqueness_check(s, fu, {10, 37}, {ScalarField(gu, Symmetry::t_x), init}).max_gap;
        });
        const double worst = gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end());
        rep.metrics["uniqueness"] = {{"instances", n}, {"gaps", gaps}};
        rep.verdict("uniqueness", 11, worst <= ctx.tol(1e-8),
                    std::to_string(n) + " instances, worst gap " + fmt(worst));
    }
}

// ---------------------------------------------------------------------------
// gauge

inline void run_gauge(RunContext& ctx, Params& P, SolveReport& rep) {
    const double amp = P.num("amp", 0.05);
    auto gc = read_grid(P, "cylinder_grid", make_grid(3, 12, 901, 16, 4, 4, true));
    auto gt = read_grid(P, "torsion_grid", make_grid(2, 12, 1001, 16, 8, 4, true));
    const double alpha = P.num("alpha", 0.5);
    const auto window = P.nums("expansion_window", {6.0, 10.0});
    if (window.size() != 2 || !(window[0] < window[1])) throw SchemaError("gauge.expansion_window: expected [lo, hi]");
    {
        StageTimer t(rep, "cylinders");
        auto ps = make_perturbed_structure(gc, example_diffeo(amp), 1.0);
        auto fam = find_holomorphic_cylinders(ps);
        const double dev = image_deviation(ps, fam);
        rep.metrics["cylinders"] = {{"residual", fam.max_residual}, {"iterations", fam.iterations},
                                    {"contraction", fam.contraction}, {"lipschitz", num(fam.lipschitz)},
                                    {"image_deviation", dev}, {"displacement_rate", num(fam.displacement_rate)}};
        rep.verdict("holomorphic_cylinders", 9, fam.max_residual <= ctx.tol(1e-8) && dev <= ctx.tol(1e-6),
                    "residual " + fmt(fam.max_residual) + ", image deviation " + fmt(dev));
    }
    {
        StageTimer t(rep, "torsion_expansion");
        auto plant = example_gauge_plant(gt);
        const double tor = sup_abs(torsion_residual(plant.Jt));
        auto ex = extract_expansion(deviation(plant.Jt), alpha, window[0], window[1]);
        const double k1 = max_entry_diff(ex.K1, plant.K1);
        rep.metrics["torsion"] = tor;
        rep.metrics["expansion"] = {{"k1_error", k1}, {"remainder_slope", num(ex.remainder_slope)},
                                    {"k_rate", num(ex.k_rate)}};
        rep.verdict("torsion", 9, tor <= ctx.tol(1e-8), "sup residual " + fmt(tor));
        rep.verdict("expansion", 9, k1 <= ctx.tol(1e-6) && ex.remainder_slope >= 1 + alpha - 0.05,
                    "K1 error " + fmt(k1) + ", remainder slope " + fmt(ex.remainder_slope));
    }
    P.nested("lemma", [&](Params& L) {
        const double t0 = L.num("t0", 0.0), T = L.num("T", 24.0), e = L.num("eps", 0.5);
        const int n_t = L.integer("n_t", 128), nth = L.integer("n_theta", 8), nx = L.integer("n_x", 4),
                  ny = L.integer("n_y", 4);
        StageTimer t(rep, "ddbar_lemma");
        auto lg = make_lemma_grid(t0, T, n_t, nth, nx, ny);
        auto lr = ddbar_lemma_solve(lg, lemma_form(lg, example_lemma_potential(lg)), e);
        rep.metrics["ddbar_lemma"] = {{"residual", lr.residual}, {"xi_slope", num(lr.xi_slope)},
                                      {"dxi_slope", num(lr.dxi_slope)}, {"closedness", lr.closedness}};
        rep.verdict("ddbar_lemma", 12,
                    lr.residual <= ctx.tol(1e-8) && lr.xi_slope >= e - 0.05 && lr.dxi_slope - 1.0 >= e - 1.0 - 0.05,
                    "residual " + fmt(lr.residual) + ", slopes " + fmt(lr.xi_slope) + " and " + fmt(lr.dxi_slope - 1.0));
        return 0;
    });
}

// ---------------------------------------------------------------------------
// estimates

inline std::vector<double> log_sweep(double lo, double hi, int n) {
    std::vector<double> r;
    for (int k = 0; k < n; ++k) r.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * k / (n - 1)));
    return r;
}

inline void run_estimates(RunContext& ctx, Params& P, SolveReport& rep) {
    P.nested("sobolev", [&](Params& S) {
        const auto mus = S.nums("mu", {0.1, 0.25, 0.5}), sigmas = S.nums("sigma", {1.0, 1.5, 2.0});
        const int trials = S.integer("trials", 1000), refine = S.integer("refine", 2);
        SobolevOptions o;
        o.length = S.num("length", o.length);
        o.per_slab = S.integer("per_slab", o.per_slab);
        if (trials < 1 || refine < 1) throw SchemaError("estimates.sobolev: trials and refine must be positive");
        if (mus.empty() || sigmas.empty()) return 0;
        StageTimer t(rep, "sobolev");
        const int cells = static_cast<int>(mus.size() * sigmas.size());
        std::vector<SobolevReport> base(cells), fine(cells);
        parallel_for(cells, ctx.cfg.workers, [&](int c) {
            const double mu = mus[c / sigmas.size()], sigma = sigmas[c % sigmas.size()];
            const auto seed = job_seed(ctx.cfg.seed, 3000 + c);
            base[c] = sobolev_verify(mu, sigma, trials, seed, o);
            SobolevOptions of = o;
            of.per_slab *= refine;
            fine[c] = sobolev_verify(mu, sigma, trials, seed, of);
        });
        bool ok = true;
        CsvTable tab{{"mu", "sigma", "constant", "refined_constant", "relative_change"}, {}};
        json cj = json::array();
        for (int c = 0; c < cells; ++c) {
            const double mu = mus[c / sigmas.size()], sigma = sigmas[c % sigmas.size()];
            const double C = base[c].constant, change = std::abs(fine[c].constant / C - 1.0);
            bool bounded = std::isfinite(C) && C > 0;
            for (double q : base[c].ratios) bounded = bounded && q <= C;
            ok = ok && bounded && change <= 0.1;
            tab.rows.push_back({csv_number(mu), csv_number(sigma), csv_number(C), csv_number(fine[c].constant),
                                csv_number(change)});
            cj.push_back({{"mu", mu}, {"sigma", sigma}, {"constant", C}, {"refined_constant", fine[c].constant},
                          {"relative_change", change}});
        }
        TestField constant;
        constant.constant = 3.7;
        const auto cs = sobolev_sides(constant, mus[0], sigmas[0], o);
        rep.metrics["sobolev"] = {{"trials", trials}, {"cells", cj}, {"constant_field_lhs", cs[0]}};
        write_csv(ctx.file("sobolev.csv"), tab);
        rep.verdict("weighted_sobolev", 10, ok && cs[0] == 0.0,
                    std::to_string(cells) + " cells of " + std::to_string(trials) + " fields; constant field lhs " +
                        fmt(cs[0]));
        return 0;
    });
    P.nested("tables", [&](Params& T) {
        const int n = T.integer("n", 4), points = T.integer("points", 9), panels = T.integer("panels", 16);
        const auto rule = s_rule_from_string(T.str("rule", "s = r^2"));
        const double lo = T.num("r_min", 1e-3), hi = T.num("r_max", 1e-1);
        if (points < 2) throw SchemaError("estimates.tables.points: need at least two");
        StageTimer t(rep, "tables");
        auto rows = appendix_rows(n);
        auto rs = log_sweep(lo, hi, points);
        std::vector<std::vector<ScalingRow>> parts(rows.size());
        parallel_for(static_cast<int>(rows.size()), ctx.cfg.workers,
                     [&](int i) { parts[i] = table_integral_orders({rows[i]}, rs, rule, panels); });
        std::vector<ScalingRow> out;
        for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
        std::ofstream os(ctx.file("scaling.csv"));
        write_scaling_csv(os, out);
        int failed = 0;
        std::string first;
        for (const auto& r : out)
            if (!r.passed && failed++ == 0) first = r.row.id;
        std::string offender;
        const bool dom = dominance_holds(out, &offender);
        json agg = json::array();
        bool agg_ok = true;
        std::vector<std::array<int, 2>> blocks{{0, 0}, {1, 1}};
        for (int ell = 2; ell <= n; ++ell) blocks.push_back({2, ell});
        for (auto [table, ell] : blocks) {
            auto a = aggregate_check(rows, table, ell, rs, rule, panels);
            agg_ok = agg_ok && a.passed;
            agg.push_back({{"table", table}, {"ell", ell}, {"fitted_exponent", num(a.fitted_exponent)},
                           {"bound_exponent", num(a.bound_exponent)}, {"ratio_slope", num(a.ratio_slope)}});
        }
        rep.metrics["tables"] = {{"rows", out.size()}, {"failed", failed}, {"r", rs}, {"aggregates", agg}};
        std::vector<double> fitted, target;
        for (const auto& r : out) fitted.push_back(r.fitted_exponent), target.push_back(r.target_order);
        write_svg(ctx.file("table_orders.svg"),
                  PlotSpec{"fitted against printed orders", "printed order", "fitted exponent", false, false,
                           {{"rows", target, fitted, true}, {"diagonal", target, target, false}}});
        rep.verdict("table_orders", 6, failed == 0,
                    std::to_string(out.size() - failed) + " of " + std::to_string(out.size()) + " rows within 0.1" +
                        (failed ? ", first failure " + first : ""));
        rep.verdict("table_dominance", 6, dom, dom ? "marked rows dominate" : "offender " + offender);
        rep.verdict("aggregate_bounds", 0, agg_ok, "aggregate / bound ratios do not grow");
        return 0;
    });
}

// ---------------------------------------------------------------------------
// pipeline

inline void run_pipeline_command(RunContext& ctx, Params& P, SolveReport& rep) {
    PipelineOptions o;
    o.glue = read_glue_params(P);
    o.t_max = P.num("t_max", o.t_max);
    o.n_t = P.integer("n_t", o.n_t);
    o.steps = P.integer("steps", o.steps);
    o.check_resolution = P.flag("check_resolution", false);
    const bool refine = P.flag("refine", true);
    std::vector<PipelineReport> runs;
    std::vector<int> sizes{o.n_t};
    if (refine) sizes.push_back(2 * (o.n_t - 1) + 1);
    for (int n : sizes) {
        StageTimer t(rep, "pipeline_n" + std::to_string(n));
        PipelineOptions q = o;
        q.n_t = n;
        runs.push_back(run_pipeline(q));
    }
    json rj = json::array();
    for (const auto& r : runs)
        rj.push_back({{"n_t", r.n_t}, {"annulus_samples", r.annulus_samples}, {"t_b", r.t_b}, {"lambda", r.lambda},
                      {"calibration_integral", r.calibration_integral}, {"f_decay_rate", num(r.f_decay_rate)},
                      {"potential_error", r.potential_error}, {"metric_error", r.metric_error},
                      {"compat_shift", r.compat_shift}, {"residual", r.residual},
                      {"newton_iterations", r.newton_iterations}, {"path_steps", r.path_steps},
                      {"min_eigenvalue", r.min_eigenvalue}});
    rep.metrics["runs"] = rj;
    const double e0 = runs[0].potential_error;
    const double ratio = runs.size() > 1 ? e0 / runs[1].potential_error : kInf;
    rep.metrics["refinement_ratio"] = num(ratio);
    rep.verdict("flat_recovery", 2, e0 <= ctx.tol(1e-4) && ratio >= 3.5,
                "error " + fmt(e0) + " at n_t = " + std::to_string(runs[0].n_t) + ", refinement ratio " + fmt(ratio) +
                    ", annulus spans " + fmt(runs[0].annulus_samples) + " samples");
}

// ---------------------------------------------------------------------------
// report

inline std::string file_safe(const std::string& id) {
    std::string out;
    for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
    return out;
}

/// Merges report.json files (directories are searched recursively) and plots every sweep row found beside them.
inline int run_report(RunContext& ctx, std::vector<std::pair<std::string, SolveReport>>& loaded, json& summary) {
    std::vector<fs::path> reports, csvs;
    for (const auto& in : ctx.cfg.inputs) {
        fs::path p(in);
        if (fs::is_directory(p)) {
            for (const auto& e : fs::recursive_directory_iterator(p)) {
                if (!e.is_regular_file()) continue;
                if (e.path().filename() == "report.json") reports.push_back(e.path());
                if (e.path().filename() == "scaling.csv") csvs.push_back(e.path());
            }
        } else if (fs::is_regular_file(p)) {
            reports.push_back(p);
            if (fs::exists(p.parent_path() / "scaling.csv")) csvs.push_back(p.parent_path() / "scaling.csv");
        } else {
            throw IoError("report: no such input " + in);
        }
    }
    std::sort(reports.begin(), reports.end());
    std::sort(csvs.begin(), csvs.end());
    csvs.erase(std::unique(csvs.begin(), csvs.end()), csvs.end());
    for (const auto& p : reports) loaded.push_back({p.string(), report_from_json(read_json_file(p))});
    auto merged = merge_reports(loaded);
    summary = to_json(merged);
    // one regression plot per table row, concatenated over all sweeps
    std::map<std::string, PlotSeries> rows;
    for (const auto& c : csvs) {
        auto t = read_csv(c);
        auto col = [&](const std::string& name) {
            auto it = std::find(t.header.begin(), t.header.end(), name);
            if (it == t.header.end()) throw SchemaError(c.string() + ": missing column " + name);
            return static_cast<std::size_t>(it - t.header.begin());
        };
        const auto ci = col("row_id"), cr = col("r"), cv = col("value");
        for (const auto& r : t.rows) {
            auto& s = rows[r[ci]];
            s.name = "value";
            s.x.push_back(std::stod(r[cr]));
            s.y.push_back(std::stod(r[cv]));
        }
    }
    if (!rows.empty()) fs::create_directories(ctx.file("plots"));
    for (auto& [id, s] : rows) {
        std::vector<std::size_t> order(s.x.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
        PlotSeries sorted{"value", {}, {}, true};
        for (auto k : order) sorted.x.push_back(s.x[k]), sorted.y.push_back(std::abs(s.y[k]));
        write_svg(ctx.file("plots") / (file_safe(id) + ".svg"), PlotSpec{id, "r", "integral", true, true, {sorted}});
    }
    summary["row_plots"] = rows.size();
    write_json_file(ctx.file("summary.json"), summary);
    for (std::size_t k = 0; k < merged.reports.size(); ++k)
        *ctx.console << (merged.reports[k].all_passed() ? "PASS " : "FAIL ") << merged.sources[k] << "\n";
    return merged.all_passed ? kExitPass : kExitFail;
}

// ---------------------------------------------------------------------------
// Dispatch

/// Runs one subcommand into ctx.out; returns the process exit code. Schema and precondition errors propagate.
inline int run_experiment(RunContext& ctx, SolveReport& rep) {
    const auto& sub = ctx.cfg.subcommand;
    fs::create_directories(ctx.out);
    if (sub == "report") {
        std::vector<std::pair<std::string, SolveReport>> loaded;
        json summary;
        return run_report(ctx, loaded, summary);
    }
    rep.subcommand = sub;
    rep.seed = ctx.cfg.seed;
    Params P(ctx.cfg.blocks.contains(sub) ? ctx.cfg.blocks[sub] : json::object(), sub);
    auto finish_config = [&] {
        rep.config = {{"subcommand", sub}, {"seed", ctx.cfg.seed}, {"out", ctx.out.string()},
                      {"workers", ctx.cfg.workers}, {"tol_scale", ctx.cfg.tol_scale}};
        rep.config[sub] = P.finish();
    };
    int code = kExitPass;
    try {
        if (sub == "elliptic") run_elliptic(ctx, P, rep);
        else if (sub == "glue") run_glue(ctx, P, rep);
        else if (sub == "solve") run_solve(ctx, P, rep);
        else if (sub == "gauge") run_gauge(ctx, P, rep);
        else if (sub == "estimates") run_estimates(ctx, P, rep);
        else if (sub == "pipeline") run_pipeline_command(ctx, P, rep);
        else throw SchemaError("unknown subcommand " + sub);
        finish_config();
        code = rep.all_passed() ? kExitPass : kExitFail;
    } catch (const NumericalError& e) {
        rep.status = "numerical_failure";
        rep.error = e.what();
        rep.config = {{"subcommand", sub}, {"seed", ctx.cfg.seed}, {"out", ctx.out.string()},
                      {"workers", ctx.cfg.workers}, {"tol_scale", ctx.cfg.tol_scale}};
        rep.config[sub] = ctx.cfg.blocks.contains(sub) ? ctx.cfg.blocks[sub] : json::object();
        code = kExitNumerical;
    }
    write_json_file(ctx.file("report.json"), to_json(rep));
    for (const auto& v : rep.verdicts)
        *ctx.console << (v.passed ? "PASS " : "FAIL ") << v.id << " (criterion " << v.criterion << "): " << v.detail
                     << "\n";
    if (code == kExitNumerical) *ctx.console << "numerical failure: " << rep.error << "\n";
    return code;
}

}  // namespace acyl
