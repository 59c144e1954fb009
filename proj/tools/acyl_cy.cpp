#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "acyl/cli.hpp"

using namespace acyl;

namespace {

json load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw SchemaError("empty config");
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("config: ") + e.what());
    }
}

int workers_from_env() {
    const char* v = std::getenv("ACYL_CY_WORKERS");
    if (!v || !*v) return 0;
    char* end = nullptr;
    long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw SchemaError("ACYL_CY_WORKERS: expected a positive integer");
    return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acyl_cy: experiments on the asymptotically cylindrical Calabi-Yau model"};
    app.require_subcommand(1);
    std::string config_path, out;
    unsigned long long seed = 0;
    int workers = 0;
    double tol_scale = 0.0;
    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--out", out, "output directory");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--workers", workers, "parallel jobs (falls back to ACYL_CY_WORKERS)")->check(CLI::PositiveNumber);
    app.add_option("--tol-scale", tol_scale, "multiplier for verdict tolerances")->check(CLI::PositiveNumber);

    bool list_critical = false;
    std::vector<double> range;
    std::vector<std::string> inputs;
    for (const auto& name : subcommands()) {
        static const std::map<std::string, std::string> about{
            {"elliptic", "critical weights and condition scan on the cylinder"},
            {"glue", "volume condition, t_b sweep and bump derivative bounds"},
            {"solve", "Monge-Ampere solve with decay, oracle and uniqueness checks"},
            {"gauge", "holomorphic cylinders, torsion, expansion and the ddbar lemma"},
            {"estimates", "weighted Sobolev constants and table scaling"},
            {"pipeline", "glued background solve against the flat answer"},
            {"report", "merge report.json files into a pass/fail matrix"}};
        auto* sc = app.add_subcommand(name, about.at(name));
        sc->fallthrough();
        if (name == "elliptic") {
            sc->add_flag("--list-critical", list_critical, "print the critical weights");
            sc->add_option("--range", range, "weight interval")->expected(2)->allow_extra_args(false);
        }
        if (name == "report") sc->add_option("inputs", inputs, "report files or directories");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitSchema;
    }
    const std::string sub = app.get_subcommands().front()->get_name();

    RunContext ctx;
    SolveReport rep;
    try {
        ctx.cfg = config_path.empty() ? ExperimentConfig{} : parse_config(load_config(config_path), sub);
        ctx.cfg.subcommand = sub;
        if (app.count("--seed")) ctx.cfg.seed = seed;
        if (app.count("--tol-scale")) ctx.cfg.tol_scale = tol_scale;
        if (app.count("--workers")) ctx.cfg.workers = workers;
        if (ctx.cfg.workers == 0) ctx.cfg.workers = workers_from_env();
        if (ctx.cfg.workers == 0) ctx.cfg.workers = 1;
        if (app.count("--out")) ctx.cfg.out = out;
        if (ctx.cfg.out.empty()) ctx.cfg.out = "acyl_out/" + sub;
        if (!range.empty()) ctx.cfg.blocks["elliptic"]["range"] = range;
        ctx.cfg.list_critical = list_critical;
        ctx.cfg.inputs = inputs;
        if (sub == "report" && inputs.empty()) throw PreconditionError("report: no inputs");
        ctx.out = ctx.cfg.out;
        return run_experiment(ctx, rep);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSchema;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSchema;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSchema;
    }
}
