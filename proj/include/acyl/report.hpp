#pragma once
// SolveReport: JSON serialization, validation, CSV series, native SVG plots and report merging.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acyl/field_core.hpp"

namespace acyl {

using json = nlohmann::json;

/// Non-finite doubles serialize as the strings "inf", "-inf" and "nan".
inline json num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline json num(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

inline double num_value(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw SchemaError("expected a number, got " + j.dump());
}

struct Verdict {
    std::string id;
    int criterion = 0;  ///< acceptance criterion number, 0 for auxiliary checks
    bool passed = false;
    std::string detail;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct SolveReport {
    std::string subcommand;
    json config = json::object();
    unsigned long long seed = 0;
    json metrics = json::object();
    std::vector<Verdict> verdicts;
    std::vector<StageTiming> stages;
    std::string status = "ok";  ///< ok | numerical_failure
    std::string error;

    void verdict(std::string id, int criterion, bool passed, std::string detail = {}) {
        verdicts.push_back({std::move(id), criterion, passed, std::move(detail)});
    }
    bool all_passed() const {
        return status == "ok" && std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
    }
};

/// Times a stage into the report when it leaves scope.
class StageTimer {
public:
    StageTimer(SolveReport& rep, std::string stage)
        : rep_(rep), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        rep_.stages.push_back(
            {stage_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()});
    }
    StageTimer(const StageTimer&) = delete;
    StageTimer& operator=(const StageTimer&) = delete;

private:
    SolveReport& rep_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

inline const char* kReportSchemaId = "acyl-cy/solve_report/1";

inline json to_json(const SolveReport& r) {
    json j;
    j["schema"] = kReportSchemaId;
    j["subcommand"] = r.subcommand;
    j["config"] = r.config;
    j["seed"] = r.seed;
    j["metrics"] = r.metrics;
    j["verdicts"] = json::array();
    for (const auto& v : r.verdicts)
        j["verdicts"].push_back({{"id", v.id}, {"criterion", v.criterion}, {"passed", v.passed}, {"detail", v.detail}});
    j["stages"] = json::array();
    for (const auto& s : r.stages) j["stages"].push_back({{"stage", s.stage}, {"seconds", s.seconds}});
    j["status"] = r.status;
    j["error"] = r.error;
    j["all_passed"] = r.all_passed();
    return j;
}

/// Structural checks mirroring schema/solve_report.schema.json; returns the list of problems.
inline std::vector<std::string> validate_report(const json& j) {
    std::vector<std::string> bad;
    if (!j.is_object()) return {"report is not an object"};
    auto need = [&](const char* key, bool ok) {
        if (!j.contains(key)) bad.push_back(std::string("missing ") + key);
        else if (!ok) bad.push_back(std::string("wrong type for ") + key);
    };
    need("schema", j.contains("schema") && j["schema"] == kReportSchemaId);
    need("subcommand", j.contains("subcommand") && j["subcommand"].is_string());
    need("config", j.contains("config") && j["config"].is_object());
    need("seed", j.contains("seed") && j["seed"].is_number_unsigned());
    need("metrics", j.contains("metrics") && j["metrics"].is_object());
    need("verdicts", j.contains("verdicts") && j["verdicts"].is_array());
    need("stages", j.contains("stages") && j["stages"].is_array());
    need("status", j.contains("status") && j["status"].is_string() &&
                       (j["status"] == "ok" || j["status"] == "numerical_failure"));
    need("error", j.contains("error") && j["error"].is_string());
    need("all_passed", j.contains("all_passed") && j["all_passed"].is_boolean());
    if (j.contains("verdicts") && j["verdicts"].is_array())
        for (const auto& v : j["verdicts"])
            if (!v.is_object() || !v.contains("id") || !v["id"].is_string() || !v.contains("passed") ||
                !v["passed"].is_boolean() || !v.contains("criterion") || !v["criterion"].is_number_integer() ||
                !v.contains("detail") || !v["detail"].is_string())
                bad.push_back("malformed verdict " + v.dump());
    if (j.contains("stages") && j["stages"].is_array())
        for (const auto& s : j["stages"])
            if (!s.is_object() || !s.contains("stage") || !s["stage"].is_string() || !s.contains("seconds") ||
                !s["seconds"].is_number())
                bad.push_back("malformed stage " + s.dump());
    return bad;
}

inline SolveReport report_from_json(const json& j) {
    auto bad = validate_report(j);
    if (!bad.empty()) throw SchemaError("invalid report: " + bad.front());
    SolveReport r;
    r.subcommand = j["subcommand"];
    r.config = j["config"];
    r.seed = j["seed"];
    r.metrics = j["metrics"];
    for (const auto& v : j["verdicts"]) r.verdicts.push_back({v["id"], v["criterion"], v["passed"], v["detail"]});
    for (const auto& s : j["stages"]) r.stages.push_back({s["stage"], s["seconds"]});
    r.status = j["status"];
    r.error = j["error"];
    return r;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline void write_csv(const std::filesystem::path& path, const CsvTable& t) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) os << (k ? "," : "") << cells[k];
        os << "\n";
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    CsvTable t;
    std::string text;
    bool first = true;
    while (std::getline(is, text)) {
        if (text.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(text);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (first) t.header = cells, first = false;
        else t.rows.push_back(cells);
    }
    return t;
}

inline CsvTable series_table(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
    CsvTable t{names, {}};
    const std::size_t n = cols.empty() ? 0 : cols[0].size();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> r;
        for (const auto& c : cols) r.push_back(csv_number(c[i]));
        t.rows.push_back(r);
    }
    return t;
}

// ---------------------------------------------------------------------------
// SVG

struct PlotSeries {
    std::string name;
    std::vector<double> x, y;
    bool markers = true;
};

struct PlotSpec {
    std::string title;
    std::string x_label = "x";
    std::string y_label = "y";
    bool log_x = false;
    bool log_y = false;
    std::vector<PlotSeries> series;
};

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

/// Line plot with optional log axes; non-positive values are dropped on log axes.
inline std::string render_svg(const PlotSpec& p) {
    const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
    auto tx = [&](double v) { return p.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return p.log_y ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!p.log_x || x > 0) && (!p.log_y || y > 0);
    };
    double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
    for (const auto& s : p.series)
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (usable(s.x[i], s.y[i])) {
                x0 = std::min(x0, tx(s.x[i])), x1 = std::max(x1, tx(s.x[i]));
                y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
            }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-300) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-300) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(p.title)
       << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4, fy = y0 + (y1 - y0) * k / 4;
        const double sx = L + (W - L - R) * k / 4, sy = H - B - (H - T - B) * k / 4;
        os << "<text x=\"" << sx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << (p.log_x ? "1e" : "") << fx << "</text>\n";
        os << "<text x=\"" << L - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
           << (p.log_y ? "1e" : "") << fy << "</text>\n";
    }
    os << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << xml_escape(p.x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << T + (H - T - B) / 2 << "\" transform=\"rotate(-90 16 " << T + (H - T - B) / 2
       << ")\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(p.y_label) << "</text>\n";
    for (std::size_t k = 0; k < p.series.size(); ++k) {
        const auto& s = p.series[k];
        const char* c = colours[k % 6];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (usable(s.x[i], s.y[i])) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        os << "\"/>\n";
        if (s.markers)
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (usable(s.x[i], s.y[i]))
                    os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\"" << c
                       << "\"/>\n";
        os << "<text x=\"" << W - R + 8 << "\" y=\"" << T + 14 + 16 * k << "\" font-size=\"11\" fill=\"" << c << "\">"
           << xml_escape(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_svg(const std::filesystem::path& path, const PlotSpec& p) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << render_svg(p);
}

// ---------------------------------------------------------------------------
// Merging

struct MergedSummary {
    std::vector<std::string> sources;
    std::vector<SolveReport> reports;
    bool all_passed = true;
};

inline MergedSummary merge_reports(const std::vector<std::pair<std::string, SolveReport>>& in) {
    if (in.empty()) throw PreconditionError("report: no inputs");
    MergedSummary m;
    for (const auto& [src, r] : in) {
        m.sources.push_back(src);
        m.reports.push_back(r);
        m.all_passed = m.all_passed && r.all_passed();
    }
    return m;
}

/// Pass/fail matrix: one row per source report, one entry per verdict id.
inline json to_json(const MergedSummary& m) {
    json j;
    j["schema"] = "acyl-cy/summary/1";
    j["all_passed"] = m.all_passed;
    j["reports"] = json::array();
    std::map<std::string, json> by_id;
    for (std::size_t k = 0; k < m.reports.size(); ++k) {
        const auto& r = m.reports[k];
        json row{{"source", m.sources[k]}, {"subcommand", r.subcommand}, {"status", r.status},
                 {"all_passed", r.all_passed()}, {"verdicts", json::object()}};
        for (const auto& v : r.verdicts) {
            row["verdicts"][v.id] = v.passed;
            by_id[v.id][m.sources[k]] = v.passed;
        }
        j["reports"].push_back(row);
    }
    j["matrix"] = json::object();
    for (auto& [id, cells] : by_id) j["matrix"][id] = cells;
    return j;
}

}  // namespace acyl
