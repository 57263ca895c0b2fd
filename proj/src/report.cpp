#include "w2s/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "w2s/errors.hpp"

namespace w2s::report {

using nlohmann::json;

namespace {

// %.17g round-trips doubles exactly through text.
std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string num_short(double v, int digits = 2) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.push_back("");
    }
    return cells;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

}  // namespace

void write_eval_log_csv(const std::filesystem::path& path,
                        const std::vector<harness::EvalLogRow>& rows) {
    auto out = open_out(path);
    out << "run_id,u,metric,lambda_eff,gate_active,grad_norm_base,grad_norm_distill,wall_time\n";
    for (const auto& r : rows) {
        out << r.run_id << ',' << r.u << ',' << num(r.metric) << ',' << num(r.lambda_eff) << ','
            << (r.gate_active ? 1 : 0) << ',' << num(r.grad_norm_base) << ','
            << num(r.grad_norm_distill) << ',' << num(r.wall_time) << '\n';
    }
}

std::vector<harness::EvalLogRow> read_eval_log_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("empty log csv " + path.string());
    }
    std::vector<harness::EvalLogRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != 8) {
            throw IoError("bad log row in " + path.string() + ": " + line);
        }
        harness::EvalLogRow r;
        r.run_id = cells[0];
        r.u = std::stoll(cells[1]);
        r.metric = std::stod(cells[2]);
        r.lambda_eff = std::stod(cells[3]);
        r.gate_active = cells[4] == "1";
        r.grad_norm_base = std::stod(cells[5]);
        r.grad_norm_distill = std::stod(cells[6]);
        r.wall_time = std::stod(cells[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_reports_csv(const std::filesystem::path& path,
                       const std::vector<harness::RunReport>& reports) {
    auto out = open_out(path);
    out << "seed,first_at_tau_base,first_at_tau_ours,speedup,best_metric_base,best_metric_ours,"
           "log_path\n";
    for (const auto& r : reports) {
        out << r.seed << ',';
        if (r.first_at_tau_base) out << *r.first_at_tau_base;
        out << ',';
        if (r.first_at_tau_ours) out << *r.first_at_tau_ours;
        out << ',';
        if (r.speedup) out << num(*r.speedup);
        out << ',' << num(r.best_metric_base) << ',' << num(r.best_metric_ours) << ','
            << r.log_path << '\n';
    }
}

std::vector<harness::RunReport> parse_reports_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("empty reports csv " + path.string());
    }
    std::vector<harness::RunReport> reports;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != 7) {
            throw IoError("bad report row in " + path.string() + ": " + line);
        }
        harness::RunReport r;
        r.seed = static_cast<std::uint64_t>(std::stoull(cells[0]));
        if (!cells[1].empty()) r.first_at_tau_base = std::stoll(cells[1]);
        if (!cells[2].empty()) r.first_at_tau_ours = std::stoll(cells[2]);
        if (!cells[3].empty()) r.speedup = std::stod(cells[3]);
        r.best_metric_base = std::stod(cells[4]);
        r.best_metric_ours = std::stod(cells[5]);
        r.log_path = cells[6];
        reports.push_back(std::move(r));
    }
    return reports;
}

namespace {

json report_to_json(const harness::RunReport& r) {
    json doc;
    doc["seed"] = r.seed;
    doc["first_at_tau_base"] = r.first_at_tau_base ? json(*r.first_at_tau_base) : json(nullptr);
    doc["first_at_tau_ours"] = r.first_at_tau_ours ? json(*r.first_at_tau_ours) : json(nullptr);
    doc["speedup"] = r.speedup ? json(*r.speedup) : json(nullptr);
    doc["best_metric_base"] = r.best_metric_base;
    doc["best_metric_ours"] = r.best_metric_ours;
    doc["log_path"] = r.log_path;
    doc["failed"] = r.failed;
    if (r.failed) {
        doc["failure_reason"] = r.failure_reason;
    }
    doc["gate_off_u"] = r.gate_off_u;
    return doc;
}

harness::RunReport report_from_json(const json& doc) {
    harness::RunReport r;
    r.seed = doc.at("seed").get<std::uint64_t>();
    if (!doc.at("first_at_tau_base").is_null()) {
        r.first_at_tau_base = doc.at("first_at_tau_base").get<long long>();
    }
    if (!doc.at("first_at_tau_ours").is_null()) {
        r.first_at_tau_ours = doc.at("first_at_tau_ours").get<long long>();
    }
    if (!doc.at("speedup").is_null()) {
        r.speedup = doc.at("speedup").get<double>();
    }
    r.best_metric_base = doc.at("best_metric_base").get<double>();
    r.best_metric_ours = doc.at("best_metric_ours").get<double>();
    r.log_path = doc.at("log_path").get<std::string>();
    r.failed = doc.value("failed", false);
    r.failure_reason = doc.value("failure_reason", "");
    r.gate_off_u = doc.value("gate_off_u", -1LL);
    return r;
}

}  // namespace

void write_run_report_json(const std::filesystem::path& path, const harness::RunReport& report) {
    auto out = open_out(path);
    out << report_to_json(report).dump(2) << '\n';
}

harness::RunReport read_run_report_json(const std::filesystem::path& path) {
    auto in = open_in(path);
    json doc;
    try {
        in >> doc;
        return report_from_json(doc);
    } catch (const json::exception& e) {
        throw IoError("malformed report " + path.string() + ": " + e.what());
    }
}

void write_aggregate_json(const std::filesystem::path& path, const harness::PairOutcome& o) {
    json doc;
    doc["dataset"] = o.dataset_name;
    doc["student"] = o.student_name;
    doc["teacher"] = o.teacher_name;
    doc["optimizer"] = o.optimizer_name;
    doc["teacher_metric"] = o.teacher_metric;
    doc["tau"] = o.tau;
    doc["median_first_at_tau_base"] = o.median_first_base;
    doc["median_first_at_tau_ours"] = o.median_first_ours;
    doc["median_speedup"] = o.median_speedup;
    doc["median_best_base"] = o.median_best_base;
    doc["median_best_ours"] = o.median_best_ours;
    doc["any_failed"] = o.any_failed;
    if (o.band) {
        doc["teacher_band"] = {{"relative_gap", o.band->relative_gap},
                               {"regime", metrics::regime_name(o.band->regime)}};
    }
    doc["runs"] = json::array();
    for (const auto& r : o.reports) {
        doc["runs"].push_back(report_to_json(r));
    }
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

harness::PairOutcome read_aggregate_json(const std::filesystem::path& path) {
    auto in = open_in(path);
    json doc;
    try {
        in >> doc;
        harness::PairOutcome o;
        o.dataset_name = doc.at("dataset").get<std::string>();
        o.student_name = doc.at("student").get<std::string>();
        o.teacher_name = doc.at("teacher").get<std::string>();
        o.optimizer_name = doc.at("optimizer").get<std::string>();
        o.teacher_metric = doc.at("teacher_metric").get<double>();
        o.tau = doc.at("tau").get<double>();
        o.median_first_base = doc.at("median_first_at_tau_base").is_null()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : doc.at("median_first_at_tau_base").get<double>();
        o.median_first_ours = doc.at("median_first_at_tau_ours").is_null()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : doc.at("median_first_at_tau_ours").get<double>();
        o.median_speedup = doc.at("median_speedup").is_null()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : doc.at("median_speedup").get<double>();
        o.median_best_base = doc.at("median_best_base").get<double>();
        o.median_best_ours = doc.at("median_best_ours").get<double>();
        o.any_failed = doc.value("any_failed", false);
        for (const auto& run : doc.at("runs")) {
            o.reports.push_back(report_from_json(run));
        }
        o.pair_dir = path.parent_path();
        return o;
    } catch (const json::exception& e) {
        throw IoError("malformed aggregate " + path.string() + ": " + e.what());
    }
}

std::string format_speedup(const std::optional<double>& speedup) {
    if (!speedup) {
        return "—";  // em dash for "no crossing"
    }
    return num_short(*speedup) + "×";
}

namespace {

std::string format_first(const std::optional<long long>& v) {
    return v ? std::to_string(*v) : "—";
}

}  // namespace

std::string render_pair_table(const harness::PairOutcome& o) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"dataset", "student", "teacher", "optimizer", "teacher metric", "tau",
                    "first@tau (base->ours)", "speedup", "best (base/ours)"});
    auto add_row = [&](const std::string& label, const std::optional<long long>& fb,
                       const std::optional<long long>& fo, const std::optional<double>& sp,
                       double bb, double bo) {
        rows.push_back({o.dataset_name, o.student_name, o.teacher_name, o.optimizer_name,
                        num_short(o.teacher_metric), num_short(o.tau),
                        format_first(fb) + " -> " + format_first(fo) + "  [" + label + "]",
                        format_speedup(sp), num_short(bb) + " / " + num_short(bo)});
    };
    for (const auto& r : o.reports) {
        add_row("seed " + std::to_string(r.seed), r.first_at_tau_base, r.first_at_tau_ours,
                r.speedup, r.best_metric_base, r.best_metric_ours);
    }
    const bool have_median = !std::isnan(o.median_first_base) && !std::isnan(o.median_first_ours);
    std::optional<long long> mb, mo;
    std::optional<double> ms;
    if (have_median) {
        mb = static_cast<long long>(std::llround(o.median_first_base));
        mo = static_cast<long long>(std::llround(o.median_first_ours));
    }
    if (!std::isnan(o.median_speedup)) {
        ms = o.median_speedup;
    }
    add_row("median", mb, mo, ms, o.median_best_base, o.median_best_ours);

    // column widths (counting UTF-8 code points so the dashes line up)
    auto display_len = [](const std::string& s) {
        std::size_t n = 0;
        for (unsigned char c : s) {
            n += (c & 0xC0) != 0x80;
        }
        return n;
    };
    std::vector<std::size_t> width(rows[0].size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            width[c] = std::max(width[c], display_len(row[c]));
        }
    }
    std::string out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            out += rows[i][c];
            out.append(width[c] - display_len(rows[i][c]) + (c + 1 < rows[i].size() ? 2 : 0), ' ');
        }
        out += '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < width.size(); ++c) {
                total += width[c] + (c + 1 < width.size() ? 2 : 0);
            }
            out.append(total, '-');
            out += '\n';
        }
    }
    return out;
}

namespace {

struct SvgScale {
    double x_min, x_max, y_min, y_max;
    static constexpr double width = 640, height = 400, pad = 48;

    double sx(double x) const {
        return pad + (x - x_min) / std::max(x_max - x_min, 1e-12) * (width - 2 * pad);
    }
    double sy(double y) const {
        return height - pad - (y - y_min) / std::max(y_max - y_min, 1e-12) * (height - 2 * pad);
    }
};

std::string polyline(const metrics::MetricSeries& s, const SvgScale& sc, const char* color) {
    std::string pts;
    for (const auto& p : s.points) {
        pts += num_short(sc.sx(static_cast<double>(p.index)), 1) + "," +
               num_short(sc.sy(p.value), 1) + " ";
    }
    return "  <polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
}

}  // namespace

void write_curves_svg(const std::filesystem::path& path, const metrics::MetricSeries& baseline,
                      const metrics::MetricSeries& ours, double tau, long long gate_off_u) {
    SvgScale sc{1e300, -1e300, 1e300, -1e300};
    for (const auto* s : {&baseline, &ours}) {
        for (const auto& p : s->points) {
            sc.x_min = std::min(sc.x_min, static_cast<double>(p.index));
            sc.x_max = std::max(sc.x_max, static_cast<double>(p.index));
            sc.y_min = std::min(sc.y_min, p.value);
            sc.y_max = std::max(sc.y_max, p.value);
        }
    }
    sc.y_min = std::min(sc.y_min, tau);
    sc.y_max = std::max(sc.y_max, tau);
    const double y_margin = 0.05 * (sc.y_max - sc.y_min + 1e-12);
    sc.y_min -= y_margin;
    sc.y_max += y_margin;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    svg += "  <rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    // axes
    svg += "  <line x1=\"48\" y1=\"352\" x2=\"592\" y2=\"352\" stroke=\"black\"/>\n";
    svg += "  <line x1=\"48\" y1=\"48\" x2=\"48\" y2=\"352\" stroke=\"black\"/>\n";
    svg += "  <text x=\"320\" y=\"390\" text-anchor=\"middle\" font-size=\"12\">training "
           "index</text>\n";
    svg += "  <text x=\"14\" y=\"200\" text-anchor=\"middle\" font-size=\"12\" "
           "transform=\"rotate(-90 14 200)\">validation metric</text>\n";
    // tau line
    svg += "  <line x1=\"48\" y1=\"" + num_short(sc.sy(tau), 1) + "\" x2=\"592\" y2=\"" +
           num_short(sc.sy(tau), 1) +
           "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    svg += "  <text x=\"594\" y=\"" + num_short(sc.sy(tau) + 4, 1) +
           "\" font-size=\"11\" fill=\"gray\">tau=" + num_short(tau) + "</text>\n";
    // gate-off marker
    if (gate_off_u >= 0) {
        const double gx = sc.sx(static_cast<double>(gate_off_u));
        svg += "  <line x1=\"" + num_short(gx, 1) + "\" y1=\"48\" x2=\"" + num_short(gx, 1) +
               "\" y2=\"352\" stroke=\"#2a9d2a\" stroke-dasharray=\"3,3\"/>\n";
        svg += "  <text x=\"" + num_short(gx + 3, 1) +
               "\" y=\"60\" font-size=\"11\" fill=\"#2a9d2a\">gate off</text>\n";
    }
    svg += polyline(baseline, sc, "#3465c0");
    svg += polyline(ours, sc, "#c03434");
    svg += "  <text x=\"60\" y=\"62\" font-size=\"12\" fill=\"#3465c0\">baseline</text>\n";
    svg += "  <text x=\"60\" y=\"78\" font-size=\"12\" fill=\"#c03434\">ours</text>\n";
    // axis extent labels
    svg += "  <text x=\"48\" y=\"366\" font-size=\"10\">" + num_short(sc.x_min, 0) + "</text>\n";
    svg += "  <text x=\"592\" y=\"366\" text-anchor=\"end\" font-size=\"10\">" +
           num_short(sc.x_max, 0) + "</text>\n";
    svg += "  <text x=\"44\" y=\"352\" text-anchor=\"end\" font-size=\"10\">" +
           num_short(sc.y_min) + "</text>\n";
    svg += "  <text x=\"44\" y=\"56\" text-anchor=\"end\" font-size=\"10\">" +
           num_short(sc.y_max) + "</text>\n";
    svg += "</svg>\n";

    auto out = open_out(path);
    out << svg;
}

void write_band_csv(const std::filesystem::path& path,
                    const std::vector<harness::BandPoint>& points) {
    auto out = open_out(path);
    out << "teacher_target,teacher_metric,relative_gap,regime,median_speedup,"
           "median_first_base,median_first_ours\n";
    for (const auto& p : points) {
        out << num(p.teacher_target) << ',' << num(p.teacher_metric) << ','
            << num(p.relative_gap) << ',' << p.regime << ',' << num(p.median_speedup) << ','
            << num(p.median_first_base) << ',' << num(p.median_first_ours) << '\n';
    }
}

void write_band_svg(const std::filesystem::path& path,
                    const std::vector<harness::BandPoint>& points) {
    SvgScale sc{1e300, -1e300, 0.0, 0.0};
    for (const auto& p : points) {
        sc.x_min = std::min(sc.x_min, p.relative_gap);
        sc.x_max = std::max(sc.x_max, p.relative_gap);
        sc.y_max = std::max(sc.y_max, p.median_speedup);
    }
    sc.x_min = std::min(sc.x_min, -20.0);
    sc.x_max = std::max(sc.x_max, 5.0);
    sc.y_max = std::max(sc.y_max * 1.1, 1.5);

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    svg += "  <rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    svg += "  <line x1=\"48\" y1=\"352\" x2=\"592\" y2=\"352\" stroke=\"black\"/>\n";
    svg += "  <line x1=\"48\" y1=\"48\" x2=\"48\" y2=\"352\" stroke=\"black\"/>\n";
    svg += "  <text x=\"320\" y=\"390\" text-anchor=\"middle\" font-size=\"12\">relative "
           "teacher-student gap (%)</text>\n";
    svg += "  <text x=\"14\" y=\"200\" text-anchor=\"middle\" font-size=\"12\" "
           "transform=\"rotate(-90 14 200)\">median speedup</text>\n";
    // speedup = 1 reference and the operating band shading
    svg += "  <line x1=\"48\" y1=\"" + num_short(sc.sy(1.0), 1) + "\" x2=\"592\" y2=\"" +
           num_short(sc.sy(1.0), 1) + "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    const double band_x0 = sc.sx(-15.0);
    const double band_x1 = sc.sx(0.0);
    svg += "  <rect x=\"" + num_short(band_x0, 1) + "\" y=\"48\" width=\"" +
           num_short(band_x1 - band_x0, 1) +
           "\" height=\"304\" fill=\"#2a9d2a\" opacity=\"0.08\"/>\n";
    for (const auto& p : points) {
        svg += "  <circle cx=\"" + num_short(sc.sx(p.relative_gap), 1) + "\" cy=\"" +
               num_short(sc.sy(p.median_speedup), 1) + "\" r=\"5\" fill=\"#c03434\"/>\n";
        svg += "  <text x=\"" + num_short(sc.sx(p.relative_gap) + 7, 1) + "\" y=\"" +
               num_short(sc.sy(p.median_speedup) - 5, 1) + "\" font-size=\"10\">" +
               num_short(p.median_speedup) + "x (" + p.regime + ")</text>\n";
    }
    svg += "  <text x=\"48\" y=\"366\" font-size=\"10\">" + num_short(sc.x_min, 0) + "%</text>\n";
    svg += "  <text x=\"592\" y=\"366\" text-anchor=\"end\" font-size=\"10\">" +
           num_short(sc.x_max, 0) + "%</text>\n";
    svg += "</svg>\n";
    auto out = open_out(path);
    out << svg;
}

void write_detection_json(const std::filesystem::path& path,
                          const harness::DetectionValidation& validation) {
    json doc;
    doc["dataset_fingerprint"] = validation.dataset_fingerprint;
    doc["grid"] = json::array();
    for (const auto& cell : validation.grid) {
        doc["grid"].push_back({{"score_threshold", cell.score_threshold},
                               {"beta", cell.beta},
                               {"mean_loss", cell.mean_loss},
                               {"mean_mask_fraction", cell.mean_mask_fraction}});
    }
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

}  // namespace w2s::report
