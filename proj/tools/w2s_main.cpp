// Command-line driver: teacher training, baseline-vs-ours paired runs,
// teacher operating-band sweeps, and report rendering over finished runs.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "w2s/config.hpp"
#include "w2s/errors.hpp"
#include "w2s/harness.hpp"
#include "w2s/report.hpp"

namespace fs = std::filesystem;
using namespace w2s;

namespace {

config::ExperimentConfig load_config(const std::string& config_path, const std::string& out_dir,
                                     const std::string& seed_list,
                                     const std::string& teacher_ckpt) {
    auto cfg = config::ExperimentConfig::load(config_path);
    if (!out_dir.empty()) {
        cfg.out_dir = out_dir;
    }
    if (!seed_list.empty()) {
        cfg.seeds.clear();
        for (long long s : config::KeyValueFile::from_string("seeds = " + seed_list)
                               .get_int_list("seeds")) {
            cfg.seeds.push_back(static_cast<std::uint64_t>(s));
        }
    }
    if (!teacher_ckpt.empty()) {
        cfg.teacher.checkpoint_path = teacher_ckpt;
        cfg.teacher.train_fresh = false;
        if (!fs::exists(teacher_ckpt)) {
            throw ConfigError("teacher checkpoint does not exist: " + teacher_ckpt);
        }
    }
    cfg.validate();
    return cfg;
}

int cmd_train_teacher(const config::ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const auto result = harness::train_teacher(cfg, cfg.out_dir / "teacher");
    std::cout << "teacher checkpoint: " << result.final_path.string() << "\n";
    for (std::size_t i = 0; i < result.stage_paths.size(); ++i) {
        std::cout << "  stage " << i << ": " << result.stage_paths[i].string() << "\n";
    }
    std::cout << "validation metric: " << result.metric << "\n";
    return 0;
}

int cmd_run_pair(const config::ExperimentConfig& cfg) {
    if (cfg.task == config::Task::DetectionSynthetic) {
        const auto validation = harness::run_detection_validation(cfg);
        std::cout << "detection loss-level validation over " << validation.grid.size()
                  << " (threshold, beta) cells -> " << validation.report_path.string() << "\n";
        return 0;
    }
    const auto outcome = harness::run_pair(cfg);
    std::cout << report::render_pair_table(outcome);
    std::cout << "\nrun artifacts: " << outcome.pair_dir.string() << "\n";
    return outcome.any_failed ? static_cast<int>(ExitCode::run_divergence) : 0;
}

int cmd_sweep_band(const config::ExperimentConfig& cfg) {
    const auto outcome = harness::sweep_band(cfg);
    std::cout << "teacher band sweep (" << outcome.points.size() << " teachers):\n";
    for (const auto& p : outcome.points) {
        std::cout << "  teacher " << p.teacher_metric << " gap " << p.relative_gap << "% ["
                  << p.regime << "] median speedup "
                  << report::format_speedup(std::isnan(p.median_speedup)
                                                ? std::optional<double>{}
                                                : std::optional<double>{p.median_speedup})
                  << "\n";
    }
    std::cout << "band data: " << (outcome.sweep_dir / "band.csv").string() << "\n";
    return outcome.any_failed ? static_cast<int>(ExitCode::run_divergence) : 0;
}

// Rebuilds one arm's metric series from its eval log.
metrics::MetricSeries series_from_log(const fs::path& csv) {
    metrics::MetricSeries series;
    for (const auto& row : report::read_eval_log_csv(csv)) {
        series.points.push_back({row.u, row.metric});
    }
    return series;
}

int cmd_report(const std::string& pair_dir, const std::string& format) {
    const fs::path dir(pair_dir);
    const auto outcome = report::read_aggregate_json(dir / "aggregate.json");
    if (format == "table") {
        const std::string table = report::render_pair_table(outcome);
        std::ofstream(dir / "table.txt") << table;
        std::cout << table;
    } else if (format == "csv") {
        report::write_reports_csv(dir / "reports.csv", outcome.reports);
        std::cout << "wrote " << (dir / "reports.csv").string() << "\n";
    } else if (format == "json") {
        std::cout << "aggregate report: " << (dir / "aggregate.json").string() << "\n";
    } else if (format == "svg") {
        for (const auto& run : outcome.reports) {
            const fs::path seed_dir = run.log_path;
            report::write_curves_svg(seed_dir / "curves.svg",
                                     series_from_log(seed_dir / "baseline_log.csv"),
                                     series_from_log(seed_dir / "ours_log.csv"), outcome.tau,
                                     run.gate_off_u);
            std::cout << "wrote " << (seed_dir / "curves.svg").string() << "\n";
        }
    } else {
        throw ConfigError("unknown --format '" + format + "' (table|csv|json|svg)");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weak-to-strong early-distillation training harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seed_list, teacher_ckpt, format = "table";
    std::string pair_dir;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
        cmd->add_option("--seed", seed_list, "comma-separated seed list (overrides config)");
        cmd->add_option("--teacher-ckpt", teacher_ckpt, "teacher checkpoint (overrides config)");
    };

    auto* train_cmd = app.add_subcommand("train-teacher", "train and checkpoint a frozen teacher");
    add_common(train_cmd);
    auto* pair_cmd = app.add_subcommand("run-pair", "run baseline-vs-ours over all seeds");
    add_common(pair_cmd);
    auto* sweep_cmd = app.add_subcommand("sweep-band", "teacher operating-band sweep");
    add_common(sweep_cmd);
    auto* report_cmd = app.add_subcommand("report", "render reports for a finished pair");
    report_cmd->add_option("--run-dir", pair_dir, "pair output directory")->required();
    report_cmd->add_option("--format", format, "table|csv|json|svg");

    CLI11_PARSE(app, argc, argv);

    try {
        if (report_cmd->parsed()) {
            return cmd_report(pair_dir, format);
        }
        const auto cfg = load_config(config_path, out_dir, seed_list, teacher_ckpt);
        if (train_cmd->parsed()) {
            return cmd_train_teacher(cfg);
        }
        if (pair_cmd->parsed()) {
            return cmd_run_pair(cfg);
        }
        return cmd_sweep_band(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config_error);
    } catch (const DivergenceError& e) {
        std::cerr << "run divergence: " << e.what() << "\n";
        return static_cast<int>(ExitCode::run_divergence);
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::io_error);
    }
}
