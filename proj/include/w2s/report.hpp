#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "w2s/harness.hpp"

namespace w2s::report {

/// EvalLogRow CSV, fixed column order:
/// run_id,u,metric,lambda_eff,gate_active,grad_norm_base,grad_norm_distill,wall_time
void write_eval_log_csv(const std::filesystem::path& path,
                        const std::vector<harness::EvalLogRow>& rows);
std::vector<harness::EvalLogRow> read_eval_log_csv(const std::filesystem::path& path);

/// Per-seed RunReport rows, fixed column order:
/// seed,first_at_tau_base,first_at_tau_ours,speedup,best_metric_base,
/// best_metric_ours,log_path  (absent crossings are empty cells)
void write_reports_csv(const std::filesystem::path& path,
                       const std::vector<harness::RunReport>& reports);
std::vector<harness::RunReport> parse_reports_csv(const std::filesystem::path& path);

void write_run_report_json(const std::filesystem::path& path, const harness::RunReport& report);
harness::RunReport read_run_report_json(const std::filesystem::path& path);

void write_aggregate_json(const std::filesystem::path& path, const harness::PairOutcome& outcome);

/// Rebuilds the outcome summary (names, medians, per-seed reports) from a
/// previously written aggregate.json; arm traces are not restored.
harness::PairOutcome read_aggregate_json(const std::filesystem::path& path);

/// "1.67x"-style cell; an em dash when either crossing is missing.
std::string format_speedup(const std::optional<double>& speedup);

/// Fixed-column text table: dataset | student | teacher | optimizer |
/// teacher metric | tau | first@tau base->ours | speedup | best base/ours.
std::string render_pair_table(const harness::PairOutcome& outcome);

/// Paired metric-vs-index curves (baseline and ours), the tau line and a
/// gate-off marker when the gate fired.
void write_curves_svg(const std::filesystem::path& path, const metrics::MetricSeries& baseline,
                      const metrics::MetricSeries& ours, double tau, long long gate_off_u);

void write_band_csv(const std::filesystem::path& path,
                    const std::vector<harness::BandPoint>& points);
void write_band_svg(const std::filesystem::path& path,
                    const std::vector<harness::BandPoint>& points);

void write_detection_json(const std::filesystem::path& path,
                          const harness::DetectionValidation& validation);

}  // namespace w2s::report
