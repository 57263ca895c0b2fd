#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "w2s/checkpoint.hpp"
#include "w2s/config.hpp"
#include "w2s/datasets.hpp"
#include "w2s/metrics.hpp"
#include "w2s/teacher_cache.hpp"

namespace w2s::harness {

/// One row per validation event.
struct EvalLogRow {
    std::string run_id;
    long long u = 0;            // epoch or step of the evaluation
    double metric = 0.0;        // validation metric at u
    double lambda_eff = 0.0;    // distillation weight in effect before this eval
    bool gate_active = false;   // gate state after applying this metric
    double grad_norm_base = 0.0;     // mean ||grad L_base|| since last eval
    double grad_norm_distill = 0.0;  // mean ||grad (gamma lambda L_distill)||
    double wall_time = 0.0;          // seconds since run start
};

/// Everything recorded for one training run (one arm of a pair).
struct ArmResult {
    std::string run_id;
    metrics::MetricSeries series;
    std::vector<EvalLogRow> rows;
    double best_metric = 0.0;
    std::vector<std::uint64_t> batch_fingerprints;  // one per epoch / eval interval
    std::uint64_t params_fingerprint = 0;
    models::ModelParams<float> final_params;
    long long gate_off_u = -1;  // first eval index with the gate off, -1 if never
    long long teacher_forward_batches = 0;
    bool failed = false;
    std::string failure_reason;
};

/// first@tau bookkeeping for one baseline/ours pair at one seed.
struct RunReport {
    std::uint64_t seed = 0;
    std::optional<long long> first_at_tau_base;
    std::optional<long long> first_at_tau_ours;
    std::optional<double> speedup;
    double best_metric_base = 0.0;
    double best_metric_ours = 0.0;
    std::string log_path;
    bool failed = false;
    std::string failure_reason;
    long long gate_off_u = -1;
};

struct PairOutcome {
    std::string dataset_name;
    std::string student_name;
    std::string teacher_name;
    std::string optimizer_name;
    double teacher_metric = 0.0;  // m_ref, evaluated on this run's validation split
    double tau = 0.0;
    std::vector<RunReport> reports;
    std::vector<ArmResult> baseline_arms;  // parallel to reports
    std::vector<ArmResult> ours_arms;
    double median_first_base = 0.0;  // NaN when no seed crossed
    double median_first_ours = 0.0;
    double median_speedup = 0.0;
    double median_best_base = 0.0;
    double median_best_ours = 0.0;
    std::optional<metrics::TeacherBandReport> band;  // higher-is-better tasks only
    std::filesystem::path pair_dir;
    bool any_failed = false;
};

struct TeacherTrainResult {
    std::filesystem::path final_path;
    std::vector<std::filesystem::path> stage_paths;
    double metric = 0.0;         // validation metric of the final checkpoint
    bool reached_target = true;  // false: stop_at was set but never reached
};

/// Detection is validated at the loss level: the distillation kernel is
/// evaluated over seeded synthetic anchor scenes across a threshold/beta grid.
struct DetectionValidation {
    struct Cell {
        double score_threshold = 0.0;
        double beta = 0.0;
        double mean_loss = 0.0;
        double mean_mask_fraction = 0.0;
    };
    std::vector<Cell> grid;
    std::uint64_t dataset_fingerprint = 0;
    std::filesystem::path report_path;
};

/// Trains the teacher spec without distillation, writing stage checkpoints
/// (best-so-far snapshots at evenly spaced budget boundaries) plus the final
/// checkpoint under prefix. Warns on stderr if stop_at is unreachable.
TeacherTrainResult train_teacher(const config::ExperimentConfig& cfg,
                                 const std::filesystem::path& prefix);

/// Baseline-vs-ours paired runs over all configured seeds. Writes per-seed
/// logs and reports plus an aggregate under cfg.out_dir.
PairOutcome run_pair(const config::ExperimentConfig& cfg);

DetectionValidation run_detection_validation(const config::ExperimentConfig& cfg);

struct BandPoint {
    double teacher_target = 0.0;
    double teacher_metric = 0.0;
    double relative_gap = 0.0;
    std::string regime;
    double median_speedup = 0.0;
    double median_first_base = 0.0;
    double median_first_ours = 0.0;
};

struct BandSweepOutcome {
    std::vector<BandPoint> points;
    std::filesystem::path sweep_dir;
    bool any_failed = false;
};

/// Teacher operating-band sweep: trains one teacher per sweep target, runs
/// the pair for each, and reports gap-vs-speedup points. Requires a numeric
/// crossing.tau so every pair shares the same target.
BandSweepOutcome sweep_band(const config::ExperimentConfig& cfg);

double median(std::vector<double> values);  // NaN on empty input

}  // namespace w2s::harness
