#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "w2s/datasets.hpp"
#include "w2s/gate.hpp"
#include "w2s/metrics.hpp"
#include "w2s/models.hpp"
#include "w2s/optimizers.hpp"
#include "w2s/train_step.hpp"

namespace w2s::config {

/// Nested key-value text file: one `section.key = value` per line, `#`
/// comments, lists comma-separated. Typed getters record which keys were
/// consumed so unknown (usually misspelled) keys can be rejected.
class KeyValueFile {
public:
    static KeyValueFile from_file(const std::filesystem::path& path);
    static KeyValueFile from_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int_or(const std::string& key, long long fallback) const;
    std::uint64_t get_uint64_or(const std::string& key, std::uint64_t fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;
    std::vector<long long> get_int_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

    /// Throws ConfigError naming any key that was never consumed.
    void require_all_consumed() const;

    const std::string& raw_text() const { return raw_text_; }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
    std::string raw_text_;
    std::string origin_;
};

enum class Task { Classification, DetectionSynthetic, DiffusionToy };

struct OptimizerSpec {
    opt::OptimizerKind kind = opt::OptimizerKind::SgdMomentum;
    opt::SgdConfig sgd;
    opt::AdamWConfig adamw;
    opt::MuonConfig muon;
};

/// Where the frozen teacher comes from: an existing checkpoint, or a fresh
/// training run (optionally selecting one of its stage checkpoints).
struct TeacherSource {
    std::string checkpoint_path;  // nonempty: load this file
    bool train_fresh = false;
    models::ModelSpec spec;       // train-fresh architecture
    double stop_at_metric = std::numeric_limits<double>::quiet_NaN();  // NaN: budget only
    double lr = std::numeric_limits<double>::quiet_NaN();  // NaN: use optimizer.lr
    long long budget = 0;
    int stages = 3;
    int stage = -1;  // >=0: consume this stage checkpoint instead of the final one
    bool cache_outputs = false;
};

struct ExperimentConfig {
    Task task = Task::Classification;

    // dataset
    std::string data_kind;  // gaussian_mixture | cifar10 | swirl | synthetic_anchors
    std::uint64_t data_seed = 0;
    data::GaussianMixtureParams gaussian;
    data::SwirlParams swirl;
    data::AnchorParams anchors;
    std::filesystem::path cifar_train_path;
    std::filesystem::path cifar_val_path;

    models::ModelSpec student;  // per-run seed is filled by the harness
    TeacherSource teacher;

    train::TrainStepConfig step;  // distill schedule/gate/temperature + task knobs
    OptimizerSpec optimizer;

    long long budget = 0;      // epochs (classification) or steps (diffusion)
    long long eval_every = 1;  // validation cadence in the same unit
    int batch_size = 64;
    int diffusion_t_max = 100;

    metrics::CrossingRule crossing;
    bool tau_is_teacher_metric = true;  // crossing.tau = auto

    std::vector<std::uint64_t> seeds;
    std::filesystem::path out_dir;

    std::vector<double> sweep_teacher_targets;  // sweep-band subcommand

    std::string config_text;  // verbatim snapshot of the loaded file

    static ExperimentConfig load(const std::filesystem::path& path);
    static ExperimentConfig parse(const KeyValueFile& kv);
    void validate() const;
};

const char* task_name(Task task);

}  // namespace w2s::config
