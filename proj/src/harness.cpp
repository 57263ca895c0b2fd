#include "w2s/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "w2s/errors.hpp"
#include "w2s/report.hpp"
#include "w2s/rng.hpp"
#include "w2s/train_step.hpp"

namespace w2s::harness {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::Task;
using models::MatX;
using models::ModelParams;
using models::ModelSpec;

double median(std::vector<double> values) {
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

// ---------------------------------------------------------------- datasets

struct Datasets {
    data::ClassificationDataset cls;
    data::DiffusionDataset diff;
    std::uint64_t fingerprint = 0;
};

Datasets build_datasets(const ExperimentConfig& cfg) {
    Datasets ds;
    if (cfg.task == Task::Classification) {
        ds.cls = cfg.data_kind == "cifar10"
                     ? data::cifar10_dataset(cfg.cifar_train_path, cfg.cifar_val_path)
                     : data::make_gaussian_mixture(cfg.gaussian, cfg.data_seed);
        ds.fingerprint = ds.cls.fingerprint;
    } else if (cfg.task == Task::DiffusionToy) {
        ds.diff = data::make_swirl(cfg.swirl, cfg.data_seed);
        ds.fingerprint = ds.diff.fingerprint;
    }
    return ds;
}

// ---------------------------------------------------------------- evaluation

double eval_classification(const ModelParams<float>& params, const ModelSpec& spec,
                           const data::ClassificationDataset& ds) {
    const MatX<float> logits = models::forward(params, spec, ds.val_x);
    long long correct = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index arg = 0;
        logits.row(r).maxCoeff(&arg);
        correct += arg == ds.val_y(r);
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(logits.rows());
}

// Linear noise schedule; alpha_bar[t] is the cumulative signal fraction.
std::vector<double> make_alpha_bar(int t_max) {
    std::vector<double> ab(t_max);
    double prod = 1.0;
    for (int t = 0; t < t_max; ++t) {
        const double beta =
            1e-4 + (0.02 - 1e-4) * static_cast<double>(t) / std::max(1, t_max - 1);
        prod *= 1.0 - beta;
        ab[t] = prod;
    }
    return ab;
}

// Fixed noised validation set: every eval (and the teacher reference) scores
// the same (x_t, t, eps) draws, so metrics are comparable across runs.
struct DiffusionEvalSet {
    MatX<float> x_t;
    Eigen::VectorXi t;
    MatX<float> eps;
};

DiffusionEvalSet make_diffusion_eval_set(const data::DiffusionDataset& ds, int t_max,
                                         std::uint64_t data_seed) {
    const auto& x0 = ds.val_x;
    const auto ab = make_alpha_bar(t_max);
    auto rng = make_rng(data_seed, "val-noise");
    std::uniform_int_distribution<int> tdist(0, t_max - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);

    DiffusionEvalSet set;
    set.x_t.resize(x0.rows(), x0.cols());
    set.t.resize(x0.rows());
    set.eps.resize(x0.rows(), x0.cols());
    for (Eigen::Index r = 0; r < x0.rows(); ++r) {
        const int t = tdist(rng);
        set.t(r) = t;
        const float sa = static_cast<float>(std::sqrt(ab[t]));
        const float sn = static_cast<float>(std::sqrt(1.0 - ab[t]));
        for (Eigen::Index c = 0; c < x0.cols(); ++c) {
            set.eps(r, c) = static_cast<float>(gauss(rng));
            set.x_t(r, c) = sa * x0(r, c) + sn * set.eps(r, c);
        }
    }
    return set;
}

double eval_denoising(const ModelParams<float>& params, const ModelSpec& spec,
                      const DiffusionEvalSet& set) {
    const MatX<float> pred = models::forward(params, spec, set.x_t, &set.t);
    return losses::gen_base_loss(pred.cast<double>(), set.eps.cast<double>());
}

double eval_model(const ExperimentConfig& cfg, const Datasets& ds, const DiffusionEvalSet* eval_set,
                  const ModelParams<float>& params, const ModelSpec& spec) {
    return cfg.task == Task::Classification ? eval_classification(params, spec, ds.cls)
                                            : eval_denoising(params, spec, *eval_set);
}

MetricDirection task_direction(Task task) {
    return task == Task::DiffusionToy ? MetricDirection::LowerIsBetter
                                      : MetricDirection::HigherIsBetter;
}

bool better(double a, double b, MetricDirection dir) {
    return dir == MetricDirection::HigherIsBetter ? a > b : a < b;
}

// ---------------------------------------------------------------- arm runner

struct ArmContext {
    const ExperimentConfig* cfg = nullptr;
    const Datasets* ds = nullptr;
    const DiffusionEvalSet* eval_set = nullptr;           // diffusion only
    const models::FrozenTeacher<float>* teacher = nullptr;  // always set
    double m_ref = 0.0;
    bool distill_enabled = false;
    ModelSpec model_spec;  // the model being trained (student or fresh teacher)
    std::uint64_t run_seed = 0;
    std::string run_id;
    TeacherCache* cache = nullptr;
    // Called after each validation event; return true to stop training early.
    std::function<bool(long long, double, const ModelParams<float>&)> on_eval;
};

opt::OptimizerState<float> make_optimizer(const config::OptimizerSpec& spec,
                                          const ModelParams<float>& params) {
    switch (spec.kind) {
        case opt::OptimizerKind::SgdMomentum: return opt::make_sgd(spec.sgd, params);
        case opt::OptimizerKind::AdamW: return opt::make_adamw(spec.adamw, params);
        case opt::OptimizerKind::Muon: return opt::make_muon(spec.muon, params);
    }
    throw std::logic_error("unknown optimizer kind");
}

struct StepAccumulator {
    double sum_base = 0.0;
    double sum_distill = 0.0;
    double last_lambda = 0.0;
    long long steps = 0;

    void add(const train::StepLogRow& log) {
        sum_base += log.grad_norm_base;
        sum_distill += log.grad_norm_distill;
        last_lambda = log.lambda_eff;
        ++steps;
    }
    double mean_base() const { return steps ? sum_base / static_cast<double>(steps) : 0.0; }
    double mean_distill() const { return steps ? sum_distill / static_cast<double>(steps) : 0.0; }
    void reset() { sum_base = sum_distill = 0.0; steps = 0; }
};

ArmResult run_arm(const ArmContext& ctx) {
    const auto& cfg = *ctx.cfg;
    const auto dir = task_direction(cfg.task);
    const auto start = std::chrono::steady_clock::now();

    ArmResult result;
    result.run_id = ctx.run_id;
    result.series.direction = dir;
    result.best_metric = dir == MetricDirection::HigherIsBetter
                             ? -std::numeric_limits<double>::infinity()
                             : std::numeric_limits<double>::infinity();

    auto params = models::init_params<float>(ctx.model_spec);
    auto opt_state = make_optimizer(cfg.optimizer, params);

    GateState gate;
    if (ctx.distill_enabled) {
        gate = cfg.step.distill.gate_init;
        gate.m_ref = ctx.m_ref;
        gate.counter_c = 0;
        gate.active_a = true;
        gate.direction = dir;
    } else {
        gate.active_a = false;
        gate.direction = dir;
    }

    const TeacherCache::StreamKey cache_key{ctx.ds->fingerprint,
                                            ctx.teacher->params().fingerprint(),
                                            derive_seed(ctx.run_seed, "order")};
    StepAccumulator acc;
    long long batch_counter = 0;

    auto wall_seconds = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    // One validation event: log row, gate update, best tracking, early stop.
    auto validate_at = [&](long long u) {
        const double metric = eval_model(cfg, *ctx.ds, ctx.eval_set, params, ctx.model_spec);
        if (ctx.distill_enabled) {
            gate = gate_update(gate, metric);
        }
        EvalLogRow row;
        row.run_id = ctx.run_id;
        row.u = u;
        row.metric = metric;
        row.lambda_eff = acc.last_lambda;
        row.gate_active = ctx.distill_enabled && gate.active_a;
        row.grad_norm_base = acc.mean_base();
        row.grad_norm_distill = acc.mean_distill();
        row.wall_time = wall_seconds();
        acc.reset();
        result.rows.push_back(row);
        result.series.points.push_back({u, metric});
        if (ctx.distill_enabled && !gate.active_a && result.gate_off_u < 0) {
            result.gate_off_u = u;
        }
        if (better(metric, result.best_metric, dir)) {
            result.best_metric = metric;
        }
        return ctx.on_eval && ctx.on_eval(u, metric, params);
    };

    try {
        if (cfg.task == Task::Classification) {
            const auto& train_x = ctx.ds->cls.train_x;
            const int n = static_cast<int>(train_x.rows());
            const int dim = static_cast<int>(train_x.cols());
            std::vector<int> order(n);
            std::iota(order.begin(), order.end(), 0);

            for (long long epoch = 1; epoch <= cfg.budget; ++epoch) {
                auto order_rng = std::mt19937_64{derive_seed(ctx.run_seed, "order", static_cast<std::uint64_t>(epoch))};
                std::shuffle(order.begin(), order.end(), order_rng);
                result.batch_fingerprints.push_back(
                    fnv1a(order.data(), sizeof(int) * order.size()));

                for (int begin = 0; begin < n; begin += cfg.batch_size) {
                    const int b = std::min(cfg.batch_size, n - begin);
                    train::ClassificationBatch<float> batch;
                    batch.inputs.resize(b, dim);
                    batch.labels.resize(b);
                    for (int i = 0; i < b; ++i) {
                        batch.inputs.row(i) = train_x.row(order[begin + i]);
                        batch.labels(i) = ctx.ds->cls.train_y(order[begin + i]);
                    }
                    const double u = static_cast<double>(epoch);
                    const MatX<float>* cached = nullptr;
                    if (gate.active_a && ctx.cache != nullptr) {
                        cached = &ctx.cache->get_or_compute(cache_key, batch_counter, [&] {
                            return ctx.teacher->predict(batch.inputs);
                        });
                    }
                    auto step = train::train_step(std::move(params), std::move(opt_state), batch,
                                                  *ctx.teacher, ctx.model_spec, cfg.step, gate, u,
                                                  cached);
                    params = std::move(step.params);
                    opt_state = std::move(step.opt_state);
                    acc.add(step.log);
                    result.teacher_forward_batches += step.log.teacher_forwards;
                    ++batch_counter;
                }
                if (epoch % cfg.eval_every == 0 && validate_at(epoch)) {
                    break;
                }
            }
        } else if (cfg.task == Task::DiffusionToy) {
            const auto& train_x = ctx.ds->diff.train_x;
            const int n = static_cast<int>(train_x.rows());
            const int t_max = cfg.diffusion_t_max;
            const auto ab = make_alpha_bar(t_max);
            auto order_rng = make_rng(ctx.run_seed, "order");
            auto noise_rng = make_rng(ctx.run_seed, "noise");
            std::uniform_int_distribution<int> pick(0, n - 1);
            std::uniform_int_distribution<int> tdist(0, t_max - 1);
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::uint64_t interval_hash = 0xcbf29ce484222325ULL;

            for (long long s = 1; s <= cfg.budget; ++s) {
                const int b = cfg.batch_size;
                train::DiffusionBatch<float> batch;
                batch.x_t.resize(b, 2);
                batch.timesteps.resize(b);
                batch.t_max = t_max;
                batch.eps_true.resize(b, 2);
                for (int i = 0; i < b; ++i) {
                    const int idx = pick(order_rng);
                    interval_hash = fnv1a(&idx, sizeof(idx), interval_hash);
                    const int t = tdist(noise_rng);
                    batch.timesteps(i) = t;
                    const float sa = static_cast<float>(std::sqrt(ab[t]));
                    const float sn = static_cast<float>(std::sqrt(1.0 - ab[t]));
                    for (int c = 0; c < 2; ++c) {
                        const float e = static_cast<float>(gauss(noise_rng));
                        batch.eps_true(i, c) = e;
                        batch.x_t(i, c) = sa * train_x(idx, c) + sn * e;
                    }
                }
                const double u = static_cast<double>(s);
                const MatX<float>* cached = nullptr;
                if (gate.active_a && ctx.cache != nullptr) {
                    cached = &ctx.cache->get_or_compute(cache_key, batch_counter, [&] {
                        return ctx.teacher->predict(batch.x_t, &batch.timesteps);
                    });
                }
                auto step = train::train_step(std::move(params), std::move(opt_state), batch,
                                              *ctx.teacher, ctx.model_spec, cfg.step, gate, u,
                                              cached);
                params = std::move(step.params);
                opt_state = std::move(step.opt_state);
                acc.add(step.log);
                result.teacher_forward_batches += step.log.teacher_forwards;
                ++batch_counter;

                if (s % cfg.eval_every == 0) {
                    result.batch_fingerprints.push_back(interval_hash);
                    interval_hash = 0xcbf29ce484222325ULL;
                    if (validate_at(s)) {
                        break;
                    }
                }
            }
        } else {
            throw ConfigError("run_arm: detection task has no training loop");
        }
    } catch (const DivergenceError& e) {
        result.failed = true;
        result.failure_reason = e.what();
    }
    result.params_fingerprint = params.fingerprint();
    result.final_params = std::move(params);
    return result;
}

// ---------------------------------------------------------------- teacher

Eigen::MatrixXd row_softmax(const MatX<float>& logits) {
    Eigen::MatrixXd shifted =
        logits.cast<double>().colwise() - logits.cast<double>().rowwise().maxCoeff();
    Eigen::MatrixXd p = shifted.array().exp();
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

// Mechanism diagnostics on the validation split: teacher entropy, student vs
// teacher feature similarity (linear CKA on penultimate activations) and
// output alignment KL(student || teacher), for both arms' final models.
void write_pair_diagnostics(const fs::path& path, const data::ClassificationDataset& ds,
                            const models::FrozenTeacher<float>& teacher,
                            const ModelSpec& student_spec,
                            const ModelParams<float>& base_params,
                            const ModelParams<float>& ours_params) {
    const Eigen::MatrixXd teacher_probs = row_softmax(teacher.predict(ds.val_x));
    const Eigen::MatrixXd teacher_feat =
        models::penultimate_features(teacher.params(), teacher.spec(), ds.val_x)
            .cast<double>();

    nlohmann::json doc;
    doc["teacher_entropy"] = metrics::mean_entropy(teacher_probs);
    auto arm = [&](const ModelParams<float>& params) {
        nlohmann::json out;
        const Eigen::MatrixXd probs = row_softmax(models::forward(params, student_spec, ds.val_x));
        const Eigen::MatrixXd feat =
            models::penultimate_features(params, student_spec, ds.val_x).cast<double>();
        out["kl_student_teacher"] = metrics::mean_kl(probs, teacher_probs);
        out["cka_student_teacher"] = metrics::linear_cka(feat, teacher_feat);
        return out;
    };
    doc["baseline"] = arm(base_params);
    doc["ours"] = arm(ours_params);
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
}

std::string model_name(const ModelSpec& spec) {
    std::string name = ckpt::family_name(spec.family) + "[";
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
        name += (i ? "," : "") + std::to_string(spec.widths[i]);
    }
    return name + "]";
}

models::FrozenTeacher<float> dummy_teacher(const ModelSpec& model_spec) {
    ModelSpec spec = model_spec;
    spec.seed = 0;
    return {spec, models::init_params<float>(spec), 0.0};
}

models::FrozenTeacher<float> teacher_from_checkpoint(const fs::path& path) {
    auto checkpoint = ckpt::load_checkpoint(path);
    return {checkpoint.spec, std::move(checkpoint.params), checkpoint.reference_metric};
}

}  // namespace

TeacherTrainResult train_teacher(const ExperimentConfig& cfg, const fs::path& prefix) {
    const Datasets ds = build_datasets(cfg);
    DiffusionEvalSet eval_set;
    if (cfg.task == Task::DiffusionToy) {
        eval_set = make_diffusion_eval_set(ds.diff, cfg.diffusion_t_max, cfg.data_seed);
    }
    const auto dir = task_direction(cfg.task);
    const auto& source = cfg.teacher;
    if (!source.train_fresh) {
        throw ConfigError("train_teacher: config does not describe a fresh teacher");
    }

    // Stage boundary i is the (budget*(i+1)/stages)-th training index; each
    // stage checkpoint freezes the best parameters seen up to that boundary.
    std::vector<long long> boundaries(source.stages);
    for (int i = 0; i < source.stages; ++i) {
        boundaries[i] = source.budget * (i + 1) / source.stages;
    }

    ExperimentConfig teacher_cfg = cfg;
    teacher_cfg.budget = source.budget;
    if (!std::isnan(source.lr)) {
        teacher_cfg.optimizer.sgd.lr = source.lr;
        teacher_cfg.optimizer.adamw.lr = source.lr;
        teacher_cfg.optimizer.muon.lr = source.lr;
        teacher_cfg.optimizer.muon.fallback.lr = source.lr * 0.2;
    }

    TeacherTrainResult out;
    out.stage_paths.resize(source.stages);
    double best_metric = dir == MetricDirection::HigherIsBetter
                             ? -std::numeric_limits<double>::infinity()
                             : std::numeric_limits<double>::infinity();
    ModelParams<float> best_params;
    int next_stage = 0;
    bool target_reached = false;

    auto save_stage = [&](int stage) {
        const fs::path path = prefix.string() + ".stage" + std::to_string(stage) + ".ckpt.json";
        ckpt::save_checkpoint(path, {source.spec, best_params, best_metric});
        out.stage_paths[stage] = path;
    };

    ArmContext ctx;
    ctx.cfg = &teacher_cfg;
    ctx.ds = &ds;
    ctx.eval_set = cfg.task == Task::DiffusionToy ? &eval_set : nullptr;
    auto dummy = dummy_teacher(source.spec);
    ctx.teacher = &dummy;
    ctx.distill_enabled = false;
    ctx.model_spec = source.spec;
    ctx.run_seed = derive_seed(source.spec.seed, "teacher-train");
    ctx.run_id = "teacher";
    ctx.on_eval = [&](long long u, double metric, const ModelParams<float>& params) {
        if (better(metric, best_metric, dir) || best_params.size() == 0) {
            best_metric = metric;
            best_params = params;
        }
        while (next_stage < source.stages && u >= boundaries[next_stage]) {
            save_stage(next_stage);
            ++next_stage;
        }
        if (!std::isnan(source.stop_at_metric) &&
            surpass(metric, source.stop_at_metric, dir) == 1) {
            target_reached = true;
            return true;  // stop training
        }
        return false;
    };

    ArmResult arm = run_arm(ctx);
    if (arm.failed) {
        throw DivergenceError("teacher training diverged: " + arm.failure_reason);
    }
    if (best_params.size() == 0) {
        throw ConfigError("teacher training produced no validation event; check cadence");
    }
    while (next_stage < source.stages) {
        save_stage(next_stage);
        ++next_stage;
    }
    out.final_path = prefix.string() + ".ckpt.json";
    ckpt::save_checkpoint(out.final_path, {source.spec, best_params, best_metric});
    out.metric = best_metric;
    out.reached_target = std::isnan(source.stop_at_metric) || target_reached;
    if (!out.reached_target) {
        std::cerr << "warning: teacher target " << source.stop_at_metric
                  << " not reached within budget; best checkpoint has metric " << best_metric
                  << "\n";
    }
    return out;
}

PairOutcome run_pair(const ExperimentConfig& cfg) {
    if (cfg.task == Task::DetectionSynthetic) {
        throw ConfigError(
            "run_pair: the detection task is loss-level only; it runs as a kernel validation "
            "(see run_detection_validation)");
    }
    const Datasets ds = build_datasets(cfg);
    DiffusionEvalSet eval_set;
    if (cfg.task == Task::DiffusionToy) {
        eval_set = make_diffusion_eval_set(ds.diff, cfg.diffusion_t_max, cfg.data_seed);
    }
    const DiffusionEvalSet* eval_ptr = cfg.task == Task::DiffusionToy ? &eval_set : nullptr;
    const auto dir = task_direction(cfg.task);

    fs::create_directories(cfg.out_dir);
    {
        std::ofstream snapshot(cfg.out_dir / "config_snapshot.cfg");
        snapshot << cfg.config_text;
    }

    // Teacher: load or train, then evaluate once on this validation split.
    models::FrozenTeacher<float> teacher = dummy_teacher(cfg.student);
    std::string teacher_name;
    if (!cfg.teacher.checkpoint_path.empty()) {
        teacher = teacher_from_checkpoint(cfg.teacher.checkpoint_path);
        teacher_name = fs::path(cfg.teacher.checkpoint_path).filename().string();
    } else {
        auto trained = train_teacher(cfg, cfg.out_dir / "teacher");
        const fs::path& path = cfg.teacher.stage >= 0 ? trained.stage_paths[cfg.teacher.stage]
                                                      : trained.final_path;
        teacher = teacher_from_checkpoint(path);
        teacher_name = model_name(cfg.teacher.spec) +
                       (cfg.teacher.stage >= 0 ? "@stage" + std::to_string(cfg.teacher.stage) : "");
    }
    if (teacher.spec().input_dim() != cfg.student.input_dim() ||
        teacher.spec().output_dim != cfg.student.output_dim) {
        throw ConfigError("teacher/student interface mismatch (input or output dims differ)");
    }

    PairOutcome outcome;
    outcome.pair_dir = cfg.out_dir;
    outcome.dataset_name = cfg.data_kind;
    outcome.student_name = model_name(cfg.student);
    outcome.teacher_name = teacher_name;
    outcome.optimizer_name = cfg.optimizer.kind == opt::OptimizerKind::SgdMomentum ? "sgd"
                             : cfg.optimizer.kind == opt::OptimizerKind::AdamW     ? "adamw"
                                                                                   : "muon";
    outcome.teacher_metric = eval_model(cfg, ds, eval_ptr, teacher.params(), teacher.spec());
    outcome.tau = cfg.tau_is_teacher_metric ? outcome.teacher_metric : cfg.crossing.tau;
    const metrics::CrossingRule rule{outcome.tau, cfg.crossing.consecutive_hits};

    TeacherCache cache;

    for (const std::uint64_t seed : cfg.seeds) {
        const fs::path seed_dir = cfg.out_dir / ("seed_" + std::to_string(seed));
        fs::create_directories(seed_dir);

        ModelSpec student_spec = cfg.student;
        student_spec.seed = derive_seed(seed, "student-init");

        ArmContext base_ctx;
        base_ctx.cfg = &cfg;
        base_ctx.ds = &ds;
        base_ctx.eval_set = eval_ptr;
        base_ctx.teacher = &teacher;
        base_ctx.m_ref = outcome.teacher_metric;
        base_ctx.distill_enabled = false;
        base_ctx.model_spec = student_spec;
        base_ctx.run_seed = seed;
        base_ctx.run_id = "s" + std::to_string(seed) + "-base";

        ArmContext ours_ctx = base_ctx;
        ours_ctx.distill_enabled = true;
        ours_ctx.run_id = "s" + std::to_string(seed) + "-ours";
        ours_ctx.cache = cfg.teacher.cache_outputs ? &cache : nullptr;

        ArmResult base_arm = run_arm(base_ctx);
        ArmResult ours_arm = run_arm(ours_ctx);

        // Matched-recipe guarantee: both arms must have consumed identical
        // batch sequences. Logged per seed so finished runs can be audited.
        if (base_arm.batch_fingerprints != ours_arm.batch_fingerprints) {
            throw std::logic_error("matched-recipe violation: batch sequences differ between arms");
        }
        {
            nlohmann::json fp;
            fp["baseline"] = base_arm.batch_fingerprints;
            fp["ours"] = ours_arm.batch_fingerprints;
            fp["identical"] = true;
            std::ofstream out(seed_dir / "batch_fingerprints.json");
            out << fp.dump(2) << '\n';
        }

        RunReport report;
        report.seed = seed;
        report.log_path = seed_dir.string();
        report.failed = base_arm.failed || ours_arm.failed;
        report.failure_reason = base_arm.failed ? base_arm.failure_reason
                                                : ours_arm.failure_reason;
        report.gate_off_u = ours_arm.gate_off_u;
        if (!base_arm.series.points.empty()) {
            report.best_metric_base = base_arm.best_metric;
            if (!base_arm.failed) {
                report.first_at_tau_base = metrics::first_at_tau(base_arm.series, rule);
            }
        }
        if (!ours_arm.series.points.empty()) {
            report.best_metric_ours = ours_arm.best_metric;
            if (!ours_arm.failed) {
                report.first_at_tau_ours = metrics::first_at_tau(ours_arm.series, rule);
            }
        }
        if (report.first_at_tau_base && report.first_at_tau_ours) {
            report.speedup =
                metrics::speedup_ratio(*report.first_at_tau_base, *report.first_at_tau_ours);
        }

        if (cfg.task == Task::Classification && !base_arm.failed && !ours_arm.failed) {
            try {
                write_pair_diagnostics(seed_dir / "diagnostics.json", ds.cls, teacher,
                                       student_spec, base_arm.final_params,
                                       ours_arm.final_params);
            } catch (const std::exception& e) {
                std::cerr << "warning: diagnostics unavailable for seed " << seed << ": "
                          << e.what() << "\n";
            }
        }
        report::write_eval_log_csv(seed_dir / "baseline_log.csv", base_arm.rows);
        report::write_eval_log_csv(seed_dir / "ours_log.csv", ours_arm.rows);
        report::write_run_report_json(seed_dir / "report.json", report);
        report::write_curves_svg(seed_dir / "curves.svg", base_arm.series, ours_arm.series,
                                 outcome.tau, ours_arm.gate_off_u);

        outcome.any_failed = outcome.any_failed || report.failed;
        outcome.reports.push_back(std::move(report));
        outcome.baseline_arms.push_back(std::move(base_arm));
        outcome.ours_arms.push_back(std::move(ours_arm));
    }

    std::vector<double> first_base, first_ours, speedups, best_base, best_ours;
    for (const auto& r : outcome.reports) {
        if (r.failed) {
            continue;
        }
        best_base.push_back(r.best_metric_base);
        best_ours.push_back(r.best_metric_ours);
        if (r.first_at_tau_base) first_base.push_back(static_cast<double>(*r.first_at_tau_base));
        if (r.first_at_tau_ours) first_ours.push_back(static_cast<double>(*r.first_at_tau_ours));
        if (r.speedup) speedups.push_back(*r.speedup);
    }
    outcome.median_first_base = median(first_base);
    outcome.median_first_ours = median(first_ours);
    outcome.median_speedup = median(speedups);
    outcome.median_best_base = median(best_base);
    outcome.median_best_ours = median(best_ours);
    if (dir == MetricDirection::HigherIsBetter && !best_base.empty() &&
        outcome.median_best_base > 0.0) {
        outcome.band =
            metrics::classify_teacher_band(outcome.teacher_metric, outcome.median_best_base);
    }
    report::write_aggregate_json(cfg.out_dir / "aggregate.json", outcome);
    return outcome;
}

DetectionValidation run_detection_validation(const ExperimentConfig& cfg) {
    if (cfg.task != Task::DetectionSynthetic) {
        throw ConfigError("run_detection_validation requires task = detection");
    }
    const auto ds = data::make_synthetic_anchors(cfg.anchors, cfg.data_seed);
    const double temperature = cfg.step.distill.temperature.t_start;

    DetectionValidation validation;
    validation.dataset_fingerprint = ds.fingerprint;
    for (const double threshold : {0.0, 0.2, 0.5, 0.8, 0.95}) {
        for (const double beta : {0.0, 1.0, 2.0}) {
            DetectionValidation::Cell cell;
            cell.score_threshold = threshold;
            cell.beta = beta;
            for (const auto& scene : ds.scenes) {
                cell.mean_loss += losses::det_distill_loss(scene.student, scene.teacher,
                                                           temperature, threshold, beta);
                long long masked = 0;
                for (Eigen::Index a = 0; a < scene.teacher.cls_logits.rows(); ++a) {
                    const double conf =
                        1.0 / (1.0 + std::exp(-scene.teacher.cls_logits.row(a).maxCoeff()));
                    masked += conf >= threshold;
                }
                cell.mean_mask_fraction += static_cast<double>(masked) /
                                           static_cast<double>(scene.teacher.cls_logits.rows());
            }
            cell.mean_loss /= static_cast<double>(ds.scenes.size());
            cell.mean_mask_fraction /= static_cast<double>(ds.scenes.size());
            validation.grid.push_back(cell);
        }
    }
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream snapshot(cfg.out_dir / "config_snapshot.cfg");
        snapshot << cfg.config_text;
    }
    validation.report_path = cfg.out_dir / "detection_validation.json";
    report::write_detection_json(validation.report_path, validation);
    return validation;
}

BandSweepOutcome sweep_band(const ExperimentConfig& cfg) {
    if (cfg.tau_is_teacher_metric) {
        throw ConfigError("sweep-band needs a numeric crossing.tau shared across teachers");
    }
    if (!cfg.teacher.train_fresh) {
        throw ConfigError("sweep-band trains teachers per target; remove teacher.checkpoint");
    }
    if (cfg.sweep_teacher_targets.empty()) {
        throw ConfigError("sweep-band needs sweep.teacher_targets");
    }
    BandSweepOutcome outcome;
    outcome.sweep_dir = cfg.out_dir;
    fs::create_directories(cfg.out_dir);

    for (const double target : cfg.sweep_teacher_targets) {
        ExperimentConfig sub = cfg;
        sub.teacher.stop_at_metric = target;
        char label[32];
        std::snprintf(label, sizeof(label), "target_%g", target);
        sub.out_dir = cfg.out_dir / label;
        const PairOutcome pair = run_pair(sub);

        BandPoint point;
        point.teacher_target = target;
        point.teacher_metric = pair.teacher_metric;
        point.median_speedup = pair.median_speedup;
        point.median_first_base = pair.median_first_base;
        point.median_first_ours = pair.median_first_ours;
        if (pair.band) {
            point.relative_gap = pair.band->relative_gap;
            point.regime = metrics::regime_name(pair.band->regime);
        } else {
            point.relative_gap = std::numeric_limits<double>::quiet_NaN();
            point.regime = "n/a";
        }
        outcome.any_failed = outcome.any_failed || pair.any_failed;
        outcome.points.push_back(point);
    }
    report::write_band_csv(cfg.out_dir / "band.csv", outcome.points);
    report::write_band_svg(cfg.out_dir / "band.svg", outcome.points);
    return outcome;
}

}  // namespace w2s::harness
