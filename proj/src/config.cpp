#include "w2s/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "w2s/errors.hpp"

namespace w2s::config {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            parts.push_back(item);
        }
    }
    return parts;
}

}  // namespace

KeyValueFile KeyValueFile::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_string(buffer.str(), path.string());
}

KeyValueFile KeyValueFile::from_string(const std::string& text, const std::string& origin) {
    KeyValueFile kv;
    kv.raw_text_ = text;
    kv.origin_ = origin;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        if (kv.values_.count(key) != 0) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                              "'");
        }
        kv.values_[key] = value;
    }
    return kv;
}

bool KeyValueFile::has(const std::string& key) const {
    return values_.count(key) != 0;
}

std::string KeyValueFile::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError(origin_ + ": missing required key '" + key + "'");
    }
    consumed_.insert(key);
    return it->second;
}

std::string KeyValueFile::get_string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

double KeyValueFile::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" + s + "'");
    }
}

double KeyValueFile::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long long KeyValueFile::get_int(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key '" + key + "' is not an integer: '" + s + "'");
    }
}

long long KeyValueFile::get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValueFile::get_uint64_or(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) {
        return fallback;
    }
    const long long v = get_int(key);
    if (v < 0) {
        throw ConfigError(origin_ + ": key '" + key + "' must be nonnegative");
    }
    return static_cast<std::uint64_t>(v);
}

bool KeyValueFile::get_bool_or(const std::string& key, bool fallback) const {
    if (!has(key)) {
        return fallback;
    }
    const std::string s = get_string(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<long long> KeyValueFile::get_int_list(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& item : split_list(get_string(key))) {
        try {
            out.push_back(std::stoll(item));
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' has a non-integer item '" + item +
                              "'");
        }
    }
    return out;
}

std::vector<double> KeyValueFile::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(get_string(key))) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' has a non-numeric item '" + item +
                              "'");
        }
    }
    return out;
}

void KeyValueFile::require_all_consumed() const {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : values_) {
        if (consumed_.count(key) == 0) {
            unknown.push_back(key);
        }
    }
    if (!unknown.empty()) {
        std::string msg = origin_ + ": unknown key(s):";
        for (const auto& k : unknown) {
            msg += " '" + k + "'";
        }
        throw ConfigError(msg);
    }
}

const char* task_name(Task task) {
    switch (task) {
        case Task::Classification: return "classification";
        case Task::DetectionSynthetic: return "detection_synthetic";
        case Task::DiffusionToy: return "diffusion_toy";
    }
    return "unknown";
}

namespace {

Task parse_task(const std::string& s) {
    if (s == "classification") return Task::Classification;
    if (s == "detection" || s == "detection_synthetic") return Task::DetectionSynthetic;
    if (s == "diffusion" || s == "diffusion_toy") return Task::DiffusionToy;
    throw ConfigError("unknown task '" + s + "'");
}

models::ModelFamily parse_family(const std::string& s) {
    if (s == "mlp") return models::ModelFamily::Mlp;
    if (s == "tiny_conv") return models::ModelFamily::TinyConv;
    if (s == "tiny_denoiser") return models::ModelFamily::TinyDenoiser;
    throw ConfigError("unknown model family '" + s + "'");
}

std::vector<int> to_int_vec(const std::vector<long long>& in) {
    std::vector<int> out;
    out.reserve(in.size());
    for (long long v : in) {
        out.push_back(static_cast<int>(v));
    }
    return out;
}

// student./teacher. model blocks share shape defaults derived from the task.
models::ModelSpec parse_model(const KeyValueFile& kv, const std::string& prefix, Task task,
                              const ExperimentConfig& cfg) {
    models::ModelSpec spec;
    std::string default_family = "mlp";
    if (task == Task::DiffusionToy) {
        default_family = "tiny_denoiser";
    } else if (cfg.data_kind == "cifar10") {
        default_family = "tiny_conv";
    }
    spec.family = parse_family(kv.get_string_or(prefix + ".family", default_family));
    if (kv.has(prefix + ".widths")) {
        spec.widths = to_int_vec(kv.get_int_list(prefix + ".widths"));
    }
    spec.time_embed_dim = static_cast<int>(kv.get_int_or(prefix + ".time_embed_dim", 16));

    switch (task) {
        case Task::Classification:
            if (cfg.data_kind == "cifar10") {
                spec.input_shape = {3, 32, 32};
                spec.output_dim = 10;
            } else {
                spec.input_shape = {cfg.gaussian.dim};
                spec.output_dim = cfg.gaussian.classes;
            }
            break;
        case Task::DiffusionToy:
            spec.input_shape = {2};
            spec.output_dim = 2;
            break;
        case Task::DetectionSynthetic:
            spec.input_shape = {1};
            spec.output_dim = 1;  // unused; detection is loss-level only
            break;
    }
    if (spec.family == models::ModelFamily::TinyConv && spec.input_shape.size() == 1) {
        throw ConfigError(prefix + ": tiny_conv needs image-shaped input (use data.kind=cifar10)");
    }
    return spec;
}

OptimizerSpec parse_optimizer(const KeyValueFile& kv) {
    OptimizerSpec spec;
    const std::string kind = kv.get_string_or("optimizer.kind", "sgd");
    const double lr = kv.get_double_or("optimizer.lr", 0.05);
    const double wd = kv.get_double_or("optimizer.weight_decay", 0.0);
    if (kind == "sgd") {
        spec.kind = opt::OptimizerKind::SgdMomentum;
        spec.sgd = {lr, kv.get_double_or("optimizer.momentum", 0.9), wd};
    } else if (kind == "adamw") {
        spec.kind = opt::OptimizerKind::AdamW;
        spec.adamw = {lr, kv.get_double_or("optimizer.beta1", 0.9),
                      kv.get_double_or("optimizer.beta2", 0.999),
                      kv.get_double_or("optimizer.eps", 1e-8), wd};
    } else if (kind == "muon") {
        spec.kind = opt::OptimizerKind::Muon;
        spec.muon.lr = lr;
        spec.muon.momentum = kv.get_double_or("optimizer.momentum", 0.95);
        spec.muon.ns_iterations = static_cast<int>(kv.get_int_or("optimizer.ns_iterations", 5));
        spec.muon.weight_decay = wd;
        spec.muon.fallback = {kv.get_double_or("optimizer.adam_lr", lr * 0.2),
                              kv.get_double_or("optimizer.beta1", 0.9),
                              kv.get_double_or("optimizer.beta2", 0.999),
                              kv.get_double_or("optimizer.eps", 1e-8), wd};
    } else {
        throw ConfigError("unknown optimizer.kind '" + kind + "'");
    }
    return spec;
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return parse(KeyValueFile::from_file(path));
}

ExperimentConfig ExperimentConfig::parse(const KeyValueFile& kv) {
    ExperimentConfig cfg;
    cfg.config_text = kv.raw_text();
    cfg.task = parse_task(kv.get_string("task"));
    cfg.out_dir = kv.get_string_or("out_dir", "runs/out");

    // dataset
    const char* default_kind = cfg.task == Task::Classification     ? "gaussian_mixture"
                               : cfg.task == Task::DiffusionToy     ? "swirl"
                                                                    : "synthetic_anchors";
    cfg.data_kind = kv.get_string_or("data.kind", default_kind);
    cfg.data_seed = kv.get_uint64_or("data.seed", 7);
    if (cfg.data_kind == "gaussian_mixture") {
        cfg.gaussian.classes = static_cast<int>(kv.get_int_or("data.classes", 10));
        cfg.gaussian.dim = static_cast<int>(kv.get_int_or("data.dim", 32));
        cfg.gaussian.train_samples = static_cast<int>(kv.get_int_or("data.train_samples", 10000));
        cfg.gaussian.val_samples = static_cast<int>(kv.get_int_or("data.val_samples", 2000));
        cfg.gaussian.separation = kv.get_double_or("data.separation", 1.0);
    } else if (cfg.data_kind == "swirl") {
        cfg.swirl.train_samples = static_cast<int>(kv.get_int_or("data.train_samples", 8192));
        cfg.swirl.val_samples = static_cast<int>(kv.get_int_or("data.val_samples", 1024));
        cfg.swirl.noise = kv.get_double_or("data.noise", 0.05);
    } else if (cfg.data_kind == "synthetic_anchors") {
        cfg.anchors.scenes = static_cast<int>(kv.get_int_or("data.scenes", 32));
        cfg.anchors.anchors = static_cast<int>(kv.get_int_or("data.anchors", 64));
        cfg.anchors.classes = static_cast<int>(kv.get_int_or("data.classes", 8));
        cfg.anchors.confident_fraction = kv.get_double_or("data.confident_fraction", 0.3);
        cfg.anchors.disagreement = kv.get_double_or("data.disagreement", 0.5);
    } else if (cfg.data_kind == "cifar10") {
        cfg.cifar_train_path = kv.get_string("data.train_path");
        cfg.cifar_val_path = kv.get_string("data.val_path");
    } else {
        throw ConfigError("unknown data.kind '" + cfg.data_kind + "'");
    }

    cfg.student = parse_model(kv, "student", cfg.task, cfg);

    // teacher source
    cfg.teacher.checkpoint_path = kv.get_string_or("teacher.checkpoint", "");
    cfg.teacher.cache_outputs = kv.get_bool_or("teacher.cache", false);
    if (cfg.teacher.checkpoint_path.empty() && cfg.task != Task::DetectionSynthetic) {
        cfg.teacher.train_fresh = true;
        cfg.teacher.spec = parse_model(kv, "teacher", cfg.task, cfg);
        cfg.teacher.spec.seed = kv.get_uint64_or("teacher.seed", 1);
        cfg.teacher.stop_at_metric =
            kv.get_double_or("teacher.stop_at", std::numeric_limits<double>::quiet_NaN());
        cfg.teacher.budget = kv.get_int_or("teacher.budget", 0);
        cfg.teacher.lr =
            kv.get_double_or("teacher.lr", std::numeric_limits<double>::quiet_NaN());
        cfg.teacher.stages = static_cast<int>(kv.get_int_or("teacher.stages", 3));
    }
    cfg.teacher.stage = static_cast<int>(kv.get_int_or("teacher.stage", -1));

    // training loop
    cfg.budget = kv.get_int_or("train.budget", cfg.task == Task::DiffusionToy ? 8000 : 40);
    cfg.eval_every = kv.get_int_or("train.eval_every", cfg.task == Task::DiffusionToy ? 500 : 1);
    cfg.batch_size = static_cast<int>(kv.get_int_or("train.batch_size", 64));
    cfg.step.label_smoothing = kv.get_double_or("train.label_smoothing", 0.0);
    cfg.diffusion_t_max = static_cast<int>(kv.get_int_or("diffusion.t_max", 100));

    // distillation
    auto& distill = cfg.step.distill;
    distill.gamma = kv.get_double_or("distill.gamma", 1.0);
    distill.schedule.lambda_max = kv.get_double_or("distill.lambda_max", 1.0);
    distill.schedule.warmup_end = kv.get_double_or("distill.warmup_end", 0.0);
    distill.schedule.hold_end = kv.get_double_or("distill.hold_end", 0.0);
    distill.schedule.decay_end = kv.get_double_or("distill.decay_end", 0.0);
    distill.temperature.t_start = kv.get_double_or("distill.t_start", 1.0);
    distill.temperature.t_end = kv.get_double_or("distill.t_end", 1.0);
    distill.temperature.decay_end = distill.schedule.decay_end;
    const std::string kl = kv.get_string_or("distill.kl", "forward");
    if (kl == "forward") {
        distill.kl_direction = KlDirection::Forward;
    } else if (kl == "reverse") {
        distill.kl_direction = KlDirection::Reverse;
    } else {
        throw ConfigError("distill.kl must be forward or reverse");
    }
    const std::string stop_k = kv.get_string_or("distill.stop_k", "2");
    if (stop_k == "none") {
        distill.gate_init.stop_k = kNeverStop;
    } else {
        try {
            distill.gate_init.stop_k = static_cast<int>(std::stoll(stop_k));
        } catch (const std::exception&) {
            throw ConfigError("distill.stop_k must be a positive integer or 'none'");
        }
    }
    distill.gate_init.direction = cfg.task == Task::DiffusionToy
                                      ? MetricDirection::LowerIsBetter
                                      : MetricDirection::HigherIsBetter;
    cfg.step.gen_mask_ratio = kv.get_double_or("distill.mask_ratio", 0.5);
    const std::string side = kv.get_string_or("distill.mask_side", "early");
    if (side == "early") {
        cfg.step.gen_mask_side = losses::TimestepMaskSide::Early;
    } else if (side == "late") {
        cfg.step.gen_mask_side = losses::TimestepMaskSide::Late;
    } else {
        throw ConfigError("distill.mask_side must be early or late");
    }

    // crossing rule
    const std::string tau = kv.get_string_or("crossing.tau", "auto");
    cfg.tau_is_teacher_metric = tau == "auto";
    if (!cfg.tau_is_teacher_metric) {
        try {
            cfg.crossing.tau = std::stod(tau);
        } catch (const std::exception&) {
            throw ConfigError("crossing.tau must be 'auto' or a number");
        }
    }
    cfg.crossing.consecutive_hits = static_cast<int>(
        kv.get_int_or("crossing.hits", cfg.task == Task::DiffusionToy ? 2 : 1));

    // seeds
    if (kv.has("seeds")) {
        for (long long s : kv.get_int_list("seeds")) {
            if (s < 0) {
                throw ConfigError("seeds must be nonnegative");
            }
            cfg.seeds.push_back(static_cast<std::uint64_t>(s));
        }
    } else {
        cfg.seeds = {1};
    }

    cfg.optimizer = parse_optimizer(kv);

    if (kv.has("sweep.teacher_targets")) {
        cfg.sweep_teacher_targets = kv.get_double_list("sweep.teacher_targets");
    }

    kv.require_all_consumed();
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (budget <= 0) {
        throw ConfigError("train.budget must be positive");
    }
    if (eval_every <= 0 || eval_every > budget) {
        throw ConfigError("train.eval_every must be in [1, train.budget]");
    }
    if (batch_size <= 0) {
        throw ConfigError("train.batch_size must be positive");
    }
    if (seeds.empty()) {
        throw ConfigError("at least one seed required");
    }
    if (crossing.consecutive_hits < 1) {
        throw ConfigError("crossing.hits must be >= 1");
    }
    if (task != Task::DetectionSynthetic) {
        try {
            step.distill.validate();
            student.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (!teacher.checkpoint_path.empty()) {
            if (!std::filesystem::exists(teacher.checkpoint_path)) {
                throw ConfigError("teacher.checkpoint does not exist: " + teacher.checkpoint_path);
            }
        } else if (teacher.train_fresh) {
            if (teacher.budget <= 0) {
                throw ConfigError("teacher.budget must be positive when training the teacher");
            }
            if (teacher.stages < 1) {
                throw ConfigError("teacher.stages must be >= 1");
            }
            if (teacher.stage >= teacher.stages) {
                throw ConfigError("teacher.stage out of range");
            }
        }
    }
    if (data_kind == "cifar10") {
        if (!std::filesystem::exists(cifar_train_path) ||
            !std::filesystem::exists(cifar_val_path)) {
            throw ConfigError("CIFAR-10 data path does not exist");
        }
    }
    if (task == Task::DiffusionToy && diffusion_t_max < 2) {
        throw ConfigError("diffusion.t_max must be >= 2");
    }
    const bool kind_ok =
        (task == Task::Classification && (data_kind == "gaussian_mixture" || data_kind == "cifar10")) ||
        (task == Task::DiffusionToy && data_kind == "swirl") ||
        (task == Task::DetectionSynthetic && data_kind == "synthetic_anchors");
    if (!kind_ok) {
        throw ConfigError("data.kind '" + data_kind + "' does not fit task '" +
                          std::string(task_name(task)) + "'");
    }
}

}  // namespace w2s::config
