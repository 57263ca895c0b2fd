#pragma once

#include <filesystem>
#include <string>

#include "w2s/models.hpp"

namespace w2s::ckpt {

/// On-disk model snapshot: spec + float32 parameters + the validation metric
/// the model had when saved. JSON, versioned, stable across releases.
struct Checkpoint {
    models::ModelSpec spec;
    models::ModelParams<float> params;
    double reference_metric = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string family_name(models::ModelFamily family);
models::ModelFamily family_from_name(const std::string& name);

}  // namespace w2s::ckpt
