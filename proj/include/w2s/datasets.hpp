#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "w2s/losses.hpp"
#include "w2s/tensor.hpp"

namespace w2s::data {

/// Labeled point set with a train/val split. Deterministic for a given
/// (params, seed); fingerprint covers the generated content.
struct ClassificationDataset {
    models::MatX<float> train_x;
    Eigen::VectorXi train_y;
    models::MatX<float> val_x;
    Eigen::VectorXi val_y;
    int classes = 0;
    std::uint64_t fingerprint = 0;
};

struct DiffusionDataset {
    models::MatX<float> train_x;  // 2D points
    models::MatX<float> val_x;
    std::uint64_t fingerprint = 0;
};

/// Paired teacher/student detection-head outputs over a batch of scenes.
struct AnchorScene {
    losses::DetectionHeadBatch teacher;
    losses::DetectionHeadBatch student;
};

struct AnchorDataset {
    std::vector<AnchorScene> scenes;
    std::uint64_t fingerprint = 0;
};

struct GaussianMixtureParams {
    int classes = 10;
    int dim = 32;
    int train_samples = 10000;
    int val_samples = 2000;
    double separation = 1.0;  // scale of the class-mean cloud
};

struct SwirlParams {
    int train_samples = 8192;
    int val_samples = 1024;
    double noise = 0.05;
};

struct AnchorParams {
    int scenes = 32;
    int anchors = 64;
    int classes = 8;
    double confident_fraction = 0.3;  // anchors given a strong teacher logit
    double disagreement = 0.5;        // student = teacher + disagreement * noise
};

ClassificationDataset make_gaussian_mixture(const GaussianMixtureParams& params,
                                            std::uint64_t seed);
DiffusionDataset make_swirl(const SwirlParams& params, std::uint64_t seed);
AnchorDataset make_synthetic_anchors(const AnchorParams& params, std::uint64_t seed);

/// CIFAR-10 binary batch: records of 3073 bytes (label byte in [0,9], then
/// 3072 channel-major R,G,B 32x32 pixel bytes).
struct Cifar10Batch {
    models::MatX<float> images;  // rows x 3072, scaled to [0,1]
    Eigen::VectorXi labels;
};

/// Throws IoError on a size not divisible by 3073 ("format error") or a label
/// byte > 9 ("corrupt record").
Cifar10Batch ingest_cifar10(const std::filesystem::path& path);

/// Inverse of ingest_cifar10 for synthetic fixtures; values are requantized
/// to bytes, so ingest -> write round-trips a valid file exactly.
void write_cifar10(const std::filesystem::path& path, const Cifar10Batch& batch);

/// CIFAR-10 files as a classification dataset (train file + val file).
ClassificationDataset cifar10_dataset(const std::filesystem::path& train_path,
                                      const std::filesystem::path& val_path);

}  // namespace w2s::data
