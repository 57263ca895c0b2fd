#include "w2s/datasets.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "w2s/errors.hpp"
#include "w2s/rng.hpp"

namespace w2s::data {

namespace {

std::uint64_t hash_matrix(const models::MatX<float>& m, std::uint64_t h) {
    return fnv1a(m.data(), sizeof(float) * static_cast<std::size_t>(m.size()), h);
}

std::uint64_t hash_labels(const Eigen::VectorXi& v, std::uint64_t h) {
    return fnv1a(v.data(), sizeof(int) * static_cast<std::size_t>(v.size()), h);
}

}  // namespace

ClassificationDataset make_gaussian_mixture(const GaussianMixtureParams& params,
                                            std::uint64_t seed) {
    if (params.classes < 2 || params.dim < 1 || params.train_samples < 1 ||
        params.val_samples < 1 || params.separation <= 0.0) {
        throw ConfigError("gaussian_mixture: invalid parameters");
    }
    auto rng = make_rng(seed, "gaussian-mixture");
    std::normal_distribution<double> gauss(0.0, 1.0);

    models::MatX<float> means(params.classes, params.dim);
    for (int k = 0; k < params.classes; ++k) {
        for (int d = 0; d < params.dim; ++d) {
            means(k, d) = static_cast<float>(params.separation * gauss(rng));
        }
    }

    std::uniform_int_distribution<int> label(0, params.classes - 1);
    auto fill_split = [&](int n, models::MatX<float>& x, Eigen::VectorXi& y) {
        x.resize(n, params.dim);
        y.resize(n);
        for (int i = 0; i < n; ++i) {
            y(i) = label(rng);
            for (int d = 0; d < params.dim; ++d) {
                x(i, d) = means(y(i), d) + static_cast<float>(gauss(rng));
            }
        }
    };

    ClassificationDataset ds;
    ds.classes = params.classes;
    fill_split(params.train_samples, ds.train_x, ds.train_y);
    fill_split(params.val_samples, ds.val_x, ds.val_y);
    std::uint64_t h = hash_matrix(ds.train_x, 0xcbf29ce484222325ULL);
    h = hash_labels(ds.train_y, h);
    h = hash_matrix(ds.val_x, h);
    ds.fingerprint = hash_labels(ds.val_y, h);
    return ds;
}

DiffusionDataset make_swirl(const SwirlParams& params, std::uint64_t seed) {
    if (params.train_samples < 1 || params.val_samples < 1 || params.noise < 0.0) {
        throw ConfigError("swirl: invalid parameters");
    }
    auto rng = make_rng(seed, "swirl");
    std::uniform_real_distribution<double> angle(0.0, 4.0 * M_PI);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto fill_split = [&](int n, models::MatX<float>& x) {
        x.resize(n, 2);
        for (int i = 0; i < n; ++i) {
            const double theta = angle(rng);
            const double radius = 0.25 + 0.75 * theta / (4.0 * M_PI);
            x(i, 0) = static_cast<float>(radius * std::cos(theta) + params.noise * gauss(rng));
            x(i, 1) = static_cast<float>(radius * std::sin(theta) + params.noise * gauss(rng));
        }
    };

    DiffusionDataset ds;
    fill_split(params.train_samples, ds.train_x);
    fill_split(params.val_samples, ds.val_x);
    ds.fingerprint = hash_matrix(ds.val_x, hash_matrix(ds.train_x, 0xcbf29ce484222325ULL));
    return ds;
}

AnchorDataset make_synthetic_anchors(const AnchorParams& params, std::uint64_t seed) {
    if (params.scenes < 1 || params.anchors < 1 || params.classes < 2 ||
        params.confident_fraction < 0.0 || params.confident_fraction > 1.0 ||
        params.disagreement < 0.0) {
        throw ConfigError("synthetic_anchors: invalid parameters");
    }
    auto rng = make_rng(seed, "anchors");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, params.classes - 1);

    AnchorDataset ds;
    ds.scenes.reserve(params.scenes);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int s = 0; s < params.scenes; ++s) {
        AnchorScene scene;
        scene.teacher.cls_logits.resize(params.anchors, params.classes);
        scene.teacher.box_deltas.resize(params.anchors, 4);
        for (int a = 0; a < params.anchors; ++a) {
            // Mostly background anchors; a fraction carry a confident class.
            for (int c = 0; c < params.classes; ++c) {
                scene.teacher.cls_logits(a, c) = -4.0 + gauss(rng);
            }
            if (unit(rng) < params.confident_fraction) {
                scene.teacher.cls_logits(a, cls(rng)) = 3.0 + 0.5 * gauss(rng);
            }
            for (int j = 0; j < 4; ++j) {
                scene.teacher.box_deltas(a, j) = gauss(rng);
            }
        }
        scene.student.cls_logits = scene.teacher.cls_logits;
        scene.student.box_deltas = scene.teacher.box_deltas;
        for (int a = 0; a < params.anchors; ++a) {
            for (int c = 0; c < params.classes; ++c) {
                scene.student.cls_logits(a, c) += params.disagreement * gauss(rng);
            }
            for (int j = 0; j < 4; ++j) {
                scene.student.box_deltas(a, j) += params.disagreement * gauss(rng);
            }
        }
        h = fnv1a(scene.teacher.cls_logits.data(),
                  sizeof(double) * static_cast<std::size_t>(scene.teacher.cls_logits.size()), h);
        ds.scenes.push_back(std::move(scene));
    }
    ds.fingerprint = h;
    return ds;
}

namespace {
constexpr std::size_t kRecordBytes = 3073;
constexpr int kPixels = 3072;
}  // namespace

Cifar10Batch ingest_cifar10(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open CIFAR-10 file " + path.string());
    }
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (size == 0 || size % kRecordBytes != 0) {
        throw IoError("CIFAR-10 format error: size " + std::to_string(size) +
                      " is not a multiple of 3073");
    }
    const auto records = static_cast<Eigen::Index>(size / kRecordBytes);

    Cifar10Batch batch;
    batch.images.resize(records, kPixels);
    batch.labels.resize(records);
    std::vector<unsigned char> record(kRecordBytes);
    for (Eigen::Index r = 0; r < records; ++r) {
        in.read(reinterpret_cast<char*>(record.data()), kRecordBytes);
        if (!in) {
            throw IoError("CIFAR-10 read failed at record " + std::to_string(r));
        }
        if (record[0] > 9) {
            throw IoError("CIFAR-10 corrupt record " + std::to_string(r) + ": label byte " +
                          std::to_string(record[0]));
        }
        batch.labels(r) = record[0];
        for (int p = 0; p < kPixels; ++p) {
            batch.images(r, p) = static_cast<float>(record[p + 1]) / 255.0f;
        }
    }
    return batch;
}

void write_cifar10(const std::filesystem::path& path, const Cifar10Batch& batch) {
    if (batch.images.cols() != kPixels || batch.images.rows() != batch.labels.size()) {
        throw IoError("write_cifar10: batch must be rows x 3072 with matching labels");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write CIFAR-10 file " + path.string());
    }
    std::vector<unsigned char> record(kRecordBytes);
    for (Eigen::Index r = 0; r < batch.images.rows(); ++r) {
        if (batch.labels(r) < 0 || batch.labels(r) > 9) {
            throw IoError("write_cifar10: label out of range");
        }
        record[0] = static_cast<unsigned char>(batch.labels(r));
        for (int p = 0; p < kPixels; ++p) {
            const float v = std::clamp(batch.images(r, p), 0.0f, 1.0f);
            record[p + 1] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }
        out.write(reinterpret_cast<const char*>(record.data()), kRecordBytes);
    }
    if (!out) {
        throw IoError("write failed for CIFAR-10 file " + path.string());
    }
}

ClassificationDataset cifar10_dataset(const std::filesystem::path& train_path,
                                      const std::filesystem::path& val_path) {
    auto train = ingest_cifar10(train_path);
    auto val = ingest_cifar10(val_path);
    ClassificationDataset ds;
    ds.classes = 10;
    ds.train_x = std::move(train.images);
    ds.train_y = std::move(train.labels);
    ds.val_x = std::move(val.images);
    ds.val_y = std::move(val.labels);
    std::uint64_t h = hash_matrix(ds.train_x, 0xcbf29ce484222325ULL);
    h = hash_labels(ds.train_y, h);
    h = hash_matrix(ds.val_x, h);
    ds.fingerprint = hash_labels(ds.val_y, h);
    return ds;
}

}  // namespace w2s::data
