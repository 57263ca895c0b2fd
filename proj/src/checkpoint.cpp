#include "w2s/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "w2s/errors.hpp"

namespace w2s::ckpt {

using nlohmann::json;

namespace {
constexpr int kVersion = 1;
constexpr const char* kFormat = "w2s-checkpoint";
}  // namespace

std::string family_name(models::ModelFamily family) {
    switch (family) {
        case models::ModelFamily::Mlp: return "mlp";
        case models::ModelFamily::TinyConv: return "tiny_conv";
        case models::ModelFamily::TinyDenoiser: return "tiny_denoiser";
    }
    throw std::logic_error("family_name: unknown family");
}

models::ModelFamily family_from_name(const std::string& name) {
    if (name == "mlp") return models::ModelFamily::Mlp;
    if (name == "tiny_conv") return models::ModelFamily::TinyConv;
    if (name == "tiny_denoiser") return models::ModelFamily::TinyDenoiser;
    throw IoError("unknown model family '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["spec"] = {
        {"family", family_name(checkpoint.spec.family)},
        {"widths", checkpoint.spec.widths},
        {"input_shape", checkpoint.spec.input_shape},
        {"output_dim", checkpoint.spec.output_dim},
        {"time_embed_dim", checkpoint.spec.time_embed_dim},
        {"seed", checkpoint.spec.seed},
    };
    doc["reference_metric"] = checkpoint.reference_metric;
    json params = json::array();
    for (const auto& entry : checkpoint.params) {
        json tensor;
        tensor["name"] = entry.name;
        tensor["kind"] = entry.kind == models::ParamKind::Matrix2D ? "matrix" : "vector";
        tensor["rows"] = entry.values.rows();
        tensor["cols"] = entry.values.cols();
        std::vector<float> data(entry.values.data(), entry.values.data() + entry.values.size());
        tensor["data"] = data;  // column-major order
        params.push_back(std::move(tensor));
    }
    doc["params"] = std::move(params);

    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out << doc.dump();
    if (!out) {
        throw IoError("write failed for checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    try {
        if (doc.at("format") != kFormat || doc.at("version").get<int>() != kVersion) {
            throw IoError("unsupported checkpoint format in " + path.string());
        }
        Checkpoint checkpoint;
        const auto& spec = doc.at("spec");
        checkpoint.spec.family = family_from_name(spec.at("family").get<std::string>());
        checkpoint.spec.widths = spec.at("widths").get<std::vector<int>>();
        checkpoint.spec.input_shape = spec.at("input_shape").get<std::vector<int>>();
        checkpoint.spec.output_dim = spec.at("output_dim").get<int>();
        checkpoint.spec.time_embed_dim = spec.at("time_embed_dim").get<int>();
        checkpoint.spec.seed = spec.at("seed").get<std::uint64_t>();
        checkpoint.reference_metric = doc.at("reference_metric").get<double>();

        std::vector<models::NamedTensor<float>> entries;
        for (const auto& tensor : doc.at("params")) {
            models::NamedTensor<float> entry;
            entry.name = tensor.at("name").get<std::string>();
            entry.kind = tensor.at("kind").get<std::string>() == "matrix"
                             ? models::ParamKind::Matrix2D
                             : models::ParamKind::Vector1D;
            const auto rows = tensor.at("rows").get<Eigen::Index>();
            const auto cols = tensor.at("cols").get<Eigen::Index>();
            const auto data = tensor.at("data").get<std::vector<float>>();
            if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
                throw IoError("tensor size mismatch in " + path.string());
            }
            entry.values.resize(rows, cols);
            std::copy(data.begin(), data.end(), entry.values.data());
            entries.push_back(std::move(entry));
        }
        checkpoint.params = models::ModelParams<float>(std::move(entries));
        checkpoint.spec.validate();
        return checkpoint;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace w2s::ckpt
