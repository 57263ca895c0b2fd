#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2s/tensor.hpp"

namespace w2s::models {

enum class ModelFamily { Mlp, TinyConv, TinyDenoiser };

/// Deterministic model description: (spec, spec.seed) fully determines the
/// initial parameters.
///
/// Mlp          widths = hidden layer sizes, input_shape = {dim}
/// TinyConv     widths = 3x3 conv channel counts, input_shape = {C,H,W};
///              each conv is stride 1 / pad 1 + ReLU, then global average
///              pooling and a dense head
/// TinyDenoiser Mlp over [x, sinusoidal(t)], input_shape = {data_dim},
///              output_dim = data_dim
struct ModelSpec {
    ModelFamily family = ModelFamily::Mlp;
    std::vector<int> widths;
    std::vector<int> input_shape;
    int output_dim = 0;
    int time_embed_dim = 16;
    std::uint64_t seed = 0;

    int input_dim() const {
        return std::accumulate(input_shape.begin(), input_shape.end(), 1,
                               [](int a, int b) { return a * b; });
    }

    void validate() const {
        if (output_dim <= 0) {
            throw std::invalid_argument("ModelSpec: output_dim must be positive");
        }
        if (input_shape.empty()) {
            throw std::invalid_argument("ModelSpec: input_shape required");
        }
        for (int d : input_shape) {
            if (d <= 0) {
                throw std::invalid_argument("ModelSpec: input dims must be positive");
            }
        }
        for (int w : widths) {
            if (w <= 0) {
                throw std::invalid_argument("ModelSpec: widths must be positive");
            }
        }
        if (family == ModelFamily::TinyConv) {
            if (input_shape.size() != 3 || widths.empty()) {
                throw std::invalid_argument("ModelSpec: TinyConv needs {C,H,W} input and conv widths");
            }
        } else if (input_shape.size() != 1) {
            throw std::invalid_argument("ModelSpec: dense families take a flat input dim");
        }
        if (family == ModelFamily::TinyDenoiser) {
            if (output_dim != input_shape[0]) {
                throw std::invalid_argument("ModelSpec: denoiser output_dim must equal data dim");
            }
            if (time_embed_dim <= 0 || time_embed_dim % 2 != 0) {
                throw std::invalid_argument("ModelSpec: time_embed_dim must be positive and even");
            }
        }
    }
};

/// Activations captured by a forward pass, consumed by backward.
template <typename T>
struct ForwardTrace {
    MatX<T> input;              // assembled network input (B x in)
    std::vector<MatX<T>> acts;  // post-ReLU activation per hidden/conv layer
    MatX<T> pooled;             // TinyConv only: GAP output
    MatX<T> output;
};

namespace detail {

// Dense fan-in chain shared by Mlp and TinyDenoiser: input dim -> widths -> output.
inline std::vector<std::pair<int, int>> dense_layer_dims(const ModelSpec& spec, int in_dim) {
    std::vector<std::pair<int, int>> dims;
    int cur = in_dim;
    for (int w : spec.widths) {
        dims.emplace_back(w, cur);
        cur = w;
    }
    dims.emplace_back(spec.output_dim, cur);
    return dims;
}

inline int denoiser_input_dim(const ModelSpec& spec) {
    return spec.input_shape[0] + spec.time_embed_dim;
}

template <typename T>
MatX<T> uniform_fan_in(Eigen::Index rows, Eigen::Index cols, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatX<T> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            m(r, c) = static_cast<T>(dist(rng));
        }
    }
    return m;
}

/// Sinusoidal timestep features: [sin(t w_0), cos(t w_0), sin(t w_1), ...]
/// with geometrically spaced frequencies.
template <typename T>
MatX<T> time_embedding(const Eigen::VectorXi& timesteps, int embed_dim) {
    const int half = embed_dim / 2;
    MatX<T> emb(timesteps.size(), embed_dim);
    for (Eigen::Index b = 0; b < timesteps.size(); ++b) {
        const double t = static_cast<double>(timesteps(b));
        for (int j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(10000.0) * j / half);
            emb(b, 2 * j) = static_cast<T>(std::sin(t * freq));
            emb(b, 2 * j + 1) = static_cast<T>(std::cos(t * freq));
        }
    }
    return emb;
}

template <typename T>
using RowRef = Eigen::Ref<Eigen::Matrix<T, 1, Eigen::Dynamic>, 0,
                          Eigen::InnerStride<Eigen::Dynamic>>;
template <typename T>
using ConstRowRef = Eigen::Ref<const Eigen::Matrix<T, 1, Eigen::Dynamic>, 0,
                               Eigen::InnerStride<Eigen::Dynamic>>;

// im2col for 3x3 / stride 1 / pad 1: one sample (channel-major flat) to
// (H*W) x (C*9) patch matrix.
template <typename T>
void im2col_3x3(const ConstRowRef<T>& sample, int channels, int height,
                int width, MatX<T>& cols) {
    cols.setZero(height * width, channels * 9);
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const int pixel = y * width + x;
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= height) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = x + kx - 1;
                        if (sx < 0 || sx >= width) continue;
                        cols(pixel, c * 9 + ky * 3 + kx) = sample(c * height * width + sy * width + sx);
                    }
                }
            }
        }
    }
}

// Transpose of im2col: scatter-add patch gradients back onto the sample.
template <typename T>
void col2im_3x3(const MatX<T>& dcols, int channels, int height, int width,
                RowRef<T> dsample) {
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const int pixel = y * width + x;
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= height) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = x + kx - 1;
                        if (sx < 0 || sx >= width) continue;
                        dsample(c * height * width + sy * width + sx) +=
                            dcols(pixel, c * 9 + ky * 3 + kx);
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
ModelParams<T> init_params(const ModelSpec& spec) {
    spec.validate();
    std::vector<NamedTensor<T>> entries;
    auto add_layer = [&](const std::string& name, int out, int in, int fan_in, int layer_idx) {
        auto rng = std::mt19937_64{derive_seed(spec.seed, "init", static_cast<std::uint64_t>(layer_idx))};
        entries.push_back({name + ".weight", ParamKind::Matrix2D,
                           detail::uniform_fan_in<T>(out, in, fan_in, rng)});
        entries.push_back({name + ".bias", ParamKind::Vector1D,
                           detail::uniform_fan_in<T>(out, 1, fan_in, rng)});
    };

    int layer_idx = 0;
    if (spec.family == ModelFamily::TinyConv) {
        int in_ch = spec.input_shape[0];
        for (std::size_t i = 0; i < spec.widths.size(); ++i) {
            add_layer("conv" + std::to_string(i), spec.widths[i], in_ch * 9, in_ch * 9, layer_idx++);
            in_ch = spec.widths[i];
        }
        add_layer("head", spec.output_dim, in_ch, in_ch, layer_idx++);
    } else {
        const int in0 = spec.family == ModelFamily::TinyDenoiser ? detail::denoiser_input_dim(spec)
                                                                 : spec.input_shape[0];
        const auto dims = detail::dense_layer_dims(spec, in0);
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            add_layer("fc" + std::to_string(i), dims[i].first, dims[i].second, dims[i].second,
                      layer_idx++);
        }
        add_layer("head", dims.back().first, dims.back().second, dims.back().second, layer_idx++);
    }
    return ModelParams<T>(std::move(entries));
}

/// Forward pass. For TinyDenoiser pass the per-sample integer timesteps;
/// other families must leave timesteps null. Returns logits (classification
/// heads) or noise predictions (denoiser).
template <typename T>
const MatX<T>& forward_traced(const ModelParams<T>& params, const ModelSpec& spec,
                              const MatX<T>& x, const Eigen::VectorXi* timesteps,
                              ForwardTrace<T>& trace) {
    if ((spec.family == ModelFamily::TinyDenoiser) != (timesteps != nullptr)) {
        throw std::invalid_argument("forward: timesteps required exactly for TinyDenoiser");
    }
    if (x.cols() != spec.input_dim()) {
        throw std::invalid_argument("forward: input width does not match spec");
    }
    trace.acts.clear();

    if (spec.family == ModelFamily::TinyConv) {
        const int height = spec.input_shape[1];
        const int width = spec.input_shape[2];
        trace.input = x;
        MatX<T> cur = x;
        int in_ch = spec.input_shape[0];
        MatX<T> cols;
        for (std::size_t l = 0; l < spec.widths.size(); ++l) {
            const auto& w = params.at("conv" + std::to_string(l) + ".weight").values;
            const auto& b = params.at("conv" + std::to_string(l) + ".bias").values;
            const int out_ch = spec.widths[l];
            MatX<T> next(cur.rows(), out_ch * height * width);
            for (Eigen::Index s = 0; s < cur.rows(); ++s) {
                detail::im2col_3x3<T>(cur.row(s), in_ch, height, width, cols);
                MatX<T> conv = cols * w.transpose();  // (H*W) x out_ch
                for (int c = 0; c < out_ch; ++c) {
                    for (int p = 0; p < height * width; ++p) {
                        const T v = conv(p, c) + b(c, 0);
                        next(s, c * height * width + p) = v > T(0) ? v : T(0);
                    }
                }
            }
            trace.acts.push_back(next);
            cur = std::move(next);
            in_ch = out_ch;
        }
        // Global average pool over each channel plane.
        const int hw = height * width;
        trace.pooled.resize(cur.rows(), in_ch);
        for (Eigen::Index s = 0; s < cur.rows(); ++s) {
            for (int c = 0; c < in_ch; ++c) {
                trace.pooled(s, c) = cur.row(s).segment(c * hw, hw).sum() / static_cast<T>(hw);
            }
        }
        const auto& hw_mat = params.at("head.weight").values;
        const auto& hb = params.at("head.bias").values;
        trace.output = (trace.pooled * hw_mat.transpose()).rowwise() + hb.col(0).transpose();
        return trace.output;
    }

    // Dense families.
    if (spec.family == ModelFamily::TinyDenoiser) {
        if (timesteps->size() != x.rows()) {
            throw std::invalid_argument("forward: timestep count does not match batch");
        }
        trace.input.resize(x.rows(), detail::denoiser_input_dim(spec));
        trace.input << x, detail::time_embedding<T>(*timesteps, spec.time_embed_dim);
    } else {
        trace.input = x;
    }
    const MatX<T>* cur = &trace.input;
    for (std::size_t l = 0; l < spec.widths.size(); ++l) {
        const auto& w = params.at("fc" + std::to_string(l) + ".weight").values;
        const auto& b = params.at("fc" + std::to_string(l) + ".bias").values;
        MatX<T> z = ((*cur) * w.transpose()).rowwise() + b.col(0).transpose();
        trace.acts.push_back(z.cwiseMax(T(0)));
        cur = &trace.acts.back();
    }
    const auto& hw = params.at("head.weight").values;
    const auto& hb = params.at("head.bias").values;
    trace.output = ((*cur) * hw.transpose()).rowwise() + hb.col(0).transpose();
    return trace.output;
}

template <typename T>
MatX<T> forward(const ModelParams<T>& params, const ModelSpec& spec, const MatX<T>& x,
                const Eigen::VectorXi* timesteps = nullptr) {
    ForwardTrace<T> trace;
    forward_traced(params, spec, x, timesteps, trace);
    return std::move(trace.output);
}

/// Reverse-mode parameter gradients: d(sum(upstream .* output))/d(params).
template <typename T>
ModelParams<T> backward_from_trace(const ModelParams<T>& params, const ModelSpec& spec,
                                   const ForwardTrace<T>& trace, const MatX<T>& upstream) {
    if (upstream.rows() != trace.output.rows() || upstream.cols() != trace.output.cols()) {
        throw std::invalid_argument("backward: upstream shape does not match output");
    }
    ModelParams<T> grads = params.zeros_like();
    auto grad_of = [&grads, &params](const std::string& name) -> MatX<T>& {
        for (std::size_t i = 0; i < grads.size(); ++i) {
            if (params[i].name == name) {
                return grads[i].values;
            }
        }
        throw std::out_of_range("backward: unknown param " + name);
    };

    if (spec.family == ModelFamily::TinyConv) {
        const int height = spec.input_shape[1];
        const int width = spec.input_shape[2];
        const int hw = height * width;

        // Head and GAP.
        const auto& head_w = params.at("head.weight").values;
        grad_of("head.weight") = upstream.transpose() * trace.pooled;
        grad_of("head.bias") = upstream.colwise().sum().transpose();
        MatX<T> dpooled = upstream * head_w;  // B x channels

        const int last = static_cast<int>(spec.widths.size()) - 1;
        MatX<T> dcur(trace.acts[last].rows(), trace.acts[last].cols());
        for (Eigen::Index s = 0; s < dcur.rows(); ++s) {
            for (int c = 0; c < spec.widths[last]; ++c) {
                dcur.row(s).segment(c * hw, hw).setConstant(dpooled(s, c) / static_cast<T>(hw));
            }
        }

        MatX<T> cols;
        for (int l = last; l >= 0; --l) {
            const auto& act = trace.acts[l];
            const MatX<T>& below = l == 0 ? trace.input : trace.acts[l - 1];
            const int in_ch = l == 0 ? spec.input_shape[0] : spec.widths[l - 1];
            const int out_ch = spec.widths[l];
            const auto& w = params.at("conv" + std::to_string(l) + ".weight").values;
            auto& dw = grad_of("conv" + std::to_string(l) + ".weight");
            auto& db = grad_of("conv" + std::to_string(l) + ".bias");

            dcur = dcur.cwiseProduct((act.array() > T(0)).template cast<T>().matrix());
            MatX<T> dbelow = MatX<T>::Zero(below.rows(), below.cols());
            MatX<T> dout(hw, out_ch);
            for (Eigen::Index s = 0; s < below.rows(); ++s) {
                for (int c = 0; c < out_ch; ++c) {
                    for (int p = 0; p < hw; ++p) {
                        dout(p, c) = dcur(s, c * hw + p);
                    }
                }
                detail::im2col_3x3<T>(below.row(s), in_ch, height, width, cols);
                dw.noalias() += dout.transpose() * cols;
                db += dout.colwise().sum().transpose();
                MatX<T> dcols = dout * w;
                detail::col2im_3x3<T>(dcols, in_ch, height, width, dbelow.row(s));
            }
            dcur = std::move(dbelow);
        }
        return grads;
    }

    // Dense families.
    MatX<T> dcur = upstream;
    const MatX<T>& top_act = trace.acts.empty() ? trace.input : trace.acts.back();
    grad_of("head.weight") = dcur.transpose() * top_act;
    grad_of("head.bias") = dcur.colwise().sum().transpose();
    dcur = dcur * params.at("head.weight").values;

    for (int l = static_cast<int>(spec.widths.size()) - 1; l >= 0; --l) {
        dcur = dcur.cwiseProduct((trace.acts[l].array() > T(0)).template cast<T>().matrix());
        const MatX<T>& below = l == 0 ? trace.input : trace.acts[l - 1];
        grad_of("fc" + std::to_string(l) + ".weight") = dcur.transpose() * below;
        grad_of("fc" + std::to_string(l) + ".bias") = dcur.colwise().sum().transpose();
        if (l > 0) {
            dcur = dcur * params.at("fc" + std::to_string(l) + ".weight").values;
        }
    }
    return grads;
}

template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ModelSpec& spec, const MatX<T>& x,
                        const Eigen::VectorXi* timesteps, const MatX<T>& upstream) {
    ForwardTrace<T> trace;
    forward_traced(params, spec, x, timesteps, trace);
    return backward_from_trace(params, spec, trace, upstream);
}

/// Activations feeding the output head: last hidden layer for dense
/// families, the pooled channels for TinyConv, the input itself for a
/// purely linear model. The feature point used for similarity diagnostics.
template <typename T>
MatX<T> penultimate_features(const ModelParams<T>& params, const ModelSpec& spec,
                             const MatX<T>& x, const Eigen::VectorXi* timesteps = nullptr) {
    ForwardTrace<T> trace;
    forward_traced(params, spec, x, timesteps, trace);
    if (spec.family == ModelFamily::TinyConv) {
        return std::move(trace.pooled);
    }
    return trace.acts.empty() ? std::move(trace.input) : std::move(trace.acts.back());
}

/// Fully trained model whose parameters never change; reference_metric is the
/// validation metric it reached when trained.
template <typename T>
class FrozenTeacher {
public:
    FrozenTeacher(ModelSpec spec, ModelParams<T> params, double reference_metric)
        : spec_(std::move(spec)), params_(std::move(params)), reference_metric_(reference_metric) {}

    const ModelSpec& spec() const { return spec_; }
    const ModelParams<T>& params() const { return params_; }
    double reference_metric() const { return reference_metric_; }

    MatX<T> predict(const MatX<T>& x, const Eigen::VectorXi* timesteps = nullptr) const {
        return forward(params_, spec_, x, timesteps);
    }

private:
    ModelSpec spec_;
    ModelParams<T> params_;
    double reference_metric_;
};

}  // namespace w2s::models
