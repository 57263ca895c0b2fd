#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "w2s/tensor.hpp"

namespace w2s::opt {

using models::MatX;
using models::ModelParams;
using models::ParamKind;

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Orthogonalized-momentum updates for 2D parameters; 1D parameters fall back
/// to AdamW with the nested config.
struct MuonConfig {
    double lr = 0.02;
    double momentum = 0.95;
    int ns_iterations = 5;
    double weight_decay = 0.0;
    AdamWConfig fallback;
};

enum class OptimizerKind { SgdMomentum, AdamW, Muon };

/// Per-parameter buffers plus hyperparameters. Steps are pure transitions:
/// the same (state, params, grads) always produces the same outputs.
template <typename T>
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::SgdMomentum;
    SgdConfig sgd;
    AdamWConfig adamw;
    MuonConfig muon;
    long long step_count = 0;
    std::vector<MatX<T>> momentum;  // SGD velocity / Muon momentum buffer
    std::vector<MatX<T>> m1;        // AdamW first moment (also Muon 1D fallback)
    std::vector<MatX<T>> m2;        // AdamW second moment
};

namespace detail {

template <typename T>
std::vector<MatX<T>> zero_buffers(const ModelParams<T>& params) {
    std::vector<MatX<T>> bufs;
    bufs.reserve(params.size());
    for (const auto& e : params) {
        bufs.push_back(MatX<T>::Zero(e.values.rows(), e.values.cols()));
    }
    return bufs;
}

template <typename T>
void check_shapes(const OptimizerState<T>& state, const ModelParams<T>& params,
                  const ModelParams<T>& grads) {
    if (params.size() != grads.size() || state.momentum.size() != params.size()) {
        throw std::invalid_argument("optimizer step: entry count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].values.rows() != grads[i].values.rows() ||
            params[i].values.cols() != grads[i].values.cols()) {
            throw std::invalid_argument("optimizer step: shape mismatch at " + params[i].name);
        }
    }
}

// AdamW update of a single tensor, shared by adamw_step and the Muon fallback.
template <typename T>
void adamw_update(const AdamWConfig& cfg, long long step, MatX<T>& p, const MatX<T>& g,
                  MatX<T>& m1, MatX<T>& m2) {
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    m1 = b1 * m1 + (T(1) - b1) * g;
    m2 = b2 * m2 + (T(1) - b2) * g.cwiseProduct(g);
    const T corr1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
    const T corr2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
    const T lr = static_cast<T>(cfg.lr);
    const T eps = static_cast<T>(cfg.eps);
    MatX<T> m_hat = m1 / corr1;
    MatX<T> v_hat = m2 / corr2;
    p -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
    if (cfg.weight_decay != 0.0) {
        p -= lr * static_cast<T>(cfg.weight_decay) * p;
    }
}

}  // namespace detail

template <typename T>
OptimizerState<T> make_sgd(const SgdConfig& cfg, const ModelParams<T>& params) {
    OptimizerState<T> s;
    s.kind = OptimizerKind::SgdMomentum;
    s.sgd = cfg;
    s.momentum = detail::zero_buffers(params);
    return s;
}

template <typename T>
OptimizerState<T> make_adamw(const AdamWConfig& cfg, const ModelParams<T>& params) {
    OptimizerState<T> s;
    s.kind = OptimizerKind::AdamW;
    s.adamw = cfg;
    s.momentum = detail::zero_buffers(params);
    s.m1 = detail::zero_buffers(params);
    s.m2 = detail::zero_buffers(params);
    return s;
}

template <typename T>
OptimizerState<T> make_muon(const MuonConfig& cfg, const ModelParams<T>& params) {
    OptimizerState<T> s;
    s.kind = OptimizerKind::Muon;
    s.muon = cfg;
    s.momentum = detail::zero_buffers(params);
    s.m1 = detail::zero_buffers(params);
    s.m2 = detail::zero_buffers(params);
    return s;
}

/// Quintic Newton-Schulz iteration driving the singular values of a
/// Frobenius-normalized matrix toward 1 while keeping the singular vectors.
/// The caller normalizes; the zero matrix is a fixed point.
template <typename T>
MatX<T> newton_schulz(const MatX<T>& m, int iters) {
    if (iters < 1) {
        throw std::invalid_argument("newton_schulz: iters must be >= 1");
    }
    constexpr double a = 3.4445;
    constexpr double b = -4.7750;
    constexpr double c = 2.0315;

    const bool transpose = m.rows() > m.cols();
    MatX<T> x = transpose ? MatX<T>(m.transpose()) : m;
    for (int i = 0; i < iters; ++i) {
        MatX<T> gram = x * x.transpose();
        MatX<T> gx = gram * x;
        x = static_cast<T>(a) * x + static_cast<T>(b) * gx + static_cast<T>(c) * (gram * gx);
        if (!x.allFinite()) {
            throw std::runtime_error("newton_schulz: non-finite iterate (input not normalized?)");
        }
    }
    return transpose ? MatX<T>(x.transpose()) : x;
}

template <typename T>
std::pair<OptimizerState<T>, ModelParams<T>> sgd_step(OptimizerState<T> state,
                                                      ModelParams<T> params,
                                                      const ModelParams<T>& grads) {
    detail::check_shapes(state, params, grads);
    ++state.step_count;
    const T mu = static_cast<T>(state.sgd.momentum);
    const T lr = static_cast<T>(state.sgd.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.momentum[i] = mu * state.momentum[i] + grads[i].values;
        params[i].values -= lr * state.momentum[i];
        if (state.sgd.weight_decay != 0.0) {
            params[i].values -= lr * static_cast<T>(state.sgd.weight_decay) * params[i].values;
        }
    }
    return {std::move(state), std::move(params)};
}

template <typename T>
std::pair<OptimizerState<T>, ModelParams<T>> adamw_step(OptimizerState<T> state,
                                                        ModelParams<T> params,
                                                        const ModelParams<T>& grads) {
    detail::check_shapes(state, params, grads);
    ++state.step_count;
    for (std::size_t i = 0; i < params.size(); ++i) {
        detail::adamw_update(state.adamw, state.step_count, params[i].values, grads[i].values,
                             state.m1[i], state.m2[i]);
    }
    return {std::move(state), std::move(params)};
}

template <typename T>
std::pair<OptimizerState<T>, ModelParams<T>> muon_step(OptimizerState<T> state,
                                                       ModelParams<T> params,
                                                       const ModelParams<T>& grads) {
    detail::check_shapes(state, params, grads);
    ++state.step_count;
    const T mu = static_cast<T>(state.muon.momentum);
    const T lr = static_cast<T>(state.muon.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].kind != ParamKind::Matrix2D) {
            detail::adamw_update(state.muon.fallback, state.step_count, params[i].values,
                                 grads[i].values, state.m1[i], state.m2[i]);
            continue;
        }
        state.momentum[i] = mu * state.momentum[i] + grads[i].values;
        const double norm = state.momentum[i].template cast<double>().norm();
        if (norm == 0.0) {
            continue;  // nothing to orthogonalize, zero update
        }
        MatX<T> ortho = newton_schulz<T>(state.momentum[i] / static_cast<T>(norm),
                                         state.muon.ns_iterations);
        const double rows = static_cast<double>(params[i].values.rows());
        const double cols = static_cast<double>(params[i].values.cols());
        const T scale = static_cast<T>(std::sqrt(std::max(1.0, rows / cols)));
        params[i].values -= lr * scale * ortho;
        if (state.muon.weight_decay != 0.0) {
            params[i].values -= lr * static_cast<T>(state.muon.weight_decay) * params[i].values;
        }
    }
    return {std::move(state), std::move(params)};
}

/// Dispatch on state.kind; the trainer's single entry point.
template <typename T>
std::pair<OptimizerState<T>, ModelParams<T>> opt_step(OptimizerState<T> state,
                                                      ModelParams<T> params,
                                                      const ModelParams<T>& grads) {
    switch (state.kind) {
        case OptimizerKind::SgdMomentum: return sgd_step(std::move(state), std::move(params), grads);
        case OptimizerKind::AdamW: return adamw_step(std::move(state), std::move(params), grads);
        case OptimizerKind::Muon: return muon_step(std::move(state), std::move(params), grads);
    }
    throw std::logic_error("opt_step: unknown optimizer kind");
}

}  // namespace w2s::opt
