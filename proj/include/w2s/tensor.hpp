#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "w2s/rng.hpp"

namespace w2s::models {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class ParamKind { Matrix2D, Vector1D };

/// One named parameter tensor. Vector1D entries are stored as n x 1.
template <typename T>
struct NamedTensor {
    std::string name;
    ParamKind kind = ParamKind::Matrix2D;
    MatX<T> values;
};

/// Ordered, name-addressable list of parameter tensors. Shapes are fixed at
/// construction; gradients reuse the same container with matching shapes.
template <typename T>
class ModelParams {
public:
    ModelParams() = default;

    explicit ModelParams(std::vector<NamedTensor<T>> entries) : entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            for (std::size_t j = i + 1; j < entries_.size(); ++j) {
                if (entries_[i].name == entries_[j].name) {
                    throw std::invalid_argument("ModelParams: duplicate name " + entries_[i].name);
                }
            }
        }
    }

    std::size_t size() const { return entries_.size(); }
    const NamedTensor<T>& operator[](std::size_t i) const { return entries_[i]; }
    NamedTensor<T>& operator[](std::size_t i) { return entries_[i]; }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    const NamedTensor<T>& at(std::string_view name) const {
        for (const auto& e : entries_) {
            if (e.name == name) {
                return e;
            }
        }
        throw std::out_of_range("ModelParams: no entry named " + std::string(name));
    }

    bool all_finite() const {
        for (const auto& e : entries_) {
            if (!e.values.allFinite()) {
                return false;
            }
        }
        return true;
    }

    /// Same names/kinds/shapes, zero values. Gradient accumulator shape.
    ModelParams zeros_like() const {
        std::vector<NamedTensor<T>> z;
        z.reserve(entries_.size());
        for (const auto& e : entries_) {
            z.push_back({e.name, e.kind, MatX<T>::Zero(e.values.rows(), e.values.cols())});
        }
        return ModelParams(std::move(z));
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& e : entries_) {
            s += e.values.template cast<double>().squaredNorm();
        }
        return s;
    }

    /// Fingerprint over names, shapes and raw value bytes.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& e : entries_) {
            h = fnv1a(e.name, h);
            const std::int64_t dims[2] = {e.values.rows(), e.values.cols()};
            h = fnv1a(dims, sizeof(dims), h);
            h = fnv1a(e.values.data(), sizeof(T) * static_cast<std::size_t>(e.values.size()), h);
        }
        return h;
    }

    template <typename U>
    ModelParams<U> cast() const {
        std::vector<NamedTensor<U>> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) {
            out.push_back({e.name, e.kind, e.values.template cast<U>()});
        }
        return ModelParams<U>(std::move(out));
    }

private:
    std::vector<NamedTensor<T>> entries_;
};

/// dest += scale * src, entrywise over matching entries.
template <typename T>
void axpy_into(ModelParams<T>& dest, T scale, const ModelParams<T>& src) {
    if (dest.size() != src.size()) {
        throw std::invalid_argument("axpy_into: entry count mismatch");
    }
    for (std::size_t i = 0; i < dest.size(); ++i) {
        dest[i].values += scale * src[i].values;
    }
}

template <typename T>
double grad_norm(const ModelParams<T>& grads) {
    return std::sqrt(grads.squared_norm());
}

}  // namespace w2s::models
