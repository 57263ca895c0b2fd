#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <tuple>

#include "w2s/tensor.hpp"

namespace w2s::harness {

/// Keyed store of teacher outputs. A stream is addressed by (dataset
/// fingerprint, teacher parameter hash, batch ordering seed); entries within
/// a stream are addressed by the running batch counter. A hit returns the
/// stored matrix, which is bit-identical to the fresh forward that produced
/// it because outputs are stored verbatim.
class TeacherCache {
public:
    struct StreamKey {
        std::uint64_t dataset_fingerprint = 0;
        std::uint64_t teacher_hash = 0;
        std::uint64_t order_seed = 0;

        bool operator<(const StreamKey& o) const {
            return std::tie(dataset_fingerprint, teacher_hash, order_seed) <
                   std::tie(o.dataset_fingerprint, o.teacher_hash, o.order_seed);
        }
    };

    const models::MatX<float>& get_or_compute(
        const StreamKey& key, long long batch_counter,
        const std::function<models::MatX<float>()>& compute) {
        auto& stream = streams_[key];
        const auto it = stream.find(batch_counter);
        if (it != stream.end()) {
            ++hits_;
            return it->second;
        }
        ++computes_;
        return stream.emplace(batch_counter, compute()).first->second;
    }

    long long hits() const { return hits_; }
    long long computes() const { return computes_; }
    void clear() { streams_.clear(); hits_ = computes_ = 0; }

private:
    std::map<StreamKey, std::map<long long, models::MatX<float>>> streams_;
    long long hits_ = 0;
    long long computes_ = 0;
};

}  // namespace w2s::harness
