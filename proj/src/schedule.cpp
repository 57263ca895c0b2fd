#include "w2s/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace w2s {

void LambdaSchedule::validate() const {
    if (!(0.0 <= warmup_end && warmup_end <= hold_end && hold_end <= decay_end)) {
        throw std::invalid_argument("LambdaSchedule: need 0 <= warmup_end <= hold_end <= decay_end");
    }
    if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) {
        throw std::invalid_argument("LambdaSchedule: lambda_max must be finite and >= 0");
    }
}

void TemperatureSchedule::validate() const {
    if (!(t_start > 0.0) || !(t_end > 0.0)) {
        throw std::invalid_argument("TemperatureSchedule: temperatures must be > 0");
    }
    if (!(decay_end >= 0.0)) {
        throw std::invalid_argument("TemperatureSchedule: decay_end must be >= 0");
    }
}

double lambda_at(const LambdaSchedule& s, double u) {
    if (u < 0.0 || u >= s.decay_end) {
        return 0.0;
    }
    if (u < s.warmup_end) {
        return s.lambda_max * (u / s.warmup_end);
    }
    if (u < s.hold_end) {
        return s.lambda_max;
    }
    // hold_end <= u < decay_end implies a nonempty decay segment.
    return s.lambda_max * ((s.decay_end - u) / (s.decay_end - s.hold_end));
}

double temperature_at(const TemperatureSchedule& ts, double u) {
    if (ts.decay_end <= 0.0 || u >= ts.decay_end) {
        return ts.t_end;
    }
    if (u <= 0.0) {
        return ts.t_start;
    }
    return ts.t_start + (ts.t_end - ts.t_start) * (u / ts.decay_end);
}

}  // namespace w2s
