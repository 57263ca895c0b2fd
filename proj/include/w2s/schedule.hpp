#pragma once

namespace w2s {

/// Warmup-hold-decay profile for the distillation weight.
///
/// lambda(u) rises linearly from 0 to lambda_max on [0, warmup_end), holds at
/// lambda_max on [warmup_end, hold_end), decays linearly back to 0 on
/// [hold_end, decay_end) and is 0 afterwards. The training index u counts
/// epochs or steps depending on the task; segments may be empty.
struct LambdaSchedule {
    double warmup_end = 0.0;
    double hold_end = 0.0;
    double decay_end = 0.0;
    double lambda_max = 0.0;

    /// Throws std::invalid_argument if 0 <= warmup_end <= hold_end <= decay_end
    /// or lambda_max >= 0 is violated.
    void validate() const;
};

/// Linear temperature ramp from t_start at u=0 to t_end at u=decay_end,
/// clamped to t_end afterwards.
struct TemperatureSchedule {
    double t_start = 1.0;
    double t_end = 1.0;
    double decay_end = 0.0;

    void validate() const;
};

double lambda_at(const LambdaSchedule& schedule, double u);
double temperature_at(const TemperatureSchedule& ts, double u);

}  // namespace w2s
