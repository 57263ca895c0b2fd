#pragma once

#include <limits>

#include "w2s/schedule.hpp"

namespace w2s {

enum class MetricDirection {
    HigherIsBetter,  // accuracy-style metrics
    LowerIsBetter,   // loss/FID-style metrics
};

enum class KlDirection { Forward, Reverse };

/// Control state of the stop-after-surpass rule. The gate starts active and is
/// switched off permanently once the student metric surpasses the frozen
/// reference for stop_k consecutive validations.
struct GateState {
    double m_ref = 0.0;
    int counter_c = 0;
    bool active_a = true;
    int stop_k = 2;
    MetricDirection direction = MetricDirection::HigherIsBetter;

    void validate() const;
};

/// Scaling and scheduling of the distillation term.
struct DistillConfig {
    double gamma = 1.0;
    LambdaSchedule schedule;
    TemperatureSchedule temperature;
    GateState gate_init;
    KlDirection kl_direction = KlDirection::Forward;

    void validate() const;
};

/// 1 if m surpasses m_ref under the given direction (equality counts),
/// 0 otherwise. Throws std::invalid_argument on non-finite inputs.
int surpass(double m, double m_ref, MetricDirection direction);

/// One validation event: counter' = surpass * (counter + 1); the gate goes
/// (and stays) inactive once counter' reaches stop_k.
GateState gate_update(const GateState& state, double m);

/// The distillation weight actually applied at index u: active ? lambda(u) : 0.
double effective_lambda(const DistillConfig& config, const GateState& state, double u);

/// l_base + gamma * lam * l_distill. Exactly l_base (bitwise) when
/// gamma * lam == 0. Throws on non-finite losses.
double compose_loss(double l_base, double l_distill, double gamma, double lam);

/// stop_k value that never fires ("no stop" ablation arm).
inline constexpr int kNeverStop = std::numeric_limits<int>::max();

}  // namespace w2s
