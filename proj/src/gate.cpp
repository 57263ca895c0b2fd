#include "w2s/gate.hpp"

#include <cmath>
#include <stdexcept>

namespace w2s {

void GateState::validate() const {
    if (!std::isfinite(m_ref)) {
        throw std::invalid_argument("GateState: m_ref must be finite");
    }
    if (counter_c < 0) {
        throw std::invalid_argument("GateState: counter must be >= 0");
    }
    if (stop_k < 1) {
        throw std::invalid_argument("GateState: stop_k must be >= 1");
    }
}

void DistillConfig::validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("DistillConfig: gamma must be finite and >= 0");
    }
    schedule.validate();
    temperature.validate();
    gate_init.validate();
}

int surpass(double m, double m_ref, MetricDirection direction) {
    if (!std::isfinite(m) || !std::isfinite(m_ref)) {
        throw std::invalid_argument("surpass: non-finite validation metric");
    }
    if (direction == MetricDirection::HigherIsBetter) {
        return m >= m_ref ? 1 : 0;
    }
    return m <= m_ref ? 1 : 0;
}

GateState gate_update(const GateState& state, double m) {
    GateState next = state;
    next.counter_c = surpass(m, state.m_ref, state.direction) * (state.counter_c + 1);
    if (next.counter_c >= next.stop_k) {
        next.active_a = false;
    }
    // The gate is monotone: once off it never reactivates.
    next.active_a = next.active_a && state.active_a;
    return next;
}

double effective_lambda(const DistillConfig& config, const GateState& state, double u) {
    return state.active_a ? lambda_at(config.schedule, u) : 0.0;
}

double compose_loss(double l_base, double l_distill, double gamma, double lam) {
    if (!std::isfinite(l_base) || !std::isfinite(l_distill)) {
        throw std::invalid_argument("compose_loss: non-finite loss (training divergence)");
    }
    const double scale = gamma * lam;
    if (scale == 0.0) {
        return l_base;
    }
    const double total = l_base + scale * l_distill;
    if (!std::isfinite(total)) {
        throw std::invalid_argument("compose_loss: non-finite composed loss");
    }
    return total;
}

}  // namespace w2s
