#pragma once

#include <cmath>
#include <utility>

#include "w2s/errors.hpp"
#include "w2s/gate.hpp"
#include "w2s/losses.hpp"
#include "w2s/models.hpp"
#include "w2s/optimizers.hpp"

namespace w2s::train {

using models::MatX;
using models::ModelParams;
using models::ModelSpec;

template <typename T>
struct ClassificationBatch {
    MatX<T> inputs;
    Eigen::VectorXi labels;
};

template <typename T>
struct DiffusionBatch {
    MatX<T> x_t;                // noised samples
    Eigen::VectorXi timesteps;  // per-sample diffusion step
    int t_max = 1;
    MatX<T> eps_true;           // the noise the model should predict
};

struct TrainStepConfig {
    DistillConfig distill;
    double label_smoothing = 0.0;  // classification base loss
    double gen_mask_ratio = 0.5;   // diffusion distillation timestep mask
    losses::TimestepMaskSide gen_mask_side = losses::TimestepMaskSide::Early;
};

/// Per-step record: losses, effective weight and the two objective-term
/// gradient norms (supervised vs scheduled distillation).
struct StepLogRow {
    double u = 0.0;
    double loss_base = 0.0;
    double loss_distill = 0.0;
    double lambda_eff = 0.0;
    double grad_norm_base = 0.0;
    double grad_norm_distill = 0.0;
    int teacher_forwards = 0;
};

template <typename T>
struct StepResult {
    ModelParams<T> params;
    opt::OptimizerState<T> opt_state;
    StepLogRow log;
};

namespace detail {

template <typename T>
void require_live(const MatX<T>& outputs, const char* what) {
    if (!outputs.allFinite()) {
        throw DivergenceError(std::string("train_step: non-finite ") + what);
    }
}

// Shared tail: combine base/distill gradients, take one optimizer step,
// verify the result is still finite.
template <typename T>
StepResult<T> finish_step(ModelParams<T> params, opt::OptimizerState<T> opt_state,
                          ModelParams<T> grad_total, StepLogRow log) {
    auto [next_state, next_params] = opt::opt_step(std::move(opt_state), std::move(params), grad_total);
    if (!next_params.all_finite()) {
        throw DivergenceError("train_step: non-finite parameters after update");
    }
    return {std::move(next_params), std::move(next_state), log};
}

}  // namespace detail

/// One optimizer step on L_base + gamma * lambda_eff * L_distill for a
/// classification batch. The teacher is queried exactly once per batch while
/// the gate is active and never when it is inactive; a precomputed
/// cached_teacher_logits matrix substitutes for that forward bit-exactly.
template <typename T>
StepResult<T> train_step(ModelParams<T> params, opt::OptimizerState<T> opt_state,
                         const ClassificationBatch<T>& batch,
                         const models::FrozenTeacher<T>& teacher, const ModelSpec& student_spec,
                         const TrainStepConfig& config, const GateState& gate, double u,
                         const MatX<T>* cached_teacher_logits = nullptr) {
    models::ForwardTrace<T> trace;
    const MatX<T>& logits = models::forward_traced(params, student_spec, batch.inputs, nullptr, trace);
    detail::require_live(logits, "student logits");

    const auto base =
        losses::ce_loss(logits.template cast<double>(), {batch.labels, config.label_smoothing});
    ModelParams<T> grad_total = models::backward_from_trace(
        params, student_spec, trace, MatX<T>(base.grad.template cast<T>()));

    StepLogRow log;
    log.u = u;
    log.loss_base = base.loss;
    log.lambda_eff = effective_lambda(config.distill, gate, u);
    log.grad_norm_base = models::grad_norm(grad_total);

    if (gate.active_a) {
        MatX<T> teacher_logits;
        if (cached_teacher_logits != nullptr) {
            teacher_logits = *cached_teacher_logits;
        } else {
            teacher_logits = teacher.predict(batch.inputs);
            log.teacher_forwards = 1;
        }
        const double temp = temperature_at(config.distill.temperature, u);
        const auto kd = losses::kd_loss(logits.template cast<double>(),
                                        teacher_logits.template cast<double>(), temp,
                                        config.distill.kl_direction);
        log.loss_distill = kd.loss;
        const double scale = config.distill.gamma * log.lambda_eff;
        if (scale > 0.0) {
            ModelParams<T> grad_distill = models::backward_from_trace(
                params, student_spec, trace, MatX<T>((scale * kd.grad).template cast<T>()));
            log.grad_norm_distill = models::grad_norm(grad_distill);
            models::axpy_into(grad_total, T(1), grad_distill);
        }
    }
    try {
        compose_loss(log.loss_base, log.loss_distill, config.distill.gamma, log.lambda_eff);
    } catch (const std::invalid_argument& e) {
        throw DivergenceError(e.what());
    }
    return detail::finish_step(std::move(params), std::move(opt_state), std::move(grad_total), log);
}

/// Diffusion variant: denoising MSE base loss plus timestep-masked
/// prediction-alignment distillation.
template <typename T>
StepResult<T> train_step(ModelParams<T> params, opt::OptimizerState<T> opt_state,
                         const DiffusionBatch<T>& batch, const models::FrozenTeacher<T>& teacher,
                         const ModelSpec& student_spec, const TrainStepConfig& config,
                         const GateState& gate, double u,
                         const MatX<T>* cached_teacher_eps = nullptr) {
    models::ForwardTrace<T> trace;
    const MatX<T>& eps_pred =
        models::forward_traced(params, student_spec, batch.x_t, &batch.timesteps, trace);
    detail::require_live(eps_pred, "noise prediction");

    const auto base = losses::gen_base_loss_with_grad(eps_pred.template cast<double>(),
                                                      batch.eps_true.template cast<double>());
    ModelParams<T> grad_total = models::backward_from_trace(
        params, student_spec, trace, MatX<T>(base.grad.template cast<T>()));

    StepLogRow log;
    log.u = u;
    log.loss_base = base.loss;
    log.lambda_eff = effective_lambda(config.distill, gate, u);
    log.grad_norm_base = models::grad_norm(grad_total);

    if (gate.active_a) {
        MatX<T> teacher_eps;
        if (cached_teacher_eps != nullptr) {
            teacher_eps = *cached_teacher_eps;
        } else {
            teacher_eps = teacher.predict(batch.x_t, &batch.timesteps);
            log.teacher_forwards = 1;
        }
        losses::NoisePredictionBatch student_pred{eps_pred.template cast<double>(),
                                                  batch.timesteps, batch.t_max};
        losses::NoisePredictionBatch teacher_pred{teacher_eps.template cast<double>(),
                                                  batch.timesteps, batch.t_max};
        const auto kd = losses::gen_distill_loss_with_grad(student_pred, teacher_pred,
                                                           config.gen_mask_ratio,
                                                           config.gen_mask_side);
        log.loss_distill = kd.loss;
        const double scale = config.distill.gamma * log.lambda_eff;
        if (scale > 0.0) {
            ModelParams<T> grad_distill = models::backward_from_trace(
                params, student_spec, trace, MatX<T>((scale * kd.grad).template cast<T>()));
            log.grad_norm_distill = models::grad_norm(grad_distill);
            models::axpy_into(grad_total, T(1), grad_distill);
        }
    }
    try {
        compose_loss(log.loss_base, log.loss_distill, config.distill.gamma, log.lambda_eff);
    } catch (const std::invalid_argument& e) {
        throw DivergenceError(e.what());
    }
    return detail::finish_step(std::move(params), std::move(opt_state), std::move(grad_total), log);
}

}  // namespace w2s::train
