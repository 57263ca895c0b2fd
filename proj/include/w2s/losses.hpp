#pragma once

#include <Eigen/Core>

#include "w2s/gate.hpp"

namespace w2s::losses {

/// Classification targets: hard labels plus optional label smoothing.
/// The smoothed target row is (1-eps) on the true class and eps/K elsewhere-
/// including the true class, so rows always sum to 1.
struct TargetSpec {
    Eigen::VectorXi labels;
    double smoothing_eps = 0.0;
};

/// Per-anchor detection head outputs (classification logits + box deltas).
struct DetectionHeadBatch {
    Eigen::MatrixXd cls_logits;  // anchors x classes
    Eigen::MatrixXd box_deltas;  // anchors x 4
};

/// Noise predictions of a denoising model on noised samples.
struct NoisePredictionBatch {
    Eigen::MatrixXd eps;         // batch x data_dim
    Eigen::VectorXi timesteps;   // batch, each in [0, t_max)
    int t_max = 1;
};

enum class TimestepMaskSide { Early, Late };

struct LossWithGrad {
    double loss = 0.0;
    Eigen::MatrixXd grad;  // w.r.t. the student inputs, batch-mean convention
};

/// Mean cross-entropy with one-hot or label-smoothed targets; the gradient
/// w.r.t. the logits is (softmax - q) / batch.
LossWithGrad ce_loss(const Eigen::MatrixXd& student_logits, const TargetSpec& targets);

/// Temperature-scaled KL between softened posteriors, scaled by T^2.
/// Forward matches the teacher-leading direction KL(p_t^T || p_s^T); Reverse
/// swaps the arguments. Gradient is w.r.t. the raw student logits.
LossWithGrad kd_loss(const Eigen::MatrixXd& student_logits,
                     const Eigen::MatrixXd& teacher_logits,
                     double temperature,
                     KlDirection direction);

/// Detection-head distillation: T^2-scaled KL over anchors whose teacher
/// confidence (max per-class sigmoid) reaches score_threshold, plus
/// beta * smooth-L1 box alignment over the same anchors. Empty mask -> 0.
double det_distill_loss(const DetectionHeadBatch& student,
                        const DetectionHeadBatch& teacher,
                        double temperature,
                        double score_threshold,
                        double beta);

/// Squared distance between student and teacher noise predictions, averaged
/// over the samples kept by the timestep mask (Early keeps t < ratio*t_max).
/// No qualifying sample -> 0.
double gen_distill_loss(const NoisePredictionBatch& student,
                        const NoisePredictionBatch& teacher,
                        double mask_ratio,
                        TimestepMaskSide side = TimestepMaskSide::Early);

LossWithGrad gen_distill_loss_with_grad(const NoisePredictionBatch& student,
                                        const NoisePredictionBatch& teacher,
                                        double mask_ratio,
                                        TimestepMaskSide side = TimestepMaskSide::Early);

/// Plain elementwise mean squared error (the denoising objective).
double gen_base_loss(const Eigen::MatrixXd& predicted_eps, const Eigen::MatrixXd& true_eps);

LossWithGrad gen_base_loss_with_grad(const Eigen::MatrixXd& predicted_eps,
                                     const Eigen::MatrixXd& true_eps);

}  // namespace w2s::losses
