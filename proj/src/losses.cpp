#include "w2s/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace w2s::losses {
namespace {

// Rowwise log-softmax with max-shift.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
    Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    Eigen::MatrixXd shifted = logits.colwise() - row_max;
    Eigen::VectorXd log_z = shifted.array().exp().rowwise().sum().log();
    return shifted.colwise() - log_z;
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": non-finite entries");
    }
}

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

double smooth_l1(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

}  // namespace

LossWithGrad ce_loss(const Eigen::MatrixXd& student_logits, const TargetSpec& targets) {
    const Eigen::Index batch = student_logits.rows();
    const Eigen::Index classes = student_logits.cols();
    if (batch == 0 || classes < 2) {
        throw std::invalid_argument("ce_loss: need batch >= 1 and num_classes >= 2");
    }
    if (targets.labels.size() != batch) {
        throw std::invalid_argument("ce_loss: label count does not match batch");
    }
    if (!(targets.smoothing_eps >= 0.0 && targets.smoothing_eps < 1.0)) {
        throw std::invalid_argument("ce_loss: smoothing_eps must be in [0,1)");
    }
    require_finite(student_logits, "ce_loss");

    const double eps = targets.smoothing_eps;
    const double off = eps / static_cast<double>(classes);
    const double on = 1.0 - eps + off;

    Eigen::MatrixXd log_p = log_softmax(student_logits);
    Eigen::MatrixXd probs = log_p.array().exp();

    double loss = 0.0;
    Eigen::MatrixXd grad = probs;
    for (Eigen::Index b = 0; b < batch; ++b) {
        const int y = targets.labels(b);
        if (y < 0 || y >= classes) {
            throw std::invalid_argument("ce_loss: label out of range");
        }
        loss -= (on - off) * log_p(b, y) + off * log_p.row(b).sum();
        grad.row(b).array() -= off;
        grad(b, y) -= on - off;
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    return {loss * inv_b, grad * inv_b};
}

LossWithGrad kd_loss(const Eigen::MatrixXd& student_logits,
                     const Eigen::MatrixXd& teacher_logits,
                     double temperature,
                     KlDirection direction) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("kd_loss: temperature must be > 0");
    }
    require_same_shape(student_logits, teacher_logits, "kd_loss");
    require_finite(student_logits, "kd_loss(student)");
    require_finite(teacher_logits, "kd_loss(teacher)");

    const double t = temperature;
    const double batch = static_cast<double>(student_logits.rows());
    Eigen::MatrixXd ls = log_softmax(student_logits / t);
    Eigen::MatrixXd lt = log_softmax(teacher_logits / t);
    Eigen::MatrixXd ps = ls.array().exp();
    Eigen::MatrixXd pt = lt.array().exp();

    LossWithGrad out;
    if (direction == KlDirection::Forward) {
        // KL(p_t || p_s): grad w.r.t. student logits is T (p_s - p_t) / B.
        out.loss = t * t / batch * (pt.array() * (lt - ls).array()).sum();
        out.grad = t / batch * (ps - pt);
    } else {
        // KL(p_s || p_t): grad is T p_s (log p_s - log p_t - rowKL) / B.
        Eigen::MatrixXd diff = ls - lt;
        Eigen::VectorXd row_kl = (ps.array() * diff.array()).rowwise().sum();
        out.loss = t * t / batch * row_kl.sum();
        out.grad = t / batch * (ps.array() * (diff.colwise() - row_kl).array()).matrix();
    }
    return out;
}

double det_distill_loss(const DetectionHeadBatch& student,
                        const DetectionHeadBatch& teacher,
                        double temperature,
                        double score_threshold,
                        double beta) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("det_distill_loss: temperature must be > 0");
    }
    if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
        throw std::invalid_argument("det_distill_loss: score_threshold must be in [0,1]");
    }
    if (!(beta >= 0.0)) {
        throw std::invalid_argument("det_distill_loss: beta must be >= 0");
    }
    require_same_shape(student.cls_logits, teacher.cls_logits, "det_distill_loss(cls)");
    require_same_shape(student.box_deltas, teacher.box_deltas, "det_distill_loss(box)");
    if (student.cls_logits.rows() != student.box_deltas.rows() || student.box_deltas.cols() != 4) {
        throw std::invalid_argument("det_distill_loss: anchors x 4 box layout expected");
    }
    require_finite(student.cls_logits, "det_distill_loss");
    require_finite(teacher.cls_logits, "det_distill_loss");
    require_finite(student.box_deltas, "det_distill_loss");
    require_finite(teacher.box_deltas, "det_distill_loss");

    const Eigen::Index anchors = teacher.cls_logits.rows();
    const double t = temperature;
    Eigen::MatrixXd ls = log_softmax(student.cls_logits / t);
    Eigen::MatrixXd lt = log_softmax(teacher.cls_logits / t);

    double cls_sum = 0.0;
    double box_sum = 0.0;
    Eigen::Index masked = 0;
    for (Eigen::Index a = 0; a < anchors; ++a) {
        // Multi-label head: teacher confidence is the max per-class sigmoid.
        const double conf = 1.0 / (1.0 + std::exp(-teacher.cls_logits.row(a).maxCoeff()));
        if (conf < score_threshold) {
            continue;
        }
        ++masked;
        cls_sum += (lt.row(a).array().exp() * (lt.row(a) - ls.row(a)).array()).sum();
        for (int j = 0; j < 4; ++j) {
            box_sum += smooth_l1(student.box_deltas(a, j) - teacher.box_deltas(a, j));
        }
    }
    if (masked == 0) {
        return 0.0;
    }
    const double inv_m = 1.0 / static_cast<double>(masked);
    return t * t * cls_sum * inv_m + beta * box_sum * inv_m;
}

namespace {

std::vector<Eigen::Index> timestep_mask(const NoisePredictionBatch& student,
                                        const NoisePredictionBatch& teacher,
                                        double mask_ratio,
                                        TimestepMaskSide side) {
    if (student.eps.rows() != teacher.eps.rows() || student.eps.cols() != teacher.eps.cols()) {
        throw std::invalid_argument("gen_distill_loss: shape mismatch");
    }
    if (student.timesteps.size() != student.eps.rows() || teacher.timesteps.size() != teacher.eps.rows()) {
        throw std::invalid_argument("gen_distill_loss: timestep count mismatch");
    }
    if (student.t_max != teacher.t_max || student.t_max <= 0) {
        throw std::invalid_argument("gen_distill_loss: t_max mismatch");
    }
    if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
        throw std::invalid_argument("gen_distill_loss: mask_ratio must be in [0,1]");
    }
    const double cut = mask_ratio * static_cast<double>(student.t_max);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index b = 0; b < student.eps.rows(); ++b) {
        const int ts = student.timesteps(b);
        if (ts != teacher.timesteps(b)) {
            throw std::invalid_argument("gen_distill_loss: mismatched timesteps");
        }
        if (ts < 0 || ts >= student.t_max) {
            throw std::invalid_argument("gen_distill_loss: timestep out of range");
        }
        const bool keep = side == TimestepMaskSide::Early
                              ? static_cast<double>(ts) < cut
                              : static_cast<double>(ts) >= static_cast<double>(student.t_max) - cut;
        if (keep) {
            kept.push_back(b);
        }
    }
    return kept;
}

}  // namespace

LossWithGrad gen_distill_loss_with_grad(const NoisePredictionBatch& student,
                                        const NoisePredictionBatch& teacher,
                                        double mask_ratio,
                                        TimestepMaskSide side) {
    require_finite(student.eps, "gen_distill_loss(student)");
    require_finite(teacher.eps, "gen_distill_loss(teacher)");
    const auto kept = timestep_mask(student, teacher, mask_ratio, side);

    LossWithGrad out;
    out.grad = Eigen::MatrixXd::Zero(student.eps.rows(), student.eps.cols());
    if (kept.empty()) {
        return out;
    }
    const double inv_m = 1.0 / static_cast<double>(kept.size());
    for (const Eigen::Index b : kept) {
        Eigen::RowVectorXd diff = student.eps.row(b) - teacher.eps.row(b);
        out.loss += diff.squaredNorm() * inv_m;
        out.grad.row(b) = 2.0 * inv_m * diff;
    }
    return out;
}

double gen_distill_loss(const NoisePredictionBatch& student,
                        const NoisePredictionBatch& teacher,
                        double mask_ratio,
                        TimestepMaskSide side) {
    return gen_distill_loss_with_grad(student, teacher, mask_ratio, side).loss;
}

LossWithGrad gen_base_loss_with_grad(const Eigen::MatrixXd& predicted_eps,
                                     const Eigen::MatrixXd& true_eps) {
    require_same_shape(predicted_eps, true_eps, "gen_base_loss");
    require_finite(predicted_eps, "gen_base_loss(predicted)");
    require_finite(true_eps, "gen_base_loss(true)");
    const double n = static_cast<double>(predicted_eps.size());
    Eigen::MatrixXd diff = predicted_eps - true_eps;
    return {diff.squaredNorm() / n, 2.0 / n * diff};
}

double gen_base_loss(const Eigen::MatrixXd& predicted_eps, const Eigen::MatrixXd& true_eps) {
    return gen_base_loss_with_grad(predicted_eps, true_eps).loss;
}

}  // namespace w2s::losses
