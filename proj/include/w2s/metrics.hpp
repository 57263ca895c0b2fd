#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "w2s/gate.hpp"

namespace w2s::metrics {

/// Ordered validation history (index, value) plus the metric direction.
struct MetricSeries {
    struct Point {
        long long index = 0;
        double value = 0.0;
    };
    std::vector<Point> points;
    MetricDirection direction = MetricDirection::HigherIsBetter;

    void validate() const;  // strictly increasing indices, finite values
};

/// Target-crossing rule: threshold tau plus the number of consecutive
/// evaluations that must hit it (>1 rejects single dips on noisy curves).
struct CrossingRule {
    double tau = 0.0;
    int consecutive_hits = 1;
};

enum class TeacherRegime { TooWeak, SuitablyWeaker, TooStrong };

struct TeacherBandReport {
    double teacher_metric = 0.0;
    double baseline_student_metric = 0.0;
    double relative_gap = 0.0;  // percent, teacher minus student relative to student
    TeacherRegime regime = TeacherRegime::SuitablyWeaker;
};

struct BandEdges {
    double low = -15.0;   // gap below this: too weak
    double high = 0.0;    // gap at or above this: too strong
};

/// First index whose window of consecutive_hits evaluations all satisfy the
/// crossing predicate (>= tau for HigherIsBetter, <= tau for LowerIsBetter).
/// Returns the index at the window start; nullopt if no window qualifies.
/// Throws on an empty series.
std::optional<long long> first_at_tau(const MetricSeries& series, const CrossingRule& rule);

/// baseline first@tau divided by ours first@tau. Throws on nonpositive input.
double speedup_ratio(long long base_index, long long ours_index);

/// Linear centered-kernel-alignment similarity between two feature matrices
/// with matching row counts: ||Xc' Yc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F)
/// on column-centered inputs. Throws if either side has zero variance.
double linear_cka(const Eigen::MatrixXd& features_x, const Eigen::MatrixXd& features_y);

/// Mean Shannon entropy (nats) over rows of a probability matrix; 0 ln 0 = 0.
double mean_entropy(const Eigen::MatrixXd& probs);

/// Mean rowwise KL(p || q). Throws where q is zero but p is positive.
double mean_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q);

/// Classifies the teacher-vs-baseline-student gap into the operating band.
/// relative_gap = 100 * (teacher - student) / student; SuitablyWeaker iff the
/// gap lies in [edges.low, edges.high).
TeacherBandReport classify_teacher_band(double teacher_metric,
                                        double baseline_student_metric,
                                        const BandEdges& edges = {});

const char* regime_name(TeacherRegime regime);

}  // namespace w2s::metrics
