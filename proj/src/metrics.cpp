#include "w2s/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace w2s::metrics {

void MetricSeries::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isfinite(points[i].value)) {
            throw std::invalid_argument("MetricSeries: non-finite value");
        }
        if (i > 0 && points[i].index <= points[i - 1].index) {
            throw std::invalid_argument("MetricSeries: indices must be strictly increasing");
        }
    }
}

std::optional<long long> first_at_tau(const MetricSeries& series, const CrossingRule& rule) {
    if (series.points.empty()) {
        throw std::invalid_argument("first_at_tau: empty series");
    }
    if (rule.consecutive_hits < 1) {
        throw std::invalid_argument("first_at_tau: consecutive_hits must be >= 1");
    }
    series.validate();

    const auto hits = [&](double v) {
        return series.direction == MetricDirection::HigherIsBetter ? v >= rule.tau : v <= rule.tau;
    };
    const std::size_t n = series.points.size();
    const std::size_t window = static_cast<std::size_t>(rule.consecutive_hits);
    if (n < window) {
        return std::nullopt;
    }
    std::size_t run = 0;
    for (std::size_t i = 0; i < n; ++i) {
        run = hits(series.points[i].value) ? run + 1 : 0;
        if (run >= window) {
            return series.points[i + 1 - window].index;
        }
    }
    return std::nullopt;
}

double speedup_ratio(long long base_index, long long ours_index) {
    if (base_index <= 0 || ours_index <= 0) {
        throw std::invalid_argument("speedup_ratio: both crossing indices must be positive");
    }
    return static_cast<double>(base_index) / static_cast<double>(ours_index);
}

double linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (x.rows() != y.rows() || x.rows() < 2) {
        throw std::invalid_argument("linear_cka: need matching row counts, n >= 2");
    }
    Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();

    const double cross = (xc.transpose() * yc).squaredNorm();
    const double self_x = (xc.transpose() * xc).norm();
    const double self_y = (yc.transpose() * yc).norm();
    if (self_x == 0.0 || self_y == 0.0) {
        throw std::invalid_argument("linear_cka: zero-variance input");
    }
    return cross / (self_x * self_y);
}

double mean_entropy(const Eigen::MatrixXd& probs) {
    if (probs.rows() == 0 || probs.cols() == 0) {
        throw std::invalid_argument("mean_entropy: empty input");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        double row_sum = 0.0;
        double h = 0.0;
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            const double p = probs(r, c);
            if (!(p >= 0.0) || !std::isfinite(p)) {
                throw std::invalid_argument("mean_entropy: invalid probability");
            }
            row_sum += p;
            if (p > 0.0) {
                h -= p * std::log(p);
            }
        }
        if (std::abs(row_sum - 1.0) > 1e-6) {
            throw std::invalid_argument("mean_entropy: rows must sum to 1");
        }
        total += h;
    }
    return total / static_cast<double>(probs.rows());
}

double mean_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols() || p.rows() == 0) {
        throw std::invalid_argument("mean_kl: shape mismatch");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            const double pv = p(r, c);
            const double qv = q(r, c);
            if (!(pv >= 0.0) || !(qv >= 0.0) || !std::isfinite(pv) || !std::isfinite(qv)) {
                throw std::invalid_argument("mean_kl: invalid probability");
            }
            if (pv > 0.0) {
                if (qv == 0.0) {
                    throw std::invalid_argument("mean_kl: infinite divergence (q=0 where p>0)");
                }
                total += pv * std::log(pv / qv);
            }
        }
    }
    return total / static_cast<double>(p.rows());
}

TeacherBandReport classify_teacher_band(double teacher_metric,
                                        double baseline_student_metric,
                                        const BandEdges& edges) {
    if (!(baseline_student_metric > 0.0)) {
        throw std::invalid_argument("classify_teacher_band: student metric must be positive");
    }
    TeacherBandReport report;
    report.teacher_metric = teacher_metric;
    report.baseline_student_metric = baseline_student_metric;
    report.relative_gap =
        100.0 * (teacher_metric - baseline_student_metric) / baseline_student_metric;
    if (report.relative_gap < edges.low) {
        report.regime = TeacherRegime::TooWeak;
    } else if (report.relative_gap >= edges.high) {
        report.regime = TeacherRegime::TooStrong;
    } else {
        report.regime = TeacherRegime::SuitablyWeaker;
    }
    return report;
}

const char* regime_name(TeacherRegime regime) {
    switch (regime) {
        case TeacherRegime::TooWeak: return "too_weak";
        case TeacherRegime::TooStrong: return "too_strong";
        case TeacherRegime::SuitablyWeaker: return "suitably_weaker";
    }
    return "unknown";
}

}  // namespace w2s::metrics
