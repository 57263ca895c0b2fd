#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <random>

#include <Eigen/Dense>

#include "testutil.hpp"
#include "w2s/metrics.hpp"

using namespace w2s;
using namespace w2s::metrics;
using Eigen::MatrixXd;

namespace {

MetricSeries make_series(const std::vector<double>& values, MetricDirection dir,
                         long long start_index = 1, long long stride = 1) {
    MetricSeries s;
    s.direction = dir;
    for (std::size_t i = 0; i < values.size(); ++i) {
        s.points.push_back({start_index + static_cast<long long>(i) * stride, values[i]});
    }
    return s;
}

// Window scan over every candidate start, independent of the running-count
// implementation.
std::optional<long long> oracle_first_at_tau(const MetricSeries& s, const CrossingRule& rule) {
    const auto hit = [&](double v) {
        return s.direction == MetricDirection::HigherIsBetter ? v >= rule.tau : v <= rule.tau;
    };
    const std::size_t w = static_cast<std::size_t>(rule.consecutive_hits);
    if (s.points.size() < w) {
        return std::nullopt;
    }
    for (std::size_t i = 0; i + w <= s.points.size(); ++i) {
        bool all = true;
        for (std::size_t j = i; j < i + w; ++j) {
            all = all && hit(s.points[j].value);
        }
        if (all) {
            return s.points[i].index;
        }
    }
    return std::nullopt;
}

// HSIC/Gram form of linear CKA: tr(KL) / sqrt(tr(KK) tr(LL)).
double oracle_cka(const MatrixXd& x, const MatrixXd& y) {
    const MatrixXd xc = x.rowwise() - x.colwise().mean();
    const MatrixXd yc = y.rowwise() - y.colwise().mean();
    const MatrixXd k = xc * xc.transpose();
    const MatrixXd l = yc * yc.transpose();
    const double tr_kl = (k.array() * l.array()).sum();
    const double tr_kk = (k.array() * k.array()).sum();
    const double tr_ll = (l.array() * l.array()).sum();
    return tr_kl / std::sqrt(tr_kk * tr_ll);
}

}  // namespace

TEST_CASE("first_at_tau single-hit and consecutive-hit examples") {
    const auto higher = make_series({50, 58, 61, 63}, MetricDirection::HigherIsBetter);
    CHECK(first_at_tau(higher, {60.0, 1}).value() == 3);

    const auto lower = make_series({80, 70, 59, 62, 58, 55}, MetricDirection::LowerIsBetter);
    CHECK(first_at_tau(lower, {60.0, 2}).value() == 5);  // the dip at 3 is rejected
    CHECK(first_at_tau(lower, {60.0, 1}).value() == 3);

    const auto never = make_series({10, 20, 30}, MetricDirection::HigherIsBetter);
    CHECK_FALSE(first_at_tau(never, {60.0, 1}).has_value());

    CHECK_THROWS_AS(first_at_tau(MetricSeries{}, {1.0, 1}), std::invalid_argument);
}

TEST_CASE("first_at_tau equals the brute-force window scan on random series") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 30);
    for (int trial = 0; trial < 1000; ++trial) {
        MetricSeries s;
        s.direction = trial % 2 == 0 ? MetricDirection::HigherIsBetter
                                     : MetricDirection::LowerIsBetter;
        const int n = len(rng);
        long long idx = 0;
        for (int i = 0; i < n; ++i) {
            idx += 1 + static_cast<long long>(value(rng) * 3);
            s.points.push_back({idx, value(rng)});
        }
        const CrossingRule rule{value(rng), 1 + trial % 2};
        CHECK(first_at_tau(s, rule) == oracle_first_at_tau(s, rule));
    }
}

TEST_CASE("raising tau never yields an earlier crossing") {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> values(20);
        for (auto& v : values) {
            v = value(rng);
        }
        const auto s = make_series(values, MetricDirection::HigherIsBetter);
        const double tau_lo = value(rng);
        const double tau_hi = tau_lo + value(rng) * (1.0 - tau_lo);
        const auto lo = first_at_tau(s, {tau_lo, 1});
        const auto hi = first_at_tau(s, {tau_hi, 1});
        if (hi.has_value()) {
            REQUIRE(lo.has_value());
            CHECK(lo.value() <= hi.value());
        }
    }
}

TEST_CASE("speedup_ratio reproduces the reference ratios") {
    CHECK(speedup_ratio(10, 6) == doctest::Approx(1.67).epsilon(0.005));
    CHECK(speedup_ratio(16000, 6000) == doctest::Approx(2.67).epsilon(0.005));
    CHECK(speedup_ratio(19, 37) == doctest::Approx(0.51).epsilon(0.01));
    CHECK(speedup_ratio(19, 4) == doctest::Approx(4.75));
    CHECK(speedup_ratio(7, 7) == 1.0);
    CHECK_THROWS_AS(speedup_ratio(0, 5), std::invalid_argument);
    CHECK_THROWS_AS(speedup_ratio(5, 0), std::invalid_argument);
}

TEST_CASE("linear_cka self-similarity, rotation and scale invariance") {
    std::mt19937_64 rng(107);
    const MatrixXd x = testutil::random_matrix(40, 6, rng);
    CHECK(linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-10));

    // Orthogonal right-multiplication leaves linear CKA unchanged.
    const MatrixXd g = testutil::random_matrix(6, 6, rng);
    const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
    CHECK(linear_cka(x, x * q) == doctest::Approx(1.0).epsilon(1e-6));

    const MatrixXd y = testutil::random_matrix(40, 4, rng);
    const double base = linear_cka(x, y);
    CHECK(linear_cka(3.7 * x, y) == doctest::Approx(base).epsilon(1e-6));
    CHECK(linear_cka(x, 0.002 * y) == doctest::Approx(base).epsilon(1e-6));
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    CHECK(linear_cka(y, x) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("linear_cka matches the Gram-form oracle and stays in [0,1]") {
    std::mt19937_64 rng(109);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd x = testutil::random_matrix(500, 8, rng);
        const MatrixXd y = testutil::random_matrix(500, 5, rng);
        const double got = linear_cka(x, y);
        CHECK(got == doctest::Approx(oracle_cka(x, y)).epsilon(1e-8));
        CHECK(got >= 0.0);
        CHECK(got <= 0.2);  // independent features: similarity near zero
    }
}

TEST_CASE("linear_cka rejects zero-variance input") {
    const MatrixXd x = MatrixXd::Ones(10, 3);  // constant columns center to zero
    const MatrixXd y = MatrixXd::Random(10, 3);
    CHECK_THROWS_AS(linear_cka(x, y), std::invalid_argument);
}

TEST_CASE("mean_entropy on uniform, one-hot and binary rows") {
    CHECK(mean_entropy(MatrixXd::Constant(3, 1000, 1.0 / 1000.0)) ==
          doctest::Approx(std::log(1000.0)).epsilon(1e-6));

    MatrixXd onehot = MatrixXd::Zero(4, 5);
    for (int r = 0; r < 4; ++r) {
        onehot(r, r) = 1.0;
    }
    CHECK(mean_entropy(onehot) == doctest::Approx(0.0));

    CHECK(mean_entropy(MatrixXd::Constant(2, 2, 0.5)) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(mean_entropy(MatrixXd::Constant(2, 4, 0.5)), std::invalid_argument);
    MatrixXd negative = MatrixXd::Constant(1, 2, 0.75);
    negative(0, 1) = -0.5;
    CHECK_THROWS_AS(mean_entropy(negative), std::invalid_argument);
}

TEST_CASE("mean_kl identities and oracle equivalence") {
    MatrixXd p(1, 2), q(1, 2);
    p << 1.0, 0.0;
    q << 0.5, 0.5;
    CHECK(mean_kl(p, p) == doctest::Approx(0.0));
    CHECK(mean_kl(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(mean_kl(q, p), std::invalid_argument);  // q has a zero where p > 0

    std::mt19937_64 rng(113);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        MatrixXd a(6, 5), b(6, 5);
        for (int r = 0; r < 6; ++r) {
            double sa = 0.0, sb = 0.0;
            for (int c = 0; c < 5; ++c) {
                a(r, c) = u(rng);
                b(r, c) = u(rng);
                sa += a(r, c);
                sb += b(r, c);
            }
            a.row(r) /= sa;
            b.row(r) /= sb;
        }
        double oracle = 0.0;
        for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 5; ++c) {
                oracle += a(r, c) * std::log(a(r, c) / b(r, c));
            }
        }
        oracle /= 6.0;
        const double got = mean_kl(a, b);
        CHECK(got == doctest::Approx(oracle).epsilon(1e-8));
        CHECK(got >= 0.0);
        if (got <= 1e-9) {
            CHECK((a - b).norm() <= 1e-6);
        }
    }
}

TEST_CASE("teacher band classification around the default edges") {
    const auto a = classify_teacher_band(70.73, 76.52);
    CHECK(a.relative_gap == doctest::Approx(-7.57).epsilon(0.001));
    CHECK(a.regime == TeacherRegime::SuitablyWeaker);

    const auto b = classify_teacher_band(69.62, 76.52);
    CHECK(b.relative_gap == doctest::Approx(-9.02).epsilon(0.001));
    CHECK(b.regime == TeacherRegime::SuitablyWeaker);

    const auto equal = classify_teacher_band(76.52, 76.52);
    CHECK(equal.relative_gap == doctest::Approx(0.0));
    CHECK(equal.regime == TeacherRegime::TooStrong);

    CHECK(classify_teacher_band(10.0, 76.52).regime == TeacherRegime::TooWeak);
    CHECK(classify_teacher_band(80.0, 76.52).regime == TeacherRegime::TooStrong);

    // configurable edges
    CHECK(classify_teacher_band(50.0, 76.52, {-40.0, 0.0}).regime ==
          TeacherRegime::SuitablyWeaker);
    CHECK_THROWS_AS(classify_teacher_band(50.0, 0.0), std::invalid_argument);
}
