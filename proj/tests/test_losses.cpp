#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "testutil.hpp"
#include "w2s/losses.hpp"

using namespace w2s;
using namespace w2s::losses;
using Eigen::MatrixXd;
using Eigen::VectorXi;

namespace {

// Naive softmax/KL oracle, kept free of the shifted log-sum-exp path the
// implementation uses.
MatrixXd oracle_softmax(const MatrixXd& logits, double t) {
    MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        double z = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            z += std::exp(logits(r, c) / t);
        }
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            p(r, c) = std::exp(logits(r, c) / t) / z;
        }
    }
    return p;
}

double oracle_kd(const MatrixXd& student, const MatrixXd& teacher, double t, KlDirection dir) {
    const MatrixXd ps = oracle_softmax(student, t);
    const MatrixXd pt = oracle_softmax(teacher, t);
    const MatrixXd& lead = dir == KlDirection::Forward ? pt : ps;
    const MatrixXd& follow = dir == KlDirection::Forward ? ps : pt;
    double total = 0.0;
    for (Eigen::Index r = 0; r < student.rows(); ++r) {
        for (Eigen::Index c = 0; c < student.cols(); ++c) {
            total += lead(r, c) * std::log(lead(r, c) / follow(r, c));
        }
    }
    return t * t * total / static_cast<double>(student.rows());
}

}  // namespace

TEST_CASE("ce_loss on uniform logits equals ln K") {
    MatrixXd logits = MatrixXd::Zero(3, 4);
    TargetSpec targets{VectorXi::Zero(3), 0.0};
    const auto out = ce_loss(logits, targets);
    CHECK(out.loss == doctest::Approx(std::log(4.0)).epsilon(1e-10));
}

TEST_CASE("ce_loss vanishes for strongly peaked logits") {
    MatrixXd logits = MatrixXd::Zero(2, 5);
    logits(0, 3) = 50.0;
    logits(1, 1) = 50.0;
    TargetSpec targets{(VectorXi(2) << 3, 1).finished(), 0.0};
    CHECK(ce_loss(logits, targets).loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ce_loss with smoothing on a uniform binary prediction is ln 2") {
    MatrixXd logits = MatrixXd::Zero(1, 2);
    TargetSpec targets{VectorXi::Zero(1), 0.1};
    CHECK(ce_loss(logits, targets).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("ce_loss rejects out-of-range labels") {
    MatrixXd logits = MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(ce_loss(logits, {(VectorXi(2) << 0, 3).finished(), 0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(ce_loss(logits, {(VectorXi(2) << -1, 0).finished(), 0.0}),
                    std::invalid_argument);
}

TEST_CASE("ce_loss gradient matches central finite differences") {
    std::mt19937_64 rng(21);
    for (int k : {2, 10}) {
        for (int trial = 0; trial < 5; ++trial) {
            MatrixXd logits = testutil::random_matrix(6, k, rng, 2.0);
            VectorXi labels(6);
            std::uniform_int_distribution<int> lbl(0, k - 1);
            for (int i = 0; i < 6; ++i) {
                labels(i) = lbl(rng);
            }
            const double eps = trial % 2 == 0 ? 0.0 : 0.1;
            const auto out = ce_loss(logits, {labels, eps});
            const double err = testutil::gradcheck(
                [&](const MatrixXd& x) { return ce_loss(x, {labels, eps}).loss; }, logits,
                out.grad);
            CHECK(err <= 1e-4);
        }
    }
}

TEST_CASE("kd_loss is zero when teacher equals student") {
    std::mt19937_64 rng(3);
    const MatrixXd logits = testutil::random_matrix(4, 7, rng);
    for (auto dir : {KlDirection::Forward, KlDirection::Reverse}) {
        for (double t : {1.0, 2.0, 6.0}) {
            const auto out = kd_loss(logits, logits, t, dir);
            CHECK(out.loss == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(out.grad.norm() == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("kd_loss hand values from the two-class pair") {
    MatrixXd teacher(1, 2), student(1, 2);
    teacher << 1.0, 0.0;
    student << 0.0, 1.0;
    const double expected = (std::exp(1.0) - 1.0) / (std::exp(1.0) + 1.0);  // p1 - p2
    const auto fwd = kd_loss(student, teacher, 1.0, KlDirection::Forward);
    CHECK(fwd.loss == doctest::Approx(0.4621).epsilon(2e-4));
    CHECK(fwd.loss == doctest::Approx(expected).epsilon(1e-10));

    MatrixXd teacher2(1, 2), student2(1, 2);
    teacher2 << 2.0, 0.0;
    student2 << 0.0, 2.0;
    const auto scaled = kd_loss(student2, teacher2, 2.0, KlDirection::Forward);
    CHECK(scaled.loss == doctest::Approx(4.0 * expected).epsilon(1e-10));
    CHECK(scaled.loss == doctest::Approx(1.8484).epsilon(2e-4));
}

TEST_CASE("kd_loss equals the brute-force oracle on random logits") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = trial % 2 == 0 ? 2 : 10;
        const MatrixXd student = testutil::random_matrix(5, k, rng, 3.0);
        const MatrixXd teacher = testutil::random_matrix(5, k, rng, 3.0);
        for (auto dir : {KlDirection::Forward, KlDirection::Reverse}) {
            for (double t : {1.0, 2.0, 6.0}) {
                const auto out = kd_loss(student, teacher, t, dir);
                CHECK(out.loss == doctest::Approx(oracle_kd(student, teacher, t, dir)).epsilon(1e-9));
                CHECK(out.loss >= 0.0);
            }
        }
    }
}

TEST_CASE("kd_loss gradient matches central finite differences") {
    std::mt19937_64 rng(29);
    for (int k : {2, 10}) {
        const MatrixXd student = testutil::random_matrix(4, k, rng, 2.0);
        const MatrixXd teacher = testutil::random_matrix(4, k, rng, 2.0);
        for (auto dir : {KlDirection::Forward, KlDirection::Reverse}) {
            for (double t : {1.0, 2.0, 6.0}) {
                const auto out = kd_loss(student, teacher, t, dir);
                const double err = testutil::gradcheck(
                    [&](const MatrixXd& x) { return kd_loss(x, teacher, t, dir).loss; }, student,
                    out.grad);
                CHECK(err <= 1e-4);
            }
        }
    }
}

TEST_CASE("kd_loss is invariant to per-row logit shifts") {
    std::mt19937_64 rng(31);
    const MatrixXd student = testutil::random_matrix(5, 8, rng);
    const MatrixXd teacher = testutil::random_matrix(5, 8, rng);
    const Eigen::VectorXd shift_s = testutil::random_matrix(5, 1, rng, 10.0);
    const Eigen::VectorXd shift_t = testutil::random_matrix(5, 1, rng, 10.0);
    for (auto dir : {KlDirection::Forward, KlDirection::Reverse}) {
        const double base = kd_loss(student, teacher, 2.0, dir).loss;
        const double shifted =
            kd_loss(student.colwise() + shift_s, teacher.colwise() + shift_t, 2.0, dir).loss;
        CHECK(std::abs(base - shifted) <= 1e-10);
    }
}

TEST_CASE("kd gradient magnitude survives high temperature") {
    // The T^2 factor keeps gradients comparable across the 1..6 ramp.
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd student = testutil::random_matrix(4, 10, rng, 2.0);
        const MatrixXd teacher = testutil::random_matrix(4, 10, rng, 2.0);
        const double g1 = kd_loss(student, teacher, 1.0, KlDirection::Forward).grad.norm();
        const double g6 = kd_loss(student, teacher, 6.0, KlDirection::Forward).grad.norm();
        CHECK(g6 >= g1 / 10.0);
        CHECK(g6 <= g1 * 10.0);
    }
}

TEST_CASE("kd_loss rejects bad temperature and mismatched shapes") {
    MatrixXd a = MatrixXd::Zero(2, 3), b = MatrixXd::Zero(2, 4);
    CHECK_THROWS_AS(kd_loss(a, a, 0.0, KlDirection::Forward), std::invalid_argument);
    CHECK_THROWS_AS(kd_loss(a, a, -1.0, KlDirection::Forward), std::invalid_argument);
    CHECK_THROWS_AS(kd_loss(a, b, 1.0, KlDirection::Forward), std::invalid_argument);
}

namespace {

DetectionHeadBatch random_heads(std::mt19937_64& rng, int anchors, int classes, double scale) {
    return {testutil::random_matrix(anchors, classes, rng, scale),
            testutil::random_matrix(anchors, 4, rng, scale)};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Direct masked-mean evaluation used as the oracle for det_distill_loss.
double oracle_det(const DetectionHeadBatch& student, const DetectionHeadBatch& teacher, double t,
                  double thr, double beta) {
    double cls = 0.0, box = 0.0;
    int masked = 0;
    for (Eigen::Index a = 0; a < teacher.cls_logits.rows(); ++a) {
        double conf = 0.0;
        for (Eigen::Index c = 0; c < teacher.cls_logits.cols(); ++c) {
            conf = std::max(conf, sigmoid(teacher.cls_logits(a, c)));
        }
        if (conf < thr) {
            continue;
        }
        ++masked;
        const MatrixXd ps = oracle_softmax(student.cls_logits.row(a), t);
        const MatrixXd pt = oracle_softmax(teacher.cls_logits.row(a), t);
        for (Eigen::Index c = 0; c < ps.cols(); ++c) {
            cls += t * t * pt(0, c) * std::log(pt(0, c) / ps(0, c));
        }
        for (int j = 0; j < 4; ++j) {
            const double d = student.box_deltas(a, j) - teacher.box_deltas(a, j);
            box += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
        }
    }
    return masked == 0 ? 0.0 : (cls + beta * box) / masked;
}

}  // namespace

TEST_CASE("det_distill_loss masks, scales and matches the oracle") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const auto student = random_heads(rng, 12, 6, 2.0);
        const auto teacher = random_heads(rng, 12, 6, 2.0);
        for (double thr : {0.0, 0.5, 0.8, 0.95}) {
            for (double beta : {0.0, 1.0, 2.5}) {
                const double got = det_distill_loss(student, teacher, 2.0, thr, beta);
                CHECK(got == doctest::Approx(oracle_det(student, teacher, 2.0, thr, beta))
                                 .epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("det_distill_loss is zero on an empty mask") {
    std::mt19937_64 rng(43);
    auto student = random_heads(rng, 8, 5, 1.0);
    auto teacher = random_heads(rng, 8, 5, 1.0);
    teacher.cls_logits.setConstant(-10.0);  // teacher confidence ~ 4.5e-5 everywhere
    CHECK(det_distill_loss(student, teacher, 2.0, 0.5, 1.0) == 0.0);
}

TEST_CASE("beta=0 removes the box term") {
    std::mt19937_64 rng(47);
    auto student = random_heads(rng, 8, 5, 1.0);
    auto teacher = student;
    teacher.box_deltas.array() += 3.0;  // large box disagreement, identical cls logits
    CHECK(det_distill_loss(student, teacher, 2.0, 0.0, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(det_distill_loss(student, teacher, 2.0, 0.0, 1.0) > 0.1);
}

TEST_CASE("det_distill_loss is zero when heads agree on the mask") {
    std::mt19937_64 rng(53);
    const auto heads = random_heads(rng, 10, 4, 1.5);
    CHECK(det_distill_loss(heads, heads, 3.0, 0.3, 2.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cls numerator grows monotonically as the threshold loosens") {
    std::mt19937_64 rng(59);
    const auto student = random_heads(rng, 30, 6, 2.0);
    const auto teacher = random_heads(rng, 30, 6, 2.0);
    double prev_numerator = -1.0;
    for (double thr : {0.95, 0.9, 0.8, 0.6, 0.4, 0.2, 0.0}) {
        int masked = 0;
        for (Eigen::Index a = 0; a < teacher.cls_logits.rows(); ++a) {
            double conf = 0.0;
            for (Eigen::Index c = 0; c < teacher.cls_logits.cols(); ++c) {
                conf = std::max(conf, sigmoid(teacher.cls_logits(a, c)));
            }
            if (conf >= thr) {
                ++masked;
            }
        }
        const double numerator = det_distill_loss(student, teacher, 2.0, thr, 0.0) * masked;
        CHECK(numerator >= prev_numerator - 1e-9);
        prev_numerator = numerator;
    }
}

TEST_CASE("det_distill_loss rejects mismatched anchor counts") {
    std::mt19937_64 rng(61);
    const auto a = random_heads(rng, 8, 5, 1.0);
    const auto b = random_heads(rng, 9, 5, 1.0);
    CHECK_THROWS_AS(det_distill_loss(a, b, 2.0, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("gen_distill_loss applies the early-timestep mask") {
    NoisePredictionBatch student{MatrixXd(2, 2), (VectorXi(2) << 10, 90).finished(), 100};
    NoisePredictionBatch teacher = student;
    student.eps << 2.0, 0.0, 10.0, 0.0;
    teacher.eps << 0.0, 0.0, 0.0, 0.0;
    // per-sample squared distances: 4 and 100; only t=10 survives ratio 0.5
    CHECK(gen_distill_loss(student, teacher, 0.5) == doctest::Approx(4.0));
    CHECK(gen_distill_loss(student, teacher, 1.0) == doctest::Approx(52.0));
    CHECK(gen_distill_loss(student, teacher, 0.0) == 0.0);
    CHECK(gen_distill_loss(student, teacher, 0.5, TimestepMaskSide::Late) ==
          doctest::Approx(100.0));
}

TEST_CASE("gen_distill_loss is zero for identical predictions") {
    std::mt19937_64 rng(67);
    NoisePredictionBatch batch{testutil::random_matrix(6, 3, rng),
                               (VectorXi(6) << 0, 10, 20, 40, 70, 99).finished(), 100};
    CHECK(gen_distill_loss(batch, batch, 0.7) == doctest::Approx(0.0));
}

TEST_CASE("gen_distill_loss validates timesteps") {
    NoisePredictionBatch a{MatrixXd::Zero(2, 2), (VectorXi(2) << 1, 2).finished(), 100};
    NoisePredictionBatch b{MatrixXd::Zero(2, 2), (VectorXi(2) << 1, 3).finished(), 100};
    CHECK_THROWS_AS(gen_distill_loss(a, b, 0.5), std::invalid_argument);
    NoisePredictionBatch c{MatrixXd::Zero(2, 2), (VectorXi(2) << 1, 100).finished(), 100};
    CHECK_THROWS_AS(gen_distill_loss(c, c, 0.5), std::invalid_argument);
}

TEST_CASE("gen_distill gradient matches finite differences") {
    std::mt19937_64 rng(71);
    NoisePredictionBatch student{testutil::random_matrix(5, 3, rng),
                                 (VectorXi(5) << 5, 20, 49, 50, 95).finished(), 100};
    NoisePredictionBatch teacher{testutil::random_matrix(5, 3, rng), student.timesteps, 100};
    const auto out = gen_distill_loss_with_grad(student, teacher, 0.5);
    const double err = testutil::gradcheck(
        [&](const MatrixXd& x) {
            return gen_distill_loss({x, student.timesteps, 100}, teacher, 0.5);
        },
        student.eps, out.grad);
    CHECK(err <= 1e-6);
}

TEST_CASE("gen_base_loss is the elementwise mean squared error") {
    CHECK(gen_base_loss(MatrixXd::Zero(3, 4), MatrixXd::Zero(3, 4)) == 0.0);
    CHECK(gen_base_loss(MatrixXd::Zero(2, 4), MatrixXd::Ones(2, 4)) == doctest::Approx(1.0));

    std::mt19937_64 rng(73);
    const MatrixXd a = testutil::random_matrix(4, 6, rng);
    const MatrixXd b = testutil::random_matrix(4, 6, rng);
    double oracle = 0.0;
    for (Eigen::Index r = 0; r < 4; ++r) {
        for (Eigen::Index c = 0; c < 6; ++c) {
            oracle += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
        }
    }
    oracle /= 24.0;
    CHECK(gen_base_loss(a, b) == doctest::Approx(oracle).epsilon(1e-12));

    const auto wg = gen_base_loss_with_grad(a, b);
    const double err = testutil::gradcheck(
        [&](const MatrixXd& x) { return gen_base_loss(x, b); }, a, wg.grad);
    CHECK(err <= 1e-6);
    CHECK_THROWS_AS(gen_base_loss(MatrixXd::Zero(2, 3), MatrixXd::Zero(3, 2)),
                    std::invalid_argument);
}
