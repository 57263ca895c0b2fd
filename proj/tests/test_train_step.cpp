#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "testutil.hpp"
#include "w2s/datasets.hpp"
#include "w2s/train_step.hpp"

using namespace w2s;
using namespace w2s::train;
using models::MatX;
using models::ModelParams;
using models::ModelSpec;

namespace {

struct Fixture {
    ModelSpec student_spec{models::ModelFamily::Mlp, {16}, {8}, 4, 16, 100};
    ModelSpec teacher_spec{models::ModelFamily::Mlp, {8}, {8}, 4, 16, 200};
    data::ClassificationDataset ds = data::make_gaussian_mixture({4, 8, 256, 64, 0.8}, 5);
    models::FrozenTeacher<float> teacher{teacher_spec, models::init_params<float>(teacher_spec),
                                         0.6};

    ClassificationBatch<float> batch(int index) const {
        const int b = 32;
        ClassificationBatch<float> out;
        out.inputs.resize(b, 8);
        out.labels.resize(b);
        for (int i = 0; i < b; ++i) {
            const int row = (index * b + i) % ds.train_x.rows();
            out.inputs.row(i) = ds.train_x.row(row);
            out.labels(i) = ds.train_y(row);
        }
        return out;
    }
};

TrainStepConfig make_config(double gamma, double lambda_max) {
    TrainStepConfig cfg;
    cfg.distill.gamma = gamma;
    cfg.distill.schedule = {2.0, 10.0, 20.0, lambda_max};
    cfg.distill.temperature = {6.0, 1.0, 20.0};
    return cfg;
}

GateState active_gate(double m_ref = 0.9) {
    return {m_ref, 0, true, 2, MetricDirection::HigherIsBetter};
}

GateState inactive_gate() {
    return {0.0, 0, false, 2, MetricDirection::HigherIsBetter};
}

// Runs n steps and returns the per-step parameter fingerprints.
std::vector<std::uint64_t> run_steps(const Fixture& fx, const TrainStepConfig& cfg,
                                     const GateState& gate, int n,
                                     long long* teacher_forwards = nullptr) {
    auto params = models::init_params<float>(fx.student_spec);
    auto state = opt::make_sgd<float>({0.05, 0.9, 0.0}, params);
    std::vector<std::uint64_t> fingerprints;
    for (int i = 0; i < n; ++i) {
        auto step = train_step(std::move(params), std::move(state), fx.batch(i), fx.teacher,
                               fx.student_spec, cfg, gate, 5.0);
        params = std::move(step.params);
        state = std::move(step.opt_state);
        fingerprints.push_back(params.fingerprint());
        if (teacher_forwards != nullptr) {
            *teacher_forwards += step.log.teacher_forwards;
        }
    }
    return fingerprints;
}

}  // namespace

TEST_CASE("inactive gate, gamma=0 and lambda=0 all match the baseline bitwise") {
    Fixture fx;
    long long forwards_baseline = 0, forwards_gamma0 = 0, forwards_lambda0 = 0;
    const auto baseline =
        run_steps(fx, make_config(1.0, 1.0), inactive_gate(), 40, &forwards_baseline);
    const auto gamma0 = run_steps(fx, make_config(0.0, 1.0), active_gate(), 40, &forwards_gamma0);
    const auto lambda0 = run_steps(fx, make_config(1.0, 0.0), active_gate(), 40, &forwards_lambda0);
    CHECK(baseline == gamma0);
    CHECK(baseline == lambda0);

    // The teacher is consulted exactly once per batch while the gate is
    // active and never when it is inactive.
    CHECK(forwards_baseline == 0);
    CHECK(forwards_gamma0 == 40);
    CHECK(forwards_lambda0 == 40);

    // ...and a live distillation signal must change the trajectory.
    const auto distilled = run_steps(fx, make_config(1.0, 1.0), active_gate(), 40);
    CHECK(distilled != baseline);
}

TEST_CASE("same seed and config give bitwise identical trajectories") {
    Fixture fx;
    const auto a = run_steps(fx, make_config(1.0, 1.5), active_gate(), 25);
    const auto b = run_steps(fx, make_config(1.0, 1.5), active_gate(), 25);
    CHECK(a == b);
}

TEST_CASE("teacher parameters never change during training") {
    Fixture fx;
    const std::uint64_t before = fx.teacher.params().fingerprint();
    run_steps(fx, make_config(1.0, 2.0), active_gate(), 60);
    CHECK(fx.teacher.params().fingerprint() == before);
}

TEST_CASE("log rows carry losses, schedule weight and finite nonzero norms") {
    Fixture fx;
    auto cfg = make_config(1.0, 2.0);
    auto params = models::init_params<float>(fx.student_spec);
    auto state = opt::make_sgd<float>({0.05, 0.9, 0.0}, params);
    auto step = train_step(std::move(params), std::move(state), fx.batch(0), fx.teacher,
                           fx.student_spec, cfg, active_gate(), 5.0);
    CHECK(step.log.u == 5.0);
    CHECK(step.log.lambda_eff == doctest::Approx(2.0));  // u=5 is inside the hold
    CHECK(step.log.loss_base > 0.0);
    CHECK(step.log.loss_distill > 0.0);
    CHECK(std::isfinite(step.log.grad_norm_base));
    CHECK(std::isfinite(step.log.grad_norm_distill));
    CHECK(step.log.grad_norm_base > 0.0);
    CHECK(step.log.grad_norm_distill > 0.0);
    CHECK(step.log.teacher_forwards == 1);

    // past decay_end the distillation term vanishes but the teacher is still
    // consulted while the gate is active
    auto params2 = models::init_params<float>(fx.student_spec);
    auto state2 = opt::make_sgd<float>({0.05, 0.9, 0.0}, params2);
    auto late = train_step(std::move(params2), std::move(state2), fx.batch(0), fx.teacher,
                           fx.student_spec, cfg, active_gate(), 25.0);
    CHECK(late.log.lambda_eff == 0.0);
    CHECK(late.log.grad_norm_distill == 0.0);
    CHECK(late.log.teacher_forwards == 1);
}

TEST_CASE("cached teacher logits substitute bit-exactly for the forward") {
    Fixture fx;
    auto cfg = make_config(1.0, 2.0);
    const auto batch = fx.batch(3);
    const MatX<float> cached = fx.teacher.predict(batch.inputs);

    auto params = models::init_params<float>(fx.student_spec);
    auto state = opt::make_sgd<float>({0.05, 0.9, 0.0}, params);
    auto fresh = train_step(ModelParams<float>(params), opt::OptimizerState<float>(state), batch,
                            fx.teacher, fx.student_spec, cfg, active_gate(), 5.0);
    auto hit = train_step(std::move(params), std::move(state), batch, fx.teacher, fx.student_spec,
                          cfg, active_gate(), 5.0, &cached);
    CHECK(fresh.params.fingerprint() == hit.params.fingerprint());
    CHECK(fresh.log.teacher_forwards == 1);
    CHECK(hit.log.teacher_forwards == 0);
}

TEST_CASE("diverging loss raises a divergence error") {
    Fixture fx;
    auto cfg = make_config(0.0, 0.0);
    auto params = models::init_params<float>(fx.student_spec);
    auto state = opt::make_sgd<float>({1e30, 0.0, 0.0}, params);
    CHECK_THROWS_AS(
        [&] {
            for (int i = 0; i < 10; ++i) {
                auto step = train_step(std::move(params), std::move(state), fx.batch(i),
                                       fx.teacher, fx.student_spec, cfg, inactive_gate(), 1.0);
                params = std::move(step.params);
                state = std::move(step.opt_state);
            }
        }(),
        DivergenceError);
}

TEST_CASE("diffusion train_step distills masked noise predictions") {
    ModelSpec student_spec{models::ModelFamily::TinyDenoiser, {24}, {2}, 2, 8, 300};
    ModelSpec teacher_spec{models::ModelFamily::TinyDenoiser, {12}, {2}, 2, 8, 400};
    models::FrozenTeacher<float> teacher{teacher_spec, models::init_params<float>(teacher_spec),
                                         0.5};
    std::mt19937_64 rng(9);
    DiffusionBatch<float> batch;
    batch.x_t = testutil::random_matrix(16, 2, rng).cast<float>();
    batch.eps_true = testutil::random_matrix(16, 2, rng).cast<float>();
    batch.t_max = 100;
    batch.timesteps.resize(16);
    std::uniform_int_distribution<int> td(0, 99);
    for (int i = 0; i < 16; ++i) {
        batch.timesteps(i) = td(rng);
    }

    TrainStepConfig cfg = make_config(1.0, 1.0);
    cfg.gen_mask_ratio = 0.5;
    auto params = models::init_params<float>(student_spec);
    auto state = opt::make_adamw<float>({1e-3, 0.9, 0.999, 1e-8, 0.0}, params);
    auto step = train_step(std::move(params), std::move(state), batch, teacher, student_spec, cfg,
                           active_gate(), 5.0);
    CHECK(step.log.loss_base > 0.0);
    CHECK(step.log.loss_distill > 0.0);
    CHECK(step.log.teacher_forwards == 1);
    CHECK(step.params.all_finite());

    // gate off: pure denoising step, no teacher involvement
    auto params2 = models::init_params<float>(student_spec);
    auto state2 = opt::make_adamw<float>({1e-3, 0.9, 0.999, 1e-8, 0.0}, params2);
    auto off = train_step(std::move(params2), std::move(state2), batch, teacher, student_spec,
                          cfg, inactive_gate(), 5.0);
    CHECK(off.log.loss_distill == 0.0);
    CHECK(off.log.teacher_forwards == 0);
}
