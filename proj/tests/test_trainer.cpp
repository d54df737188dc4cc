#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "sdd/trainer.hpp"

namespace sdd {
namespace {

ModelSpec tiny_spec() {
    ModelSpec s;
    s.input_dim = 4;
    s.hidden_dims = {12, 12};
    s.head_dims = {3};
    s.dropout_position = 2;
    return s;
}

TrainConfig quick_config(RunMode mode) {
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 16;
    c.milestones = {2};
    c.run_mode = mode;
    return c;
}

TEST(LrSchedule, DefaultMilestones) {
    const TrainConfig c;
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 0), 0.1);
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 99), 0.1);
    EXPECT_NEAR(lr_at_epoch(c, 100), 0.01, 1e-17);
    EXPECT_NEAR(lr_at_epoch(c, 150), 0.001, 1e-18);
    for (std::size_t e = 1; e < 200; ++e) EXPECT_LE(lr_at_epoch(c, e), lr_at_epoch(c, e - 1));
}

Parameters single_param(double theta) {
    ModelSpec s;
    s.input_dim = 1;
    s.hidden_dims = {};
    s.head_dims = {2};
    s.dropout_position = 0;
    Parameters p = init_model(s, 0);
    for (auto& nt : p.tensors()) {
        for (auto& v : nt.tensor.mutable_values()) v = theta;
    }
    return p;
}

std::vector<std::vector<double>> uniform_grads(const Parameters& p, double g) {
    std::vector<std::vector<double>> grads;
    for (const auto& nt : p.tensors()) grads.emplace_back(nt.tensor.size(), g);
    return grads;
}

TEST(Sgd, ZeroGradientScalesVelocityOnly) {
    Parameters p = single_param(1.0);
    auto state = OptimizerState::zeros_like(p);
    for (auto& v : state.velocity) std::fill(v.begin(), v.end(), 2.0);
    sgd_step(p, uniform_grads(p, 0.0), state, 0.0, 0.9, 0.0);
    for (const auto& nt : p.tensors()) {
        for (double v : nt.tensor.values()) EXPECT_EQ(v, 1.0);
    }
    for (const auto& v : state.velocity) {
        for (double x : v) EXPECT_DOUBLE_EQ(x, 1.8);
    }
}

TEST(Sgd, HandArithmetic) {
    Parameters p = single_param(1.0);
    auto state = OptimizerState::zeros_like(p);
    sgd_step(p, uniform_grads(p, 1.0), state, 0.1, 0.0, 0.0);
    EXPECT_DOUBLE_EQ(p.tensors()[0].tensor[0], 0.9);

    Parameters q = single_param(1.0);
    auto st = OptimizerState::zeros_like(q);
    sgd_step(q, uniform_grads(q, 1.0), st, 0.1, 0.9, 0.0);
    sgd_step(q, uniform_grads(q, 1.0), st, 0.1, 0.9, 0.0);
    EXPECT_DOUBLE_EQ(st.velocity[0][0], 1.9);
    EXPECT_NEAR(q.tensors()[0].tensor[0], 0.71, 1e-15);
}

TEST(Sgd, WeightDecayAddsToGradient) {
    Parameters p = single_param(2.0);
    auto state = OptimizerState::zeros_like(p);
    sgd_step(p, uniform_grads(p, 0.0), state, 0.5, 0.0, 0.1);
    EXPECT_DOUBLE_EQ(p.tensors()[0].tensor[0], 2.0 - 0.5 * 0.2);
}

TEST(Sgd, NonFiniteGradientNamesParameter) {
    Parameters p = single_param(1.0);
    auto state = OptimizerState::zeros_like(p);
    auto grads = uniform_grads(p, 0.0);
    grads[1][0] = std::nan("");
    try {
        sgd_step(p, grads, state, 0.1, 0.9, 0.0);
        FAIL();
    } catch (const TrainingAborted& e) {
        EXPECT_NE(std::string(e.what()).find(p.tensors()[1].name), std::string::npos);
    }
    EXPECT_EQ(p.tensors()[0].tensor[0], 1.0);
}

TEST(TrainRun, LambdaZeroSdDropoutIsBitIdenticalToCrossEntropy) {
    const Dataset data = gen_blobs(30, 3, 4, 0.8, 2);
    TrainConfig sd = quick_config(RunMode::SdDropout);
    sd.distill.lambda_sdd = 0.0;
    const auto a = train_run(tiny_spec(), data, nullptr, sd);
    const auto b = train_run(tiny_spec(), data, nullptr, quick_config(RunMode::CrossEntropy));
    EXPECT_TRUE(a.params.identical(b.params));
    for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].train_loss, b.log[e].train_loss);
}

TEST(TrainRun, SameSeedSameParameters) {
    const Dataset data = gen_blobs(30, 3, 4, 0.8, 2);
    for (auto mode : {RunMode::SdDropout, RunMode::StandardDropout, RunMode::SdDropoutKd}) {
        const auto cfg = quick_config(mode);
        EXPECT_TRUE(train_run(tiny_spec(), data, nullptr, cfg).params.identical(
            train_run(tiny_spec(), data, nullptr, cfg).params));
    }
    auto other = quick_config(RunMode::SdDropout);
    other.seed = 1;
    EXPECT_FALSE(train_run(tiny_spec(), data, nullptr, other)
                     .params.identical(train_run(tiny_spec(), data, nullptr, quick_config(RunMode::SdDropout)).params));
}

TEST(TrainRun, LogsEveryEpochWithScheduleAndValidation) {
    const Dataset data = gen_blobs(30, 3, 4, 0.8, 2);
    const Dataset val = gen_blobs(10, 3, 4, 0.8, 3);
    std::size_t callbacks = 0;
    const auto r = train_run(tiny_spec(), data, &val, quick_config(RunMode::SdDropout),
                             [&](const EpochLog&, const Parameters&) { ++callbacks; });
    ASSERT_EQ(r.log.size(), 4u);
    EXPECT_EQ(callbacks, 4u);
    EXPECT_DOUBLE_EQ(r.log[1].lr, 0.1);
    EXPECT_NEAR(r.log[2].lr, 0.01, 1e-17);
    for (const auto& e : r.log) {
        EXPECT_TRUE(std::isfinite(e.train_loss));
        ASSERT_TRUE(e.val_acc.has_value());
    }
}

TEST(TrainRun, CustomKdHookIsUsed) {
    const Dataset data = gen_blobs(20, 3, 4, 0.8, 2);
    auto cfg = quick_config(RunMode::SdDropoutKd);
    cfg.distill.lambda_kd = 1.0;
    std::size_t calls = 0;
    cfg.kd_hook = [&](const BatchContext& ctx) {
        ++calls;
        return scale(sum(ctx.logits_u), 0.0);
    };
    train_run(tiny_spec(), data, nullptr, cfg);
    EXPECT_EQ(calls, 4u * 4u);  // 60 rows in batches of 16
}

TEST(TrainRun, DivergenceAbortsWithLocation) {
    const Dataset data = gen_blobs(20, 3, 4, 0.8, 2);
    auto cfg = quick_config(RunMode::CrossEntropy);
    cfg.lr = 1e200;
    try {
        train_run(tiny_spec(), data, nullptr, cfg);
        FAIL();
    } catch (const TrainingAborted& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
    }
}

TEST(TrainRun, LabelSmoothingModeNeedsAlpha) {
    auto cfg = quick_config(RunMode::LabelSmoothing);
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.distill.label_smoothing_alpha = 0.1;
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Evaluate, AccuracyIsArgmaxRecount) {
    std::mt19937_64 rng(3);
    const Tensor logits = testing::random_tensor({50, 4}, rng);
    std::vector<int> labels(50);
    for (auto& y : labels) y = static_cast<int>(rng() % 4);
    const auto r = evaluate_logits(logits, labels);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 50; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < 4; ++j) {
            if (logits[i * 4 + j] > logits[i * 4 + best]) best = j;
        }
        hits += static_cast<int>(best) == labels[i];
    }
    EXPECT_DOUBLE_EQ(r.accuracy, hits / 50.0);
}

TEST(Evaluate, PerfectAndAdversarialLabels) {
    const Tensor logits = Tensor::from({3, 2}, {5, 0, 0, 5, 5, 0});
    const std::vector<int> right{0, 1, 0}, wrong{1, 0, 1};
    EXPECT_EQ(evaluate_logits(logits, right).accuracy, 1.0);
    EXPECT_EQ(evaluate_logits(logits, wrong).accuracy, 0.0);
}

TEST(RunModeNames, RoundTrip) {
    for (auto m : {RunMode::CrossEntropy, RunMode::StandardDropout, RunMode::SdDropout, RunMode::LabelSmoothing,
                   RunMode::SdDropoutKd}) {
        EXPECT_EQ(parse_run_mode(to_string(m)), m);
    }
}

}  // namespace
}  // namespace sdd
