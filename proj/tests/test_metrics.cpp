#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "sdd/metrics.hpp"

namespace sdd {
namespace {

// Two-pass oracle: first collect the members of each bin by comparing
// against the bin edges, then average.
double ece_oracle(const std::vector<CalibrationRecord>& rs, std::size_t bins) {
    double total = 0.0;
    const double n = static_cast<double>(rs.size());
    for (std::size_t m = 0; m < bins; ++m) {
        const double lo = static_cast<double>(m) / bins, hi = static_cast<double>(m + 1) / bins;
        std::vector<CalibrationRecord> members;
        for (const auto& r : rs) {
            if ((r.confidence > lo || (m == 0 && r.confidence == 0.0)) && r.confidence <= hi) members.push_back(r);
        }
        if (members.empty()) continue;
        double conf = 0.0, acc = 0.0;
        for (const auto& r : members) conf += r.confidence;
        for (const auto& r : members) acc += r.correct ? 1.0 : 0.0;
        const double c = static_cast<double>(members.size());
        total += (c / n) * std::abs(acc / c - conf / c);
    }
    return total;
}

TEST(Ece, PerfectConfidentModelIsCalibrated) {
    const std::vector<CalibrationRecord> rs(10, {1.0, true});
    EXPECT_EQ(ece(rs).ece, 0.0);
}

TEST(Ece, HandBinning) {
    const std::vector<CalibrationRecord> rs{{0.95, true}, {0.95, false}, {0.55, true}, {0.55, true}};
    const auto r = ece(rs, 10);
    EXPECT_NEAR(r.ece, 0.45, 1e-15);
    EXPECT_EQ(r.bins[9].count, 2u);
    EXPECT_EQ(r.bins[5].count, 2u);
}

TEST(Ece, BoundaryConfidenceGoesToLowerBin) {
    EXPECT_EQ(ece_bin(0.3, 10), 2u);
    EXPECT_EQ(ece_bin(0.7, 10), 6u);
    EXPECT_EQ(ece_bin(0.0, 10), 0u);
    EXPECT_EQ(ece_bin(1.0, 10), 9u);
    EXPECT_EQ(ece_bin(std::nextafter(0.3, 1.0), 10), 3u);
}

TEST(Ece, MatchesOracleExactly) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<CalibrationRecord> rs(10000);
    for (auto& r : rs) {
        // Mix in exact bin edges.
        r.confidence = rng() % 10 == 0 ? static_cast<double>(rng() % 11) / 10.0 : u(rng);
        r.correct = u(rng) < r.confidence;
    }
    EXPECT_EQ(ece(rs, 10).ece, ece_oracle(rs, 10));
}

TEST(Ece, RejectsEmptyAndOutOfRange) {
    EXPECT_THROW(ece({}), std::invalid_argument);
    const std::vector<CalibrationRecord> bad{{1.5, true}};
    EXPECT_THROW(ece(bad), std::invalid_argument);
}

ModelSpec attack_spec() {
    ModelSpec s;
    s.input_dim = 3;
    s.hidden_dims = {6};
    s.head_dims = {3};
    s.dropout_position = 1;
    return s;
}

TEST(Fgsm, ZeroEpsilonLeavesInputUnchanged) {
    std::mt19937_64 rng(1);
    const Parameters p = init_model(attack_spec(), 2);
    const Tensor x = testing::random_tensor({4, 3}, rng);
    const std::vector<int> y{0, 1, 2, 0};
    const auto r = fgsm_attack(p, x, y, {0.0, {}, {}});
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(r.adversarial[i], x[i]);
}

TEST(Fgsm, StepIsEpsilonTimesGradientSign) {
    std::mt19937_64 rng(1);
    const Parameters p = init_model(attack_spec(), 2);
    const Tensor x = testing::random_tensor({4, 3}, rng);
    const std::vector<int> y{0, 1, 2, 0};
    const Tensor input = Tensor::from(x.shape(), {x.values().begin(), x.values().end()}, true);
    const auto g = backward(cross_entropy(forward(p, input), y)).get(input);
    const auto r = fgsm_attack(p, x, y, AttackConfig{});
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double expected = g[i] > 0 ? 0.2 : g[i] < 0 ? -0.2 : 0.0;
        EXPECT_EQ(r.step[i], expected);
        EXPECT_LE(std::abs(r.adversarial[i] - x[i]), 0.2 + 1e-15);
    }
}

TEST(Fgsm, ClipBoxIsApplied) {
    std::mt19937_64 rng(1);
    const Parameters p = init_model(attack_spec(), 2);
    const Tensor x = Tensor::from({1, 3}, {0.0, 0.5, 1.0});
    const std::vector<int> y{1};
    const auto r = fgsm_attack(p, x, y, {0.3, 0.0, 1.0});
    for (double v : r.adversarial.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Corruption, BrightnessOnConstantBatch) {
    const std::vector<double> x(12, 0.3);
    for (double v : corrupt(x, 4, Corruption::Brightness, 2, 0)) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Corruption, GaussianDeterministicAndSeverityChecked) {
    const std::vector<double> x(40, 0.1);
    EXPECT_EQ(corrupt(x, 4, Corruption::GaussianNoise, 3, 5), corrupt(x, 4, Corruption::GaussianNoise, 3, 5));
    EXPECT_NE(corrupt(x, 4, Corruption::GaussianNoise, 3, 5), corrupt(x, 4, Corruption::GaussianNoise, 3, 6));
    EXPECT_THROW(corrupt(x, 4, Corruption::GaussianNoise, 0, 5), std::invalid_argument);
    EXPECT_THROW(corrupt(x, 4, Corruption::Contrast, 6, 5), std::invalid_argument);
}

TEST(Corruption, NoiseVanishesAtZeroSigma) {
    const std::vector<double> x{0.1, -0.4, 2.0};
    EXPECT_EQ(add_gaussian_noise(x, 0.0, 3), x);
}

TEST(Corruption, ContrastShrinksTowardsRowMean) {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    const auto y = corrupt(x, 2, Corruption::Contrast, 5, 0);
    EXPECT_NEAR(y[0], 0.25, 1e-15);
    EXPECT_NEAR(y[1], 0.75, 1e-15);
    EXPECT_NEAR(y[2], 2.25, 1e-15);
}

TEST(Odin, PlainSettingsGiveMaxSoftmax) {
    std::mt19937_64 rng(4);
    const Parameters p = init_model(attack_spec(), 5);
    const Tensor x = testing::random_tensor({5, 3}, rng);
    const auto s = odin_score(p, x, {1.0, 0.0});
    const Tensor probs = softmax(forward(p, x));
    for (std::size_t i = 0; i < 5; ++i) {
        const double best = *std::max_element(probs.values().begin() + 3 * i, probs.values().begin() + 3 * i + 3);
        EXPECT_NEAR(s[i], best, 1e-15);
    }
}

TEST(Odin, HugeTemperatureApproachesUniform) {
    std::mt19937_64 rng(4);
    const Parameters p = init_model(attack_spec(), 5);
    for (double v : odin_score(p, testing::random_tensor({5, 3}, rng), {1e6, 0.0014})) {
        EXPECT_NEAR(v, 1.0 / 3.0, 1e-3);
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Odin, PerturbationRaisesScore) {
    std::mt19937_64 rng(4);
    const Parameters p = init_model(attack_spec(), 5);
    const Tensor x = testing::random_tensor({8, 3}, rng);
    const auto plain = odin_score(p, x, {10.0, 0.0});
    const auto moved = odin_score(p, x, {10.0, 0.01});
    for (std::size_t i = 0; i < 8; ++i) EXPECT_GE(moved[i], plain[i] - 1e-12);
}

TEST(Ood, PerfectSeparation) {
    const std::vector<double> in{0.9, 0.8}, out{0.1, 0.2};
    const auto m = ood_metrics(in, out);
    EXPECT_EQ(m.auroc, 1.0);
    EXPECT_EQ(m.detection_error, 0.0);
    EXPECT_EQ(m.fpr_at_95_tpr, 0.0);
    EXPECT_EQ(m.aupr_in, 1.0);
    EXPECT_EQ(m.aupr_out, 1.0);
}

TEST(Ood, HandExamples) {
    const std::vector<double> in{0.9, 0.6};
    EXPECT_EQ(ood_metrics(in, std::vector<double>{0.8, 0.5}).auroc, 0.75);
    EXPECT_EQ(ood_metrics(in, std::vector<double>{0.7, 0.5}).fpr_at_95_tpr, 0.5);
}

double auroc_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
    double credit = 0.0;
    for (double p : pos) {
        for (double n : neg) credit += p > n ? 1.0 : p == n ? 0.5 : 0.0;
    }
    return credit / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Precision at each positive, averaged with ties resolved as one step.
double ap_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
    std::vector<double> thresholds(pos);
    thresholds.insert(thresholds.end(), neg.begin(), neg.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double area = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        const double tp = static_cast<double>(std::count_if(pos.begin(), pos.end(), [&](double s) { return s >= t; }));
        const double fp = static_cast<double>(std::count_if(neg.begin(), neg.end(), [&](double s) { return s >= t; }));
        const double recall = tp / static_cast<double>(pos.size());
        area += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return area;
}

TEST(Ood, MatchesPairwiseAndStepOracles) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> in(1 + rng() % 40), out(1 + rng() % 40);
        // Coarse grid forces ties.
        for (auto& s : in) s = std::round(u(rng) * 20.0) / 20.0 + 0.1;
        for (auto& s : out) s = std::round(u(rng) * 20.0) / 20.0;
        const auto m = ood_metrics(in, out);
        EXPECT_NEAR(m.auroc, auroc_oracle(in, out), 1e-9);
        EXPECT_NEAR(m.aupr_in, ap_oracle(in, out), 1e-9);
        std::vector<double> nin, nout;
        for (double s : in) nin.push_back(-s);
        for (double s : out) nout.push_back(-s);
        EXPECT_NEAR(m.aupr_out, ap_oracle(nout, nin), 1e-9);
        EXPECT_LE(m.detection_error, 0.5);
        EXPECT_GE(m.detection_error, 0.0);
    }
}

TEST(Ood, IdenticalScoresGiveHalfAuroc) {
    const std::vector<double> s{0.3, 0.7, 0.7, 0.1};
    EXPECT_EQ(auroc(s, s), 0.5);
}

TEST(Ood, EmptyInputRejected) {
    EXPECT_THROW(ood_metrics(std::vector<double>{}, std::vector<double>{0.5}), std::invalid_argument);
}

}  // namespace
}  // namespace sdd
