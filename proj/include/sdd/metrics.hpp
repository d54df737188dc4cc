#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdd/data.hpp"
#include "sdd/model.hpp"
#include "sdd/trainer.hpp"

namespace sdd {

// ---- calibration ----------------------------------------------------------

struct CalibrationRecord {
    double confidence = 0.0;
    bool correct = false;
};

struct BinStats {
    std::size_t index = 0;  // 0-based; bin m covers ((m)/M, (m+1)/M]
    double low = 0.0;
    double high = 0.0;
    std::size_t count = 0;
    double acc = 0.0;
    double conf = 0.0;
};

struct EceResult {
    double ece = 0.0;
    std::vector<BinStats> bins;
};

std::vector<CalibrationRecord> calibration_records(const EvalResult& eval);

// Equal-width bins ((m-1)/M, m/M]; confidence 0 falls in the first bin.
// ECE = sum_m |B_m|/n * |acc(B_m) - conf(B_m)|.
EceResult ece(std::span<const CalibrationRecord> records, std::size_t bins = 10);

// Bin of `confidence` among `bins` equal-width right-closed bins.
std::size_t ece_bin(double confidence, std::size_t bins);

// ---- adversarial / corruption robustness ---------------------------------

struct AttackConfig {
    double epsilon = 0.2;
    std::optional<double> clip_min;
    std::optional<double> clip_max;
};

struct FgsmResult {
    Tensor adversarial;
    // epsilon * sign(grad), before clipping; every entry is -eps, 0 or +eps.
    std::vector<double> step;
};

// x' = clip(x + eps * sign(d CE / d x)), sign(0) = 0.
FgsmResult fgsm_attack(const Parameters& params, const Tensor& x, std::span<const int> labels,
                       const AttackConfig& cfg);

enum class Corruption { GaussianNoise, Brightness, Contrast };

std::string to_string(Corruption kind);
Corruption parse_corruption(const std::string& s);

// gaussian_noise: + N(0, 0.04 s); brightness: + 0.1 s; contrast: row mean
// + (x - mean)(1 - 0.1 s). Severity s in 1..5.
std::vector<double> corrupt(std::span<const double> features, std::size_t dim, Corruption kind,
                            int severity, std::uint64_t seed);
Dataset corrupt(const Dataset& data, Corruption kind, int severity, std::uint64_t seed);
std::vector<double> add_gaussian_noise(std::span<const double> features, double sigma,
                                       std::uint64_t seed);

// ---- out-of-distribution detection ---------------------------------------

struct OdinConfig {
    double temperature = 1000.0;
    double epsilon = 0.0014;
};

// x~ = x - eps * sign(-d log max softmax(z(x)/T) / dx);
// score = max softmax(z(x~)/T).
std::vector<double> odin_score(const Parameters& params, const Tensor& x, const OdinConfig& cfg);

struct OODMetrics {
    double fpr_at_95_tpr = 0.0;
    double detection_error = 0.0;
    double auroc = 0.0;
    double aupr_in = 0.0;
    double aupr_out = 0.0;
};

// Higher score means more in-distribution; a sample is called "in" when
// its score is >= the threshold.
OODMetrics ood_metrics(std::span<const double> in_scores, std::span<const double> out_scores);

double auroc(std::span<const double> positive, std::span<const double> negative);
// Average precision: sum over descending thresholds of (R_k - R_{k-1}) P_k.
double average_precision(std::span<const double> positive, std::span<const double> negative);

}  // namespace sdd
