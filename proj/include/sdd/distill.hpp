#pragma once

// Losses for dropout-sampled self-distillation.

#include <optional>
#include <span>
#include <string>

#include "sdd/tensor.hpp"

namespace sdd {

// Which side of each KL term receives gradient.
//   Forward: the reference (first) distribution is a constant.
//   Reverse: the approximating (second) distribution is a constant.
//   Both:    gradient flows through both.
enum class FlowMode { Forward, Reverse, Both };

std::string to_string(FlowMode mode);
FlowMode parse_flow_mode(const std::string& s);

struct DistillLossSpec {
    double temperature = 1.0;
    double lambda_sdd = 1.0;
    double lambda_kd = 0.0;
    FlowMode flow_mode = FlowMode::Both;
    double label_smoothing_alpha = 0.0;

    void validate() const;
};

// Floor applied to probabilities before taking logs inside the losses.
inline constexpr double kLogClamp = 1e-12;

struct Posterior {
    Tensor probs;  // batch x N
    double temperature = 1.0;
};

Posterior softmax_with_temperature(const Tensor& logits, double temperature);

// Mean negative log-likelihood at T = 1.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Cross-entropy against (1 - alpha) * onehot + alpha / N.
Tensor label_smoothing_loss(const Tensor& logits, std::span<const int> labels, double alpha);

// Batch mean of KL(p || q) with the detach pattern selected by `mode`.
Tensor kl_divergence(const Posterior& p, const Posterior& q, FlowMode mode);

// KL(P_u || P_v) + KL(P_v || P_u) on temperature-scaled posteriors.
Tensor sdd_loss(const Tensor& logits_u, const Tensor& logits_v, double temperature, FlowMode mode);

// ce + lambda_sdd * T^2 * sdd [+ lambda_kd * T^2 * kd_extra]
Tensor total_loss(const Tensor& ce, const Tensor& sdd, const std::optional<Tensor>& kd_extra,
                  const DistillLossSpec& spec);

}  // namespace sdd
