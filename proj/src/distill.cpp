#include "sdd/distill.hpp"

#include <cmath>
#include <stdexcept>

namespace sdd {

std::string to_string(FlowMode mode) {
    switch (mode) {
        case FlowMode::Forward: return "forward";
        case FlowMode::Reverse: return "reverse";
        case FlowMode::Both: return "both";
    }
    return "?";
}

FlowMode parse_flow_mode(const std::string& s) {
    if (s == "forward") return FlowMode::Forward;
    if (s == "reverse") return FlowMode::Reverse;
    if (s == "both") return FlowMode::Both;
    throw std::invalid_argument("unknown flow mode '" + s + "' (expected forward, reverse or both)");
}

void DistillLossSpec::validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("distill.temperature must be positive");
    if (!(lambda_sdd >= 0.0)) throw std::invalid_argument("distill.lambda_sdd must be >= 0");
    if (!(lambda_kd >= 0.0)) throw std::invalid_argument("distill.lambda_kd must be >= 0");
    if (!(label_smoothing_alpha >= 0.0 && label_smoothing_alpha < 1.0)) {
        throw std::invalid_argument("distill.label_smoothing_alpha must lie in [0, 1)");
    }
}

namespace {

std::size_t check_labels(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw ShapeError("logits " + to_string(logits.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = logits.dim(1);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n) {
            throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(n) + ")");
        }
    }
    return n;
}

Tensor soft_target_ce(const Tensor& logits, const Tensor& target) {
    const double batch = static_cast<double>(logits.dim(0));
    const Tensor logp = log(clamp_min(softmax(logits), kLogClamp));
    return scale(sum(mul(target, logp)), -1.0 / batch);
}

void check_normalized(const Posterior& p) {
    const auto v = p.probs.values();
    const std::size_t cols = p.probs.shape().back();
    for (std::size_t r = 0; r < v.size() / cols; ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += v[r * cols + j];
        if (std::abs(total - 1.0) > 1e-6) {
            throw std::invalid_argument("posterior row " + std::to_string(r) + " sums to " +
                                        std::to_string(total));
        }
    }
}

}  // namespace

Posterior softmax_with_temperature(const Tensor& logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("temperature must be positive, got " + std::to_string(temperature));
    }
    const Tensor scaled = temperature == 1.0 ? logits : scale(logits, 1.0 / temperature);
    return {softmax(scaled), temperature};
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const std::size_t n = check_labels(logits, labels);
    std::vector<double> onehot(logits.size(), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) onehot[i * n + labels[i]] = 1.0;
    return soft_target_ce(logits, Tensor::from(logits.shape(), std::move(onehot)));
}

Tensor label_smoothing_loss(const Tensor& logits, std::span<const int> labels, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("label smoothing alpha must lie in [0, 1)");
    }
    const std::size_t n = check_labels(logits, labels);
    std::vector<double> target(logits.size(), alpha / static_cast<double>(n));
    for (std::size_t i = 0; i < labels.size(); ++i) target[i * n + labels[i]] += 1.0 - alpha;
    return soft_target_ce(logits, Tensor::from(logits.shape(), std::move(target)));
}

Tensor kl_divergence(const Posterior& p, const Posterior& q, FlowMode mode) {
    if (p.probs.shape() != q.probs.shape()) {
        throw ShapeError("shape mismatch in kl_divergence: " + to_string(p.probs.shape()) + " vs " +
                         to_string(q.probs.shape()));
    }
    check_normalized(p);
    check_normalized(q);
    const Tensor ref = mode == FlowMode::Forward ? detach(p.probs) : p.probs;
    const Tensor approx = mode == FlowMode::Reverse ? detach(q.probs) : q.probs;
    const Tensor gap = sub(log(clamp_min(ref, kLogClamp)), log(clamp_min(approx, kLogClamp)));
    const double batch = p.probs.rank() == 2 ? static_cast<double>(p.probs.dim(0)) : 1.0;
    return scale(sum(mul(ref, gap)), 1.0 / batch);
}

Tensor sdd_loss(const Tensor& logits_u, const Tensor& logits_v, double temperature, FlowMode mode) {
    if (logits_u.shape() != logits_v.shape()) {
        throw ShapeError("shape mismatch in sdd_loss: " + to_string(logits_u.shape()) + " vs " +
                         to_string(logits_v.shape()));
    }
    const Posterior pu = softmax_with_temperature(logits_u, temperature);
    const Posterior pv = softmax_with_temperature(logits_v, temperature);
    return add(kl_divergence(pu, pv, mode), kl_divergence(pv, pu, mode));
}

Tensor total_loss(const Tensor& ce, const Tensor& sdd, const std::optional<Tensor>& kd_extra,
                  const DistillLossSpec& spec) {
    const double t2 = spec.temperature * spec.temperature;
    Tensor total = add(ce, scale(sdd, spec.lambda_sdd * t2));
    if (kd_extra) total = add(total, scale(*kd_extra, spec.lambda_kd * t2));
    return total;
}

}  // namespace sdd
