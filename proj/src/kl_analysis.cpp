#include "sdd/kl_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sdd/distill.hpp"
#include "sdd/rng.hpp"

namespace sdd {

namespace {

void require_positive(const PairJacobian& pj) {
    for (std::size_t i = 0; i < pj.num_classes(); ++i) {
        if (!(pj.p[i] > 0.0) || !(pj.q[i] > 0.0)) {
            throw std::domain_error("class " + std::to_string(i) +
                                    " has a zero probability; probability ratio undefined");
        }
    }
}

// Adds coefficient * row into out.
void axpy(double coefficient, std::span<const double> row, std::vector<double>& out) {
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += coefficient * row[j];
}

double l1_norm(std::span<const double> v) {
    double total = 0.0;
    for (double x : v) total += std::abs(x);
    return total;
}

}  // namespace

std::vector<double> flatten_gradient(const GradientMap& grads, const Parameters& params) {
    std::vector<double> flat;
    flat.reserve(params.parameter_count());
    for (const auto& nt : params.tensors()) {
        const auto g = grads.get(nt.tensor);
        flat.insert(flat.end(), g.begin(), g.end());
    }
    return flat;
}

PairJacobian pair_jacobian(const Parameters& params, const Tensor& x, const DropoutMask& mask_u,
                           const DropoutMask& mask_v, double temperature) {
    if (x.rank() != 2 || x.dim(0) != 1) {
        throw ShapeError("pair_jacobian expects a single example [1 x d], got " + to_string(x.shape()));
    }
    const Tensor features = forward_features(params, x);
    const Tensor p = softmax_with_temperature(masked_head_forward(params, features, mask_u), temperature).probs;
    const Tensor q = softmax_with_temperature(masked_head_forward(params, features, mask_v), temperature).probs;

    PairJacobian pj;
    const std::size_t n = p.size();
    pj.p.assign(p.values().begin(), p.values().end());
    pj.q.assign(q.values().begin(), q.values().end());
    pj.num_params = params.parameter_count();
    pj.jac_p.reserve(n * pj.num_params);
    pj.jac_q.reserve(n * pj.num_params);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> pick(n, 0.0);
        pick[i] = 1.0;
        const Tensor selector = Tensor::from({1, n}, std::move(pick));
        const auto gp = flatten_gradient(backward(sum(mul(p, selector))), params);
        const auto gq = flatten_gradient(backward(sum(mul(q, selector))), params);
        pj.jac_p.insert(pj.jac_p.end(), gp.begin(), gp.end());
        pj.jac_q.insert(pj.jac_q.end(), gq.begin(), gq.end());
    }
    return pj;
}

std::vector<double> lemma1_forward_grad(const PairJacobian& pj) {
    require_positive(pj);
    std::vector<double> out(pj.num_params, 0.0);
    for (std::size_t i = 0; i < pj.num_classes(); ++i) {
        axpy(1.0 - pj.p[i] / pj.q[i], pj.row_q(i), out);
        axpy(1.0 - pj.q[i] / pj.p[i], pj.row_p(i), out);
    }
    return out;
}

std::vector<double> lemma1_reverse_grad(const PairJacobian& pj) {
    require_positive(pj);
    std::vector<double> out(pj.num_params, 0.0);
    for (std::size_t i = 0; i < pj.num_classes(); ++i) {
        axpy(std::log(pj.p[i] / pj.q[i]), pj.row_p(i), out);
        axpy(std::log(pj.q[i] / pj.p[i]), pj.row_q(i), out);
    }
    return out;
}

AssumptionStats assumption_stats(const PairJacobian& pj) {
    return assumption_stats(std::span<const PairJacobian>(&pj, 1));
}

AssumptionStats assumption_stats(std::span<const PairJacobian> pjs) {
    AssumptionStats stats;
    std::size_t a1_hold = 0, a2_hold = 0;
    double sum_r = 0.0, sum_r1 = 0.0;
    for (const auto& pj : pjs) {
        require_positive(pj);
        for (std::size_t i = 0; i < pj.num_classes(); ++i) {
            const auto gp = pj.row_p(i);
            const auto gq = pj.row_q(i);
            for (std::size_t j = 0; j < pj.num_params; ++j) {
                if (gp[j] == 0.0 || gq[j] == 0.0) continue;
                const double prob_ratio = std::abs(pj.p[i] / pj.q[i]);
                const double grad_ratio = std::abs(gp[j] / gq[j]);
                ++stats.a1_pairs;
                if (prob_ratio == 1.0 || grad_ratio == 1.0) {
                    ++stats.a1_boundary;
                } else if ((prob_ratio - 1.0) * (grad_ratio - 1.0) > 0.0) {
                    ++a1_hold;
                }
                const double rho = std::max(grad_ratio, 1.0 / grad_ratio);
                if (!(rho > 1.0)) continue;
                const double r = std::abs(std::log(prob_ratio));
                const double r1 = assumption2_bound(rho);
                ++stats.a2_pairs;
                sum_r += r;
                sum_r1 += r1;
                if (r <= r1) ++a2_hold;
            }
        }
    }
    if (stats.a1_pairs > 0) {
        stats.prob_a1 = static_cast<double>(a1_hold) / static_cast<double>(stats.a1_pairs);
    }
    if (stats.a2_pairs > 0) {
        const auto n = static_cast<double>(stats.a2_pairs);
        stats.mean_r = sum_r / n;
        stats.mean_r1 = sum_r1 / n;
        stats.a2_hold_fraction = static_cast<double>(a2_hold) / n;
    }
    return stats;
}

double proposition_gap(double p, double q, double dp, double dq) {
    if (!(p > 0.0) || !(q > 0.0) || !(dp > 0.0) || !(dq > 0.0)) {
        throw std::domain_error("proposition_gap requires positive inputs");
    }
    const double reverse = std::abs(std::log(p / q) * dq) + std::abs(std::log(q / p) * dp);
    const double forward = std::abs((1.0 - p / q) * dq) + std::abs((1.0 - q / p) * dp);
    return reverse - forward;
}

double k_function(double r, double rho) {
    return (1.0 + rho) * r - (std::expm1(r) - rho * std::expm1(-r));
}

std::pair<double, double> k_argmax_grid(double rho, double r_max, std::size_t points) {
    if (points < 2) throw std::invalid_argument("k_argmax_grid needs at least 2 points");
    std::pair<double, double> best{0.0, k_function(0.0, rho)};
    for (std::size_t i = 1; i < points; ++i) {
        const double r = r_max * static_cast<double>(i) / static_cast<double>(points - 1);
        const double v = k_function(r, rho);
        if (v > best.second) best = {r, v};
    }
    return best;
}

double assumption2_bound(double rho) {
    return std::abs(std::log(rho) + std::log(std::log(rho + (std::numbers::e - 1.0))));
}

double l_function(double rho) {
    if (!(rho >= 1.0)) throw std::domain_error("l_function requires rho >= 1");
    return k_function(std::log(rho) + std::log(std::log(rho + (std::numbers::e - 1.0))), rho);
}

std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

DirectionReport direction_report(const Parameters& params, const Tensor& batch,
                                 const DropoutMask& mask_u, const DropoutMask& mask_v,
                                 double temperature) {
    const Tensor features = forward_features(params, batch);
    const Tensor zu = masked_head_forward(params, features, mask_u);
    const Tensor zv = masked_head_forward(params, features, mask_v);
    const auto g_fw = flatten_gradient(backward(sdd_loss(zu, zv, temperature, FlowMode::Forward)), params);
    const auto g_rv = flatten_gradient(backward(sdd_loss(zu, zv, temperature, FlowMode::Reverse)), params);
    return {cosine_similarity(g_fw, g_rv), l1_norm(g_fw), l1_norm(g_rv)};
}

KlReport analyze_kl(const Parameters& params, const Tensor& probe, double beta,
                    double temperature, std::uint64_t seed) {
    if (probe.rank() != 2) throw ShapeError("probe batch must be 2-D, got " + to_string(probe.shape()));
    const std::size_t dim = params.spec().feature_dim();
    const std::size_t n = probe.dim(0), d = probe.dim(1);
    const DropoutMask u = sample_batch_mask(n, dim, beta, derive_mask_seed(seed, 0));
    const DropoutMask v = sample_batch_mask(n, dim, beta, derive_mask_seed(seed, 1));

    std::vector<PairJacobian> pjs(n);
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t r = 0; r < rows; ++r) {
        const auto row = probe.values().subspan(static_cast<std::size_t>(r) * d, d);
        pjs[static_cast<std::size_t>(r)] =
            pair_jacobian(params, Tensor::from({1, d}, {row.begin(), row.end()}),
                          u.row(static_cast<std::size_t>(r)), v.row(static_cast<std::size_t>(r)), temperature);
    }
    return {assumption_stats(pjs), direction_report(params, probe, u, v, temperature), n};
}

}  // namespace sdd
