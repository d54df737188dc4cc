#pragma once

// Closed-form gradients of the forward and reverse symmetric KL terms, the
// statistics of the two assumptions behind the "reverse gradient is larger"
// argument, and the scalar functions used in that argument.
//
// Conventions: p is the posterior under mask u, q under mask v. Gradients are
// flattened over parameters in Parameters::tensors() order.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sdd/model.hpp"
#include "sdd/tensor.hpp"

namespace sdd {

struct PairJacobian {
    std::vector<double> p;
    std::vector<double> q;
    std::size_t num_params = 0;
    std::vector<double> jac_p;  // N x num_params, row i = d p_i / d theta
    std::vector<double> jac_q;

    std::size_t num_classes() const { return p.size(); }
    std::span<const double> row_p(std::size_t i) const {
        return std::span(jac_p).subspan(i * num_params, num_params);
    }
    std::span<const double> row_q(std::size_t i) const {
        return std::span(jac_q).subspan(i * num_params, num_params);
    }
};

struct AssumptionStats {
    // Fraction of (class, parameter) pairs with both gradients nonzero for
    // which (|p/q| - 1)(|dp/dq| - 1) > 0. Pairs where either ratio is exactly
    // 1 count against the fraction and are tallied in `a1_boundary`.
    std::optional<double> prob_a1;
    // Over pairs with rho = max(|dp/dq|, |dq/dp|) > 1, after swapping so
    // that p >= q: r = log(p/q), r1 = |log rho + log(log(rho + e - 1))|.
    std::optional<double> mean_r;
    std::optional<double> mean_r1;
    std::optional<double> a2_hold_fraction;
    std::size_t a1_pairs = 0;
    std::size_t a1_boundary = 0;
    std::size_t a2_pairs = 0;
};

struct DirectionReport {
    std::optional<double> cosine;  // absent when either gradient is zero
    double l1_forward = 0.0;
    double l1_reverse = 0.0;
};

// Flattened gradient over all parameters, zeros where the root does not reach.
std::vector<double> flatten_gradient(const GradientMap& grads, const Parameters& params);

// `x` is a single example of shape [1 x input_dim].
PairJacobian pair_jacobian(const Parameters& params, const Tensor& x, const DropoutMask& mask_u,
                           const DropoutMask& mask_v, double temperature);

// sum_i (1 - p_i/q_i) grad q_i + (1 - q_i/p_i) grad p_i
std::vector<double> lemma1_forward_grad(const PairJacobian& pj);
// sum_i log(p_i/q_i) grad p_i + log(q_i/p_i) grad q_i
std::vector<double> lemma1_reverse_grad(const PairJacobian& pj);

AssumptionStats assumption_stats(const PairJacobian& pj);
AssumptionStats assumption_stats(std::span<const PairJacobian> pjs);

// |log(p/q) dq| + |log(q/p) dp| - (|(1 - p/q) dq| + |(1 - q/p) dp|), with dp
// and dq gradient magnitudes. All four inputs must be positive.
double proposition_gap(double p, double q, double dp, double dq);

// (1 + rho) r - ((e^r - 1) + rho (1 - e^-r))
double k_function(double r, double rho);
// Grid argmax of k over [0, r_max] with `points` samples; returns (r, k(r)).
std::pair<double, double> k_argmax_grid(double rho, double r_max, std::size_t points);
// k(log rho + log(log(rho + e - 1))); rho >= 1.
double l_function(double rho);
double assumption2_bound(double rho);

// Absent when either vector has zero norm.
std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b);

// Forward-mode vs reverse-mode gradients of the SD loss on a batch.
DirectionReport direction_report(const Parameters& params, const Tensor& batch,
                                 const DropoutMask& mask_u, const DropoutMask& mask_v,
                                 double temperature);

struct KlReport {
    AssumptionStats stats;
    DirectionReport direction;
    std::size_t probe_size = 0;
};

// Samples per-example mask pairs from `seed` and evaluates both reports over every
// row of `probe`. Per-example Jacobians are computed in parallel.
KlReport analyze_kl(const Parameters& params, const Tensor& probe, double beta,
                    double temperature, std::uint64_t seed);

}  // namespace sdd
