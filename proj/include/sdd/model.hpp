#pragma once

// Split MLP classifier: backbone f produces features at the dropout
// position, head h maps (possibly masked) features to logits.

#include <cstdint>
#include <string>
#include <vector>

#include "sdd/tensor.hpp"

namespace sdd {

struct ModelSpec {
    std::size_t input_dim = 16;
    std::vector<std::size_t> hidden_dims{64, 64};
    // Zero or more hidden head widths followed by the class count.
    std::vector<std::size_t> head_dims{4};
    // Number of backbone layers applied before the dropout sample point.
    std::size_t dropout_position = 2;

    std::size_t num_classes() const { return head_dims.empty() ? 0 : head_dims.back(); }
    std::size_t feature_dim() const {
        return dropout_position == 0 ? input_dim : hidden_dims[dropout_position - 1];
    }
    // Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
    std::string describe() const;

    bool operator==(const ModelSpec&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Model weights. Copies are deep: each copy owns fresh leaf tensors.
class Parameters {
   public:
    Parameters() = default;
    Parameters(ModelSpec spec, std::vector<NamedTensor> tensors);
    Parameters(const Parameters& other);
    Parameters& operator=(const Parameters& other);
    Parameters(Parameters&&) noexcept = default;
    Parameters& operator=(Parameters&&) noexcept = default;

    const ModelSpec& spec() const { return spec_; }
    const std::vector<NamedTensor>& tensors() const { return tensors_; }
    std::vector<NamedTensor>& tensors() { return tensors_; }
    const Tensor& at(const std::string& name) const;
    std::size_t parameter_count() const;

    // Bitwise equality of spec, names, shapes and values.
    bool identical(const Parameters& other) const;

    // Per-layer weight [in x out] and bias [out] in forward order.
    const Tensor& weight(std::size_t layer) const { return tensors_[2 * layer].tensor; }
    const Tensor& bias(std::size_t layer) const { return tensors_[2 * layer + 1].tensor; }
    std::size_t layer_count() const { return tensors_.size() / 2; }

   private:
    ModelSpec spec_;
    std::vector<NamedTensor> tensors_;
};

// One keep row per example, or a single row shared by the whole batch.
struct DropoutMask {
    std::vector<double> keep;  // rows x dim, entries in {0, 1}
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::size_t rows = 1;

    std::size_t dim() const { return rows == 0 ? 0 : keep.size() / rows; }
    // Row i as a one-row mask.
    DropoutMask row(std::size_t i) const;
};

// Glorot-uniform weights in (-s, s), s = sqrt(6 / (fan_in + fan_out)); zero biases.
Parameters init_model(const ModelSpec& spec, std::uint64_t seed);

Tensor forward_features(const Parameters& params, const Tensor& x);
// Remaining backbone layers, head hidden layers and the output layer.
Tensor head_forward(const Parameters& params, const Tensor& features);
Tensor forward(const Parameters& params, const Tensor& x);

// Each entry kept with probability 1 - beta. Throws for beta outside [0, 1).
DropoutMask sample_mask(std::size_t dim, double beta, std::uint64_t seed);
// Independent rows from one seeded stream; row 0 equals sample_mask(dim, beta, seed).
DropoutMask sample_batch_mask(std::size_t rows, std::size_t dim, double beta, std::uint64_t seed);

// h((mask * features) / (1 - beta)). A one-row mask is shared across the
// batch, otherwise row i masks example i.
Tensor masked_head_forward(const Parameters& params, const Tensor& features,
                           const DropoutMask& mask);

Tensor standard_dropout_forward(const Parameters& params, const Tensor& x, double beta,
                                std::uint64_t seed, bool training);

}  // namespace sdd
