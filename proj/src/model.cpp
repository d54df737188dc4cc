#include "sdd/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "sdd/rng.hpp"

namespace sdd {

namespace {

std::string join(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
    return os.str();
}

Tensor linear(const Parameters& params, std::size_t layer, const Tensor& x) {
    return add(matmul(x, params.weight(layer)), params.bias(layer));
}

Tensor check_input(const Parameters& params, const Tensor& x, std::size_t expected,
                   const char* what) {
    if (x.rank() != 2 || x.dim(1) != expected) {
        throw ShapeError(std::string(what) + ": expected batch x " + std::to_string(expected) +
                         ", got " + to_string(x.shape()) + " for model " +
                         params.spec().describe());
    }
    return x;
}

}  // namespace

void ModelSpec::validate() const {
    if (input_dim == 0) throw std::invalid_argument("model.input_dim must be positive");
    for (auto d : hidden_dims) {
        if (d == 0) throw std::invalid_argument("model.hidden_dims entries must be positive");
    }
    if (head_dims.empty()) throw std::invalid_argument("model.head_dims must end with the class count");
    for (auto d : head_dims) {
        if (d == 0) throw std::invalid_argument("model.head_dims entries must be positive");
    }
    if (num_classes() < 2) throw std::invalid_argument("model needs at least 2 classes");
    if (dropout_position > hidden_dims.size()) {
        throw std::invalid_argument("model.dropout_position " + std::to_string(dropout_position) +
                                    " exceeds backbone depth " + std::to_string(hidden_dims.size()));
    }
}

std::string ModelSpec::describe() const {
    std::ostringstream os;
    os << "{input_dim=" << input_dim << ", hidden_dims=" << join(hidden_dims)
       << ", head_dims=" << join(head_dims) << ", dropout_position=" << dropout_position << '}';
    return os.str();
}

Parameters::Parameters(ModelSpec spec, std::vector<NamedTensor> tensors)
    : spec_(std::move(spec)), tensors_(std::move(tensors)) {
    spec_.validate();
    const std::size_t layers = spec_.hidden_dims.size() + spec_.head_dims.size();
    if (tensors_.size() != 2 * layers) {
        throw std::invalid_argument("expected " + std::to_string(2 * layers) + " tensors for " +
                                    spec_.describe() + ", got " + std::to_string(tensors_.size()));
    }
    std::size_t in = spec_.input_dim;
    std::size_t layer = 0;
    auto check = [&](std::size_t out) {
        const Shape w{in, out}, b{out};
        if (weight(layer).shape() != w || bias(layer).shape() != b) {
            throw ShapeError("layer " + std::to_string(layer) + " expects weight " + to_string(w) +
                             " and bias " + to_string(b) + ", got " +
                             to_string(weight(layer).shape()) + " and " +
                             to_string(bias(layer).shape()));
        }
        in = out;
        ++layer;
    };
    for (auto d : spec_.hidden_dims) check(d);
    for (auto d : spec_.head_dims) check(d);
}

Parameters::Parameters(const Parameters& other) : spec_(other.spec_) {
    tensors_.reserve(other.tensors_.size());
    for (const auto& nt : other.tensors_) {
        tensors_.push_back({nt.name, Tensor::from(nt.tensor.shape(),
                                                  {nt.tensor.values().begin(), nt.tensor.values().end()},
                                                  nt.tensor.requires_grad())});
    }
}

Parameters& Parameters::operator=(const Parameters& other) {
    if (this != &other) *this = Parameters(other);
    return *this;
}

const Tensor& Parameters::at(const std::string& name) const {
    for (const auto& nt : tensors_) {
        if (nt.name == name) return nt.tensor;
    }
    throw std::out_of_range("no parameter named " + name);
}

std::size_t Parameters::parameter_count() const {
    std::size_t n = 0;
    for (const auto& nt : tensors_) n += nt.tensor.size();
    return n;
}

bool Parameters::identical(const Parameters& other) const {
    if (!(spec_ == other.spec_) || tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        const auto& a = tensors_[i];
        const auto& b = other.tensors_[i];
        if (a.name != b.name || a.tensor.shape() != b.tensor.shape()) return false;
        if (std::memcmp(a.tensor.values().data(), b.tensor.values().data(),
                        a.tensor.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

Parameters init_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Engine eng(seed);
    std::vector<NamedTensor> tensors;
    std::size_t in = spec.input_dim;
    auto add_layer = [&](const std::string& prefix, std::size_t out) {
        const double s = std::sqrt(6.0 / static_cast<double>(in + out));
        std::vector<double> w(in * out);
        for (auto& v : w) v = (2.0 * uniform01(eng) - 1.0) * s;
        tensors.push_back({prefix + ".weight", Tensor::from({in, out}, std::move(w), true)});
        tensors.push_back({prefix + ".bias", Tensor::zeros({out}, true)});
        in = out;
    };
    for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i)
        add_layer("backbone." + std::to_string(i), spec.hidden_dims[i]);
    for (std::size_t i = 0; i < spec.head_dims.size(); ++i)
        add_layer("head." + std::to_string(i), spec.head_dims[i]);
    return Parameters(spec, std::move(tensors));
}

Tensor forward_features(const Parameters& params, const Tensor& x) {
    Tensor h = check_input(params, x, params.spec().input_dim, "forward_features");
    for (std::size_t layer = 0; layer < params.spec().dropout_position; ++layer) {
        h = relu(linear(params, layer, h));
    }
    return h;
}

Tensor head_forward(const Parameters& params, const Tensor& features) {
    const auto& spec = params.spec();
    Tensor h = check_input(params, features, spec.feature_dim(), "head_forward");
    const std::size_t last = params.layer_count() - 1;
    for (std::size_t layer = spec.dropout_position; layer < last; ++layer) {
        h = relu(linear(params, layer, h));
    }
    return linear(params, last, h);
}

Tensor forward(const Parameters& params, const Tensor& x) {
    return head_forward(params, forward_features(params, x));
}

DropoutMask sample_mask(std::size_t dim, double beta, std::uint64_t seed) {
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(beta));
    }
    return sample_batch_mask(1, dim, beta, seed);
}

DropoutMask DropoutMask::row(std::size_t i) const {
    if (i >= rows) throw std::out_of_range("mask row " + std::to_string(i) + " of " + std::to_string(rows));
    const auto first = keep.begin() + static_cast<std::ptrdiff_t>(i * dim());
    return {std::vector<double>(first, first + static_cast<std::ptrdiff_t>(dim())), beta, seed, 1};
}

DropoutMask sample_batch_mask(std::size_t rows, std::size_t dim, double beta, std::uint64_t seed) {
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(beta));
    }
    if (rows == 0) throw std::invalid_argument("batch mask needs at least one row");
    Engine eng(seed);
    DropoutMask mask{std::vector<double>(rows * dim), beta, seed, rows};
    for (auto& k : mask.keep) k = uniform01(eng) >= beta ? 1.0 : 0.0;
    return mask;
}

Tensor masked_head_forward(const Parameters& params, const Tensor& features,
                           const DropoutMask& mask) {
    const bool shared = mask.rows == 1;
    if (features.rank() != 2 || mask.dim() != features.dim(1) || (!shared && mask.rows != features.dim(0))) {
        throw ShapeError("mask of " + std::to_string(mask.rows) + " x " + std::to_string(mask.dim()) +
                         " does not match features " + to_string(features.shape()));
    }
    const Tensor keep = shared ? Tensor::from({mask.keep.size()}, mask.keep)
                               : Tensor::from(features.shape(), mask.keep);
    return head_forward(params, scale(mul(features, keep), 1.0 / (1.0 - mask.beta)));
}

Tensor standard_dropout_forward(const Parameters& params, const Tensor& x, double beta,
                                std::uint64_t seed, bool training) {
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(beta));
    }
    const Tensor features = forward_features(params, x);
    if (!training) return head_forward(params, features);
    return masked_head_forward(params, features,
                               sample_mask(params.spec().feature_dim(), beta, seed));
}

}  // namespace sdd
