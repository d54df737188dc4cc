#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sdd/model.hpp"
#include "sdd/tensor.hpp"

namespace sdd::testing {

// Small random split net with at most a few hundred parameters.
inline ModelSpec random_small_spec(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> width(2, 6), classes(2, 5), depth(1, 2);
    ModelSpec spec;
    spec.input_dim = width(rng);
    spec.hidden_dims.clear();
    for (std::size_t i = 0, n = depth(rng); i < n; ++i) spec.hidden_dims.push_back(width(rng));
    spec.head_dims = {classes(rng)};
    spec.dropout_position = spec.hidden_dims.size();
    return spec;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0,
                            bool requires_grad = false) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = n(rng);
    return Tensor::from(shape, std::move(v), requires_grad);
}

// Scratch directory unique to the calling test, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("sdd_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline double relative_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

}  // namespace sdd::testing
