#pragma once

// Datasets: synthetic generators, IDX / CSV ingestion, seeded batching.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdd/tensor.hpp"

namespace sdd {

class DataFormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    std::vector<double> features;  // n x dim, row-major
    std::vector<int> labels;
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::string split = "train";

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span(features).subspan(i * dim, dim);
    }
    // Throws DataFormatError on empty data, out-of-range labels or non-finite features.
    void validate() const;

    // Batch of rows [indices.size() x dim].
    Tensor gather(std::span<const std::size_t> indices) const;
    std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
    Tensor all_features() const;
    Dataset subset(std::span<const std::size_t> indices, std::string split_tag) const;
};

// Class c is centred at radius 2 on the first two coordinates at angle
// 2*pi*c/N with isotropic Gaussian noise of standard deviation sigma.
Dataset gen_blobs(std::size_t n_per_class, std::size_t num_classes, std::size_t dim, double sigma,
                  std::uint64_t seed);

// Interleaved 2-D Archimedean spirals, arm c rotated by 2*pi*c/N.
Dataset gen_spirals(std::size_t n_per_class, std::size_t num_classes, double noise,
                    std::uint64_t seed);

// Big-endian IDX: images u8 3-D (magic 0x00000803), labels u8 1-D (0x00000801).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Header row, then one example per line; the last column is an integer label.
Dataset load_csv(const std::filesystem::path& path);

// Seeded Fisher-Yates order split into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t epoch_seed);

struct Split {
    Dataset train;
    Dataset val;
};

// Seeded shuffle, the first round(val_fraction * n) rows become validation.
Split split_dataset(const Dataset& data, double val_fraction, std::uint64_t seed);

}  // namespace sdd
