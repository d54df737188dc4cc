#include "sdd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sdd/rng.hpp"

namespace sdd {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) throw DataFormatError("truncated header in " + path.string());
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t got, std::uint32_t expected, const std::filesystem::path& path) {
    if (got != expected) {
        std::ostringstream os;
        os << "wrong magic 0x" << std::hex << got << " in " << path.string() << " (expected 0x"
           << expected << ')';
        throw DataFormatError(os.str());
    }
}

std::size_t infer_classes(const std::vector<int>& labels) {
    const int top = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    return std::max<std::size_t>(2, static_cast<std::size_t>(top) + 1);
}

}  // namespace

void Dataset::validate() const {
    if (labels.empty()) throw DataFormatError("dataset is empty");
    if (dim == 0 || features.size() != labels.size() * dim) {
        throw DataFormatError("feature matrix does not match " + std::to_string(labels.size()) +
                              " rows of dimension " + std::to_string(dim));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw DataFormatError("label " + std::to_string(labels[i]) + " at row " +
                                  std::to_string(i) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features[i])) {
            throw DataFormatError("non-finite feature at row " + std::to_string(i / dim));
        }
    }
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * dim);
    for (auto i : indices) {
        const auto r = row(i);
        out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor::from({indices.size(), dim}, std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels[i]);
    return out;
}

Tensor Dataset::all_features() const { return Tensor::from({size(), dim}, features); }

Dataset Dataset::subset(std::span<const std::size_t> indices, std::string split_tag) const {
    Dataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.split = std::move(split_tag);
    out.labels = gather_labels(indices);
    out.features.reserve(indices.size() * dim);
    for (auto i : indices) {
        const auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
    }
    return out;
}

Dataset gen_blobs(std::size_t n_per_class, std::size_t num_classes, std::size_t dim, double sigma,
                  std::uint64_t seed) {
    if (n_per_class == 0 || num_classes < 2 || dim < 2 || !(sigma >= 0.0)) {
        throw std::invalid_argument("gen_blobs: need n_per_class >= 1, num_classes >= 2, dim >= 2, sigma >= 0");
    }
    Engine eng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset data;
    data.dim = dim;
    data.num_classes = num_classes;
    data.features.reserve(n_per_class * num_classes * dim);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
        for (std::size_t k = 0; k < n_per_class; ++k) {
            for (std::size_t j = 0; j < dim; ++j) {
                const double centre = j == 0 ? 2.0 * std::cos(angle) : j == 1 ? 2.0 * std::sin(angle) : 0.0;
                data.features.push_back(centre + sigma * noise(eng));
            }
            data.labels.push_back(static_cast<int>(c));
        }
    }
    data.validate();
    return data;
}

Dataset gen_spirals(std::size_t n_per_class, std::size_t num_classes, double noise,
                    std::uint64_t seed) {
    if (n_per_class == 0 || num_classes < 2 || !(noise >= 0.0)) {
        throw std::invalid_argument("gen_spirals: need n_per_class >= 1, num_classes >= 2, noise >= 0");
    }
    Engine eng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset data;
    data.dim = 2;
    data.num_classes = num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double offset = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
        for (std::size_t k = 0; k < n_per_class; ++k) {
            // One and a half turns; radius grows linearly with the swept angle.
            const double s = (static_cast<double>(k) + 0.5) / static_cast<double>(n_per_class);
            const double phi = 1.0 + 3.0 * std::numbers::pi * s;
            const double radius = phi / std::numbers::pi;
            data.features.push_back(radius * std::cos(phi + offset) + noise * gauss(eng));
            data.features.push_back(radius * std::sin(phi + offset) + noise * gauss(eng));
            data.labels.push_back(static_cast<int>(c));
        }
    }
    data.validate();
    return data;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img = read_bytes(images);
    const auto lab = read_bytes(labels);
    check_magic(read_be32(img, 0, images), kIdxImagesMagic, images);
    check_magic(read_be32(lab, 0, labels), kIdxLabelsMagic, labels);

    const std::size_t n = read_be32(img, 4, images);
    const std::size_t rows = read_be32(img, 8, images);
    const std::size_t cols = read_be32(img, 12, images);
    const std::size_t n_labels = read_be32(lab, 4, labels);
    if (n != n_labels) {
        throw DataFormatError("count mismatch: " + std::to_string(n) + " images in " + images.string() +
                              " vs " + std::to_string(n_labels) + " labels in " + labels.string());
    }
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + n * pixels) {
        throw DataFormatError("truncated payload in " + images.string() + ": expected " +
                              std::to_string(16 + n * pixels) + " bytes, got " + std::to_string(img.size()));
    }
    if (lab.size() < 8 + n) {
        throw DataFormatError("truncated payload in " + labels.string() + ": expected " +
                              std::to_string(8 + n) + " bytes, got " + std::to_string(lab.size()));
    }
    Dataset data;
    data.dim = pixels;
    data.features.resize(n * pixels);
    for (std::size_t i = 0; i < n * pixels; ++i) data.features[i] = img[16 + i] / 255.0;
    data.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) data.labels[i] = lab[8 + i];
    data.num_classes = infer_classes(data.labels);
    data.validate();
    return data;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataFormatError("missing header row in " + path.string());
    Dataset data;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() < 2) {
            throw DataFormatError(path.string() + ":" + std::to_string(line_no) + ": need features and a label");
        }
        if (data.dim == 0) data.dim = cells.size() - 1;
        if (cells.size() - 1 != data.dim) {
            throw DataFormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(data.dim + 1) + " columns");
        }
        try {
            for (std::size_t j = 0; j + 1 < cells.size(); ++j) data.features.push_back(std::stod(cells[j]));
            std::size_t used = 0;
            const int label = std::stoi(cells.back(), &used);
            data.labels.push_back(label);
        } catch (const std::logic_error&) {
            throw DataFormatError(path.string() + ":" + std::to_string(line_no) + ": unparsable value");
        }
    }
    data.num_classes = infer_classes(data.labels);
    data.validate();
    return data;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t epoch_seed) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine eng(epoch_seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(eng)]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Split split_dataset(const Dataset& data, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw std::invalid_argument("val_fraction must lie in [0, 1)");
    }
    const auto order = batch_iter(data.size(), data.size(), derive_seed(seed, kSplitStream, 0)).front();
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(data.size())));
    const std::span<const std::size_t> all(order);
    return {data.subset(all.subspan(n_val), "train"), data.subset(all.first(n_val), "val")};
}

}  // namespace sdd
