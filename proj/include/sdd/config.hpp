#pragma once

// Run configuration: JSON file + dotted-path overrides, every field defaulted.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdd/data.hpp"
#include "sdd/metrics.hpp"
#include "sdd/model.hpp"
#include "sdd/trainer.hpp"

namespace sdd {

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct DataSpec {
    std::string kind = "blobs";  // blobs | spirals | csv | idx
    std::size_t n_per_class = 500;
    std::size_t num_classes = 4;
    std::size_t dim = 16;
    double sigma = 0.9;
    double noise = 0.2;
    std::uint64_t seed = 7;
    std::string path;    // csv
    std::string images;  // idx
    std::string labels;  // idx
    double val_fraction = 0.2;
};

struct CorruptionSettings {
    std::vector<std::string> kinds{"gaussian_noise", "brightness", "contrast"};
    std::vector<int> severities{1, 2, 3, 4, 5};
    std::uint64_t seed = 0;
};

struct OodSettings {
    OdinConfig odin;
    // Defaults to the validation split of `data`.
    std::optional<DataSpec> in_data;
    // Defaults to `data` with 3x the noise scale and a shifted seed.
    std::optional<DataSpec> out_data;
};

struct KlSettings {
    std::size_t probe_size = 64;
    std::uint64_t seed = 0;
    // Checkpoints analysed by kl-analyze; defaults to the run checkpoint.
    std::vector<std::string> checkpoints;
    // Record a per-epoch assumption/direction trace while training.
    bool trace = false;
};

struct ReportSettings {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::optional<std::size_t> epochs;
};

struct RunConfig {
    std::string output_dir = "runs/default";
    std::string checkpoint;  // defaults to <output_dir>/model.ckpt
    DataSpec data;
    ModelSpec model;
    TrainConfig train;
    std::size_t eval_bins = 10;
    AttackConfig attack;
    CorruptionSettings corruption;
    OodSettings ood;
    KlSettings kl;
    ReportSettings report;

    std::filesystem::path checkpoint_path() const;
};

// Parses `text` (may be "{}"), applies overrides "a.b.c=value" (value read
// as JSON when it parses, else as a string), fills defaults and checks
// consistency. Throws ConfigError.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const DataSpec& spec);

Split load_data(const DataSpec& spec);
// Whole dataset without splitting (used for OOD sets).
Dataset load_dataset(const DataSpec& spec);

}  // namespace sdd
