#pragma once

// Checkpoint file layout:
//
//   SDDCKPT\n
//   manifest_bytes=<n>\n
//   <n bytes of JSON manifest>
//   <payload: little-endian f64 values, tensors back to back>
//
// The manifest carries format_version, dtype "f64", the ModelSpec, and a
// tensor table of {name, shape, offset, nbytes} with offsets relative to
// the start of the payload.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "sdd/model.hpp"

namespace sdd {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const Parameters& params);
Parameters decode_checkpoint(const std::string& bytes, const std::optional<ModelSpec>& expected = {});

void save_checkpoint(const Parameters& params, const std::filesystem::path& path);
// When `expected` is given, a differing stored spec is rejected.
Parameters load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelSpec>& expected = {});

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace sdd
