#include "sdd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

namespace sdd {

namespace {

using nlohmann::json;

constexpr const char* kMagicLine = "SDDCKPT";

json spec_to_json(const ModelSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"hidden_dims", spec.hidden_dims},
            {"head_dims", spec.head_dims},
            {"dropout_position", spec.dropout_position}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec spec;
    spec.input_dim = j.at("input_dim").get<std::size_t>();
    spec.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    spec.head_dims = j.at("head_dims").get<std::vector<std::size_t>>();
    spec.dropout_position = j.at("dropout_position").get<std::size_t>();
    return spec;
}

void put_f64(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double get_f64(const char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{static_cast<unsigned char>(p[b])} << (8 * b);
    return std::bit_cast<double>(bits);
}

}  // namespace

std::string encode_checkpoint(const Parameters& params) {
    json tensors = json::array();
    std::string payload;
    for (const auto& nt : params.tensors()) {
        tensors.push_back({{"name", nt.name},
                           {"shape", nt.tensor.shape()},
                           {"offset", payload.size()},
                           {"nbytes", nt.tensor.size() * 8}});
        for (double v : nt.tensor.values()) put_f64(payload, v);
    }
    const json manifest = {{"format_version", kCheckpointVersion},
                           {"dtype", "f64"},
                           {"byte_order", "little"},
                           {"model_spec", spec_to_json(params.spec())},
                           {"tensors", tensors},
                           {"payload_bytes", payload.size()}};
    const std::string text = manifest.dump(2) + "\n";
    std::ostringstream os;
    os << kMagicLine << "\nmanifest_bytes=" << text.size() << '\n' << text << payload;
    return os.str();
}

Parameters decode_checkpoint(const std::string& bytes, const std::optional<ModelSpec>& expected) {
    std::size_t pos = bytes.find('\n');
    if (pos == std::string::npos || bytes.compare(0, pos, kMagicLine) != 0) {
        throw CheckpointError("not a checkpoint: missing SDDCKPT header");
    }
    const std::size_t line_end = bytes.find('\n', pos + 1);
    const std::string size_line = bytes.substr(pos + 1, line_end - pos - 1);
    const std::string key = "manifest_bytes=";
    if (line_end == std::string::npos || size_line.rfind(key, 0) != 0) {
        throw CheckpointError("malformed checkpoint: missing manifest_bytes line");
    }
    std::size_t manifest_bytes = 0;
    try {
        manifest_bytes = std::stoull(size_line.substr(key.size()));
    } catch (const std::exception&) {
        throw CheckpointError("malformed manifest_bytes value '" + size_line + "'");
    }
    const std::size_t manifest_start = line_end + 1;
    if (manifest_start + manifest_bytes > bytes.size()) {
        throw CheckpointError("truncated manifest: expected " + std::to_string(manifest_bytes) + " bytes");
    }
    json manifest;
    try {
        manifest = json::parse(bytes.substr(manifest_start, manifest_bytes));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("unparsable manifest: ") + e.what());
    }

    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw CheckpointError("checkpoint format version " + std::to_string(version) +
                                  " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
        }
        if (manifest.at("dtype").get<std::string>() != "f64") {
            throw CheckpointError("unsupported dtype " + manifest.at("dtype").get<std::string>());
        }
        const ModelSpec spec = spec_from_json(manifest.at("model_spec"));
        if (expected && !(*expected == spec)) {
            throw CheckpointError("checkpoint model spec " + spec.describe() +
                                  " differs from requested " + expected->describe());
        }
        const std::size_t payload_start = manifest_start + manifest_bytes;
        const std::size_t payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
        const std::size_t actual = bytes.size() - payload_start;
        if (actual != payload_bytes) {
            throw CheckpointError("payload length " + std::to_string(actual) +
                                  " disagrees with manifest payload_bytes " + std::to_string(payload_bytes));
        }
        std::vector<NamedTensor> tensors;
        for (const auto& entry : manifest.at("tensors")) {
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto nbytes = entry.at("nbytes").get<std::size_t>();
            const std::string name = entry.at("name").get<std::string>();
            if (nbytes != shape_size(shape) * 8 || offset + nbytes > payload_bytes) {
                throw CheckpointError("tensor " + name + " table entry inconsistent with shape " +
                                      to_string(shape) + " or payload length");
            }
            std::vector<double> values(shape_size(shape));
            const char* base = bytes.data() + payload_start + offset;
            for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_f64(base + 8 * i);
            tensors.push_back({name, Tensor::from(shape, std::move(values), true)});
        }
        try {
            return Parameters(spec, std::move(tensors));
        } catch (const std::invalid_argument& e) {
            throw CheckpointError(std::string("tensor table inconsistent with model spec: ") + e.what());
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed manifest: ") + e.what());
    }
}

void save_checkpoint(const Parameters& params, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(params));
}

Parameters load_checkpoint(const std::filesystem::path& path, const std::optional<ModelSpec>& expected) {
    return decode_checkpoint(read_file(path), expected);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace sdd
