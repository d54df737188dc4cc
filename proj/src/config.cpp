#include "sdd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "sdd/checkpoint.hpp"

namespace sdd {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Section {
   public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + " must be an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, _] : j_.items()) {
            if (!used_.contains(key)) throw ConfigError("unknown config key " + where(key));
        }
    }

    template <class T>
    void get(const char* key, T& out) {
        used_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("bad value for " + where(key) + ": " + e.what());
        }
    }

    template <class T>
    void get_optional(const char* key, std::optional<T>& out) {
        used_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T value{};
        get(key, value);
        out = value;
    }

    // A null value counts as absent but is still a known key.
    bool has(const char* key) {
        used_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    const json& sub(const char* key) {
        used_.insert(key);
        return j_.at(key);
    }
    std::string where(const std::string& key) const {
        return path_.empty() ? key : key.empty() ? path_ : path_ + "." + key;
    }

   private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

DataSpec parse_data(const json& j, const std::string& path) {
    DataSpec d;
    Section s(j, path);
    s.get("kind", d.kind);
    s.get("n_per_class", d.n_per_class);
    s.get("num_classes", d.num_classes);
    s.get("dim", d.dim);
    s.get("sigma", d.sigma);
    s.get("noise", d.noise);
    s.get("seed", d.seed);
    s.get("path", d.path);
    s.get("images", d.images);
    s.get("labels", d.labels);
    s.get("val_fraction", d.val_fraction);
    if (d.kind != "blobs" && d.kind != "spirals" && d.kind != "csv" && d.kind != "idx") {
        throw ConfigError(s.where("kind") + ": unknown data kind '" + d.kind + "'");
    }
    if (d.kind == "csv" && d.path.empty()) throw ConfigError(s.where("path") + " is required for csv data");
    if (d.kind == "idx" && (d.images.empty() || d.labels.empty())) {
        throw ConfigError(path + ": idx data needs images and labels");
    }
    if (d.kind == "spirals") d.dim = 2;
    return d;
}

void set_dotted(json& root, const std::string& override_text) {
    const auto eq = override_text.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + override_text + "' is not of the form key.path=value");
    }
    const std::string key = override_text.substr(0, eq);
    const std::string raw = override_text.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &root;
    std::stringstream ss(key);
    std::vector<std::string> parts;
    for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        json& next = (*node)[parts[i]];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ConfigError("override '" + key + "': " + parts[i] + " is not a section");
        node = &next;
    }
    (*node)[parts.back()] = value;
}

}  // namespace

std::filesystem::path RunConfig::checkpoint_path() const {
    if (!checkpoint.empty()) return checkpoint;
    return std::filesystem::path(output_dir) / "model.ckpt";
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");
    for (const auto& o : overrides) set_dotted(root, o);

    RunConfig c;
    Section top(root, "");
    top.get("output_dir", c.output_dir);
    top.get("checkpoint", c.checkpoint);
    if (top.has("data")) c.data = parse_data(top.sub("data"), "data");

    // Model fields left at 0 / empty are inferred from the data.
    c.model.input_dim = 0;
    c.model.head_dims.clear();
    std::optional<std::size_t> dropout_position;
    if (top.has("model")) {
        Section s(top.sub("model"), "model");
        s.get("input_dim", c.model.input_dim);
        s.get("hidden_dims", c.model.hidden_dims);
        s.get("head_dims", c.model.head_dims);
        s.get_optional("dropout_position", dropout_position);
    }
    c.model.dropout_position = dropout_position.value_or(c.model.hidden_dims.size());

    if (top.has("train")) {
        Section s(top.sub("train"), "train");
        s.get("lr", c.train.lr);
        s.get("momentum", c.train.momentum);
        s.get("weight_decay", c.train.weight_decay);
        s.get("epochs", c.train.epochs);
        s.get("batch_size", c.train.batch_size);
        s.get("milestones", c.train.milestones);
        s.get("gamma", c.train.gamma);
        s.get("seed", c.train.seed);
        s.get("beta", c.train.beta);
        std::string mode = to_string(c.train.run_mode);
        s.get("run_mode", mode);
        try {
            c.train.run_mode = parse_run_mode(mode);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("train.run_mode: ") + e.what());
        }
    }
    if (top.has("distill")) {
        Section s(top.sub("distill"), "distill");
        s.get("temperature", c.train.distill.temperature);
        s.get("lambda_sdd", c.train.distill.lambda_sdd);
        s.get("lambda_kd", c.train.distill.lambda_kd);
        s.get("label_smoothing_alpha", c.train.distill.label_smoothing_alpha);
        std::string flow = to_string(c.train.distill.flow_mode);
        s.get("flow_mode", flow);
        try {
            c.train.distill.flow_mode = parse_flow_mode(flow);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("distill.flow_mode: ") + e.what());
        }
    }
    if (top.has("eval")) {
        Section s(top.sub("eval"), "eval");
        s.get("bins", c.eval_bins);
    }
    if (top.has("attack")) {
        Section s(top.sub("attack"), "attack");
        s.get("epsilon", c.attack.epsilon);
        s.get_optional("clip_min", c.attack.clip_min);
        s.get_optional("clip_max", c.attack.clip_max);
    }
    if (top.has("corruption")) {
        Section s(top.sub("corruption"), "corruption");
        s.get("kinds", c.corruption.kinds);
        s.get("severities", c.corruption.severities);
        s.get("seed", c.corruption.seed);
    }
    if (top.has("ood")) {
        Section s(top.sub("ood"), "ood");
        s.get("temperature", c.ood.odin.temperature);
        s.get("epsilon", c.ood.odin.epsilon);
        if (s.has("in_data")) c.ood.in_data = parse_data(s.sub("in_data"), "ood.in_data");
        if (s.has("out_data")) c.ood.out_data = parse_data(s.sub("out_data"), "ood.out_data");
    }
    if (top.has("kl")) {
        Section s(top.sub("kl"), "kl");
        s.get("probe_size", c.kl.probe_size);
        s.get("seed", c.kl.seed);
        s.get("checkpoints", c.kl.checkpoints);
        s.get("trace", c.kl.trace);
    }
    if (top.has("report")) {
        Section s(top.sub("report"), "report");
        s.get("seeds", c.report.seeds);
        s.get_optional("epochs", c.report.epochs);
    }

    if (!c.ood.out_data) {
        DataSpec out = c.data;
        out.sigma = 3.0 * c.data.sigma;
        out.noise = 3.0 * c.data.noise;
        out.seed = c.data.seed + 1;
        out.val_fraction = 0.0;
        if (out.kind == "blobs" || out.kind == "spirals") c.ood.out_data = out;
    }

    try {
        c.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.eval_bins < 1) throw ConfigError("eval.bins must be >= 1");
    if (!(c.attack.epsilon >= 0.0)) throw ConfigError("attack.epsilon must be >= 0");
    if (!(c.ood.odin.temperature > 0.0)) throw ConfigError("ood.temperature must be positive");
    if (!(c.ood.odin.epsilon >= 0.0)) throw ConfigError("ood.epsilon must be >= 0");
    for (const auto& k : c.corruption.kinds) {
        try {
            parse_corruption(k);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("corruption.kinds: ") + e.what());
        }
    }
    for (int sev : c.corruption.severities) {
        if (sev < 1 || sev > 5) throw ConfigError("corruption.severities entries must lie in 1..5");
    }
    if (c.kl.probe_size < 1) throw ConfigError("kl.probe_size must be >= 1");
    if (c.report.seeds.empty()) throw ConfigError("report.seeds must not be empty");
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

json to_json(const DataSpec& d) {
    return {{"kind", d.kind},   {"n_per_class", d.n_per_class}, {"num_classes", d.num_classes},
            {"dim", d.dim},     {"sigma", d.sigma},             {"noise", d.noise},
            {"seed", d.seed},   {"path", d.path},               {"images", d.images},
            {"labels", d.labels}, {"val_fraction", d.val_fraction}};
}

json to_json(const RunConfig& c) {
    json j;
    j["output_dir"] = c.output_dir;
    j["checkpoint"] = c.checkpoint_path().string();
    j["data"] = to_json(c.data);
    j["model"] = {{"input_dim", c.model.input_dim},
                  {"hidden_dims", c.model.hidden_dims},
                  {"head_dims", c.model.head_dims},
                  {"dropout_position", c.model.dropout_position}};
    j["train"] = {{"lr", c.train.lr},
                  {"momentum", c.train.momentum},
                  {"weight_decay", c.train.weight_decay},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"milestones", c.train.milestones},
                  {"gamma", c.train.gamma},
                  {"seed", c.train.seed},
                  {"beta", c.train.beta},
                  {"run_mode", to_string(c.train.run_mode)}};
    j["distill"] = {{"temperature", c.train.distill.temperature},
                    {"lambda_sdd", c.train.distill.lambda_sdd},
                    {"lambda_kd", c.train.distill.lambda_kd},
                    {"label_smoothing_alpha", c.train.distill.label_smoothing_alpha},
                    {"flow_mode", to_string(c.train.distill.flow_mode)}};
    j["eval"] = {{"bins", c.eval_bins}};
    j["attack"] = {{"epsilon", c.attack.epsilon},
                   {"clip_min", c.attack.clip_min ? json(*c.attack.clip_min) : json(nullptr)},
                   {"clip_max", c.attack.clip_max ? json(*c.attack.clip_max) : json(nullptr)}};
    j["corruption"] = {{"kinds", c.corruption.kinds},
                       {"severities", c.corruption.severities},
                       {"seed", c.corruption.seed}};
    j["ood"] = {{"temperature", c.ood.odin.temperature},
                {"epsilon", c.ood.odin.epsilon},
                {"in_data", c.ood.in_data ? to_json(*c.ood.in_data) : json(nullptr)},
                {"out_data", c.ood.out_data ? to_json(*c.ood.out_data) : json(nullptr)}};
    j["kl"] = {{"probe_size", c.kl.probe_size},
               {"seed", c.kl.seed},
               {"checkpoints", c.kl.checkpoints},
               {"trace", c.kl.trace}};
    j["report"] = {{"seeds", c.report.seeds},
                   {"epochs", c.report.epochs ? json(*c.report.epochs) : json(nullptr)}};
    return j;
}

Dataset load_dataset(const DataSpec& spec) {
    if (spec.kind == "blobs") return gen_blobs(spec.n_per_class, spec.num_classes, spec.dim, spec.sigma, spec.seed);
    if (spec.kind == "spirals") return gen_spirals(spec.n_per_class, spec.num_classes, spec.noise, spec.seed);
    if (spec.kind == "csv") return load_csv(spec.path);
    if (spec.kind == "idx") return load_idx(spec.images, spec.labels);
    throw ConfigError("unknown data kind '" + spec.kind + "'");
}

Split load_data(const DataSpec& spec) {
    return split_dataset(load_dataset(spec), spec.val_fraction, spec.seed);
}

}  // namespace sdd
