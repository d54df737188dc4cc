#include "sdd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "sdd/checkpoint.hpp"
#include "sdd/kl_analysis.hpp"
#include "sdd/metrics.hpp"

namespace sdd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Input files named by the config that do not exist.
class MissingInput : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

fs::path out_path(const RunConfig& c, const std::string& name) { return fs::path(c.output_dir) / name; }

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) throw MissingInput(what + " not found: " + path.string());
}

void require_data_files(const DataSpec& spec) {
    if (spec.kind == "csv") require_file(spec.path, "csv data");
    if (spec.kind == "idx") {
        require_file(spec.images, "idx images");
        require_file(spec.labels, "idx labels");
    }
}

Split load_split(RunConfig& c) {
    require_data_files(c.data);
    Split split = load_data(c.data);
    resolve_model(c, split.train);
    return split;
}

// Dataset the evaluation commands run on: the validation split, or the
// training split when no validation rows exist.
const Dataset& eval_set(const Split& split) { return split.val.size() > 0 ? split.val : split.train; }

Parameters load_params(const RunConfig& c) {
    require_file(c.checkpoint_path(), "checkpoint");
    return load_checkpoint(c.checkpoint_path(), c.model);
}

void echo_config(const RunConfig& c, const std::string& command) {
    write_json(out_path(c, command + "_config.json"), to_json(c));
}

json kl_row_json(const std::string& snapshot, const KlReport& r) {
    return {{"snapshot", snapshot},
            {"probe_size", r.probe_size},
            {"prob_a1", optional_json(r.stats.prob_a1)},
            {"mean_r", optional_json(r.stats.mean_r)},
            {"mean_r1", optional_json(r.stats.mean_r1)},
            {"a2_hold_fraction", optional_json(r.stats.a2_hold_fraction)},
            {"a1_pairs", r.stats.a1_pairs},
            {"a1_boundary", r.stats.a1_boundary},
            {"a2_pairs", r.stats.a2_pairs},
            {"cosine", optional_json(r.direction.cosine)},
            {"l1_forward", r.direction.l1_forward},
            {"l1_reverse", r.direction.l1_reverse}};
}

std::string kl_row_csv(const std::string& snapshot, const KlReport& r) {
    return snapshot + "," + optional_csv(r.stats.prob_a1) + "," + optional_csv(r.stats.mean_r) + "," +
           optional_csv(r.stats.mean_r1) + "," + optional_csv(r.stats.a2_hold_fraction) + "," +
           optional_csv(r.direction.cosine) + "," + format_double(r.direction.l1_forward) + "," +
           format_double(r.direction.l1_reverse) + "\n";
}

Tensor probe_batch(const Dataset& data, std::size_t probe_size) {
    const std::size_t n = std::min(probe_size, data.size());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return data.gather(idx);
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"train", "eval", "kl-analyze", "attack",
                                                "corrupt-eval", "ood", "report"};
    return names;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void resolve_model(RunConfig& c, const Dataset& data) {
    if (c.model.input_dim == 0) c.model.input_dim = data.dim;
    if (c.model.head_dims.empty()) c.model.head_dims = {data.num_classes};
    if (c.model.input_dim != data.dim) {
        throw ConfigError("model.input_dim " + std::to_string(c.model.input_dim) +
                          " does not match data dimension " + std::to_string(data.dim));
    }
    if (c.model.num_classes() < data.num_classes) {
        throw ConfigError("model outputs " + std::to_string(c.model.num_classes()) + " classes but data has " +
                          std::to_string(data.num_classes));
    }
    try {
        c.model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

void cmd_train(RunConfig c, std::ostream& log) {
    const Split split = load_split(c);
    echo_config(c, "train");

    const Tensor probe = probe_batch(eval_set(split), c.kl.probe_size);
    std::string csv = std::string(kTrainLogHeader) + "\n";
    std::string trace = std::string(kKlHeader) + "\n";
    auto on_epoch = [&](const EpochLog& e, const Parameters& params) {
        csv += std::to_string(e.epoch) + "," + format_double(e.lr) + "," + format_double(e.train_loss) + "," +
               format_double(e.train_acc) + "," + optional_csv(e.val_acc) + "\n";
        const std::size_t done = e.epoch + 1;
        if (std::find(c.train.milestones.begin(), c.train.milestones.end(), done) != c.train.milestones.end() &&
            done < c.train.epochs) {
            save_checkpoint(params, out_path(c, "model_epoch" + std::to_string(done) + ".ckpt"));
        }
        if (c.kl.trace) {
            const auto report = analyze_kl(params, probe, c.train.beta, c.train.distill.temperature, c.kl.seed);
            trace += kl_row_csv("epoch" + std::to_string(e.epoch), report);
        }
    };
    const auto result = train_run(c.model, split.train, &split.val, c.train, on_epoch);
    save_checkpoint(result.params, c.checkpoint_path());
    write_file_atomic(out_path(c, "train_log.csv"), csv);
    if (c.kl.trace) write_file_atomic(out_path(c, "kl_trace.csv"), trace);
    const auto& last = result.log.back();
    log << "trained " << c.train.epochs << " epochs (" << to_string(c.train.run_mode)
        << "): train_acc=" << last.train_acc << " val_acc=" << optional_csv(last.val_acc) << "\n";
}

void cmd_eval(RunConfig c, std::ostream& log) {
    const Split split = load_split(c);
    const Parameters params = load_params(c);
    echo_config(c, "eval");
    const auto eval = evaluate(params, eval_set(split));
    const auto records = calibration_records(eval);
    const auto cal = ece(records, c.eval_bins);
    std::string csv = std::string(kReliabilityHeader) + "\n";
    json bins = json::array();
    for (const auto& b : cal.bins) {
        csv += format_double(b.low) + "," + format_double(b.high) + "," + std::to_string(b.count) + "," +
               format_double(b.acc) + "," + format_double(b.conf) + "\n";
        bins.push_back({{"bin_low", b.low}, {"bin_high", b.high}, {"count", b.count}, {"acc", b.acc}, {"conf", b.conf}});
    }
    write_file_atomic(out_path(c, "reliability.csv"), csv);
    write_json(out_path(c, "eval.json"),
               {{"accuracy", eval.accuracy}, {"ece", cal.ece}, {"bins", c.eval_bins},
                {"examples", eval.records.size()}, {"reliability", bins}});
    log << "accuracy=" << eval.accuracy << " ece=" << cal.ece << "\n";
}

void cmd_kl_analyze(RunConfig c, std::ostream& log) {
    const Split split = load_split(c);
    echo_config(c, "kl-analyze");
    std::vector<std::string> snapshots = c.kl.checkpoints;
    if (snapshots.empty()) snapshots.push_back(c.checkpoint_path().string());
    for (const auto& s : snapshots) require_file(s, "checkpoint");

    const Tensor probe = probe_batch(eval_set(split), c.kl.probe_size);
    std::string csv = std::string(kKlHeader) + "\n";
    json rows = json::array();
    for (const auto& s : snapshots) {
        const Parameters params = load_checkpoint(s, c.model);
        const auto report = analyze_kl(params, probe, c.train.beta, c.train.distill.temperature, c.kl.seed);
        const std::string name = fs::path(s).filename().string();
        csv += kl_row_csv(name, report);
        rows.push_back(kl_row_json(name, report));
        log << name << ": prob_a1=" << optional_csv(report.stats.prob_a1)
            << " mean_r=" << optional_csv(report.stats.mean_r) << " mean_r1=" << optional_csv(report.stats.mean_r1)
            << " cosine=" << optional_csv(report.direction.cosine) << " l1_forward=" << report.direction.l1_forward
            << " l1_reverse=" << report.direction.l1_reverse << "\n";
    }
    write_file_atomic(out_path(c, "kl_report.csv"), csv);
    write_json(out_path(c, "kl_report.json"), {{"snapshots", rows}});
}

void cmd_attack(RunConfig c, std::ostream& log) {
    const Split split = load_split(c);
    const Parameters params = load_params(c);
    echo_config(c, "attack");
    const Dataset& data = eval_set(split);
    const Tensor x = data.all_features();
    const double clean = evaluate(params, data).accuracy;
    const auto adv = fgsm_attack(params, x, data.labels, c.attack);
    const double attacked = evaluate_logits(detach(forward(params, adv.adversarial)), data.labels).accuracy;
    write_json(out_path(c, "attack.json"),
               {{"epsilon", c.attack.epsilon}, {"clean_accuracy", clean}, {"attacked_accuracy", attacked}});
    log << "clean_accuracy=" << clean << " attacked_accuracy=" << attacked << "\n";
}

void cmd_corrupt_eval(RunConfig c, std::ostream& log) {
    const Split split = load_split(c);
    const Parameters params = load_params(c);
    echo_config(c, "corrupt-eval");
    const Dataset& data = eval_set(split);
    std::string csv = "kind,severity,accuracy\n";
    json per_kind = json::object();
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& name : c.corruption.kinds) {
        const Corruption kind = parse_corruption(name);
        double kind_total = 0.0;
        for (int sev : c.corruption.severities) {
            const Dataset corrupted = corrupt(data, kind, sev, c.corruption.seed);
            const double acc = evaluate(params, corrupted).accuracy;
            csv += name + "," + std::to_string(sev) + "," + format_double(acc) + "\n";
            kind_total += acc;
            total += acc;
            ++count;
        }
        per_kind[name] = kind_total / static_cast<double>(c.corruption.severities.size());
    }
    const double mean = count ? total / static_cast<double>(count) : 0.0;
    write_file_atomic(out_path(c, "corruption.csv"), csv);
    write_json(out_path(c, "corruption.json"),
               {{"clean_accuracy", evaluate(params, data).accuracy}, {"mean_accuracy", mean}, {"per_kind", per_kind}});
    log << "mean corrupted accuracy=" << mean << "\n";
}

void cmd_ood(RunConfig c, std::ostream& log) {
    Split split;
    if (c.ood.in_data) {
        require_data_files(*c.ood.in_data);
        split.val = load_dataset(*c.ood.in_data);
        resolve_model(c, split.val);
    } else {
        split = load_split(c);
    }
    if (!c.ood.out_data) throw ConfigError("ood.out_data is required for file-backed data");
    require_data_files(*c.ood.out_data);
    const Dataset out_set = load_dataset(*c.ood.out_data);
    const Parameters params = load_params(c);
    echo_config(c, "ood");
    const Dataset& in_set = eval_set(split);
    if (out_set.dim != in_set.dim) {
        throw ConfigError("ood.out_data dimension " + std::to_string(out_set.dim) +
                          " differs from in-distribution dimension " + std::to_string(in_set.dim));
    }
    const auto in_scores = odin_score(params, in_set.all_features(), c.ood.odin);
    const auto out_scores = odin_score(params, out_set.all_features(), c.ood.odin);
    const auto m = ood_metrics(in_scores, out_scores);
    write_json(out_path(c, "ood.json"), {{"fpr_at_95_tpr", m.fpr_at_95_tpr},
                                         {"detection_error", m.detection_error},
                                         {"auroc", m.auroc},
                                         {"aupr_in", m.aupr_in},
                                         {"aupr_out", m.aupr_out},
                                         {"odin_temperature", c.ood.odin.temperature},
                                         {"odin_epsilon", c.ood.odin.epsilon},
                                         {"in_examples", in_scores.size()},
                                         {"out_examples", out_scores.size()}});
    log << "auroc=" << m.auroc << " fpr@95tpr=" << m.fpr_at_95_tpr << " detection_error=" << m.detection_error
        << "\n";
}

void cmd_report(RunConfig c, std::ostream& log) {
    const Split split = load_split(c);
    echo_config(c, "report");

    struct Run {
        RunMode mode;
        FlowMode flow;
        std::uint64_t seed;
        EpochLog last;
    };
    std::vector<Run> runs;
    for (auto seed : c.report.seeds) {
        runs.push_back({RunMode::CrossEntropy, FlowMode::Both, seed, {}});
        for (auto flow : {FlowMode::Forward, FlowMode::Reverse, FlowMode::Both}) {
            runs.push_back({RunMode::SdDropout, flow, seed, {}});
        }
    }
    std::vector<std::string> errors(runs.size());
    const auto n = static_cast<std::int64_t>(runs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        auto& run = runs[static_cast<std::size_t>(i)];
        TrainConfig tc = c.train;
        tc.run_mode = run.mode;
        tc.distill.flow_mode = run.flow;
        tc.seed = run.seed;
        if (c.report.epochs) tc.epochs = *c.report.epochs;
        try {
            run.last = train_run(c.model, split.train, &split.val, tc).log.back();
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw TrainingAborted("report run failed: " + e);
    }

    std::string csv = "run_mode,flow_mode,seed,train_loss,train_acc,val_acc\n";
    std::map<std::uint64_t, std::map<std::string, double>> val;
    std::map<std::string, double> ablation;
    for (const auto& r : runs) {
        const std::string key = r.mode == RunMode::CrossEntropy ? "cross-entropy" : "sd-dropout-" + to_string(r.flow);
        const double v = r.last.val_acc.value_or(r.last.train_acc);
        val[r.seed][key] = v;
        if (r.mode == RunMode::SdDropout) ablation[to_string(r.flow)] += v / static_cast<double>(c.report.seeds.size());
        csv += to_string(r.mode) + "," + (r.mode == RunMode::SdDropout ? to_string(r.flow) : "") + "," +
               std::to_string(r.seed) + "," + format_double(r.last.train_loss) + "," +
               format_double(r.last.train_acc) + "," + optional_csv(r.last.val_acc) + "\n";
    }
    json deltas = json::array();
    double mean_delta = 0.0;
    for (auto seed : c.report.seeds) {
        const double d = val[seed]["sd-dropout-both"] - val[seed]["cross-entropy"];
        mean_delta += d / static_cast<double>(c.report.seeds.size());
        deltas.push_back({{"seed", seed},
                          {"cross_entropy_val_acc", val[seed]["cross-entropy"]},
                          {"sd_dropout_val_acc", val[seed]["sd-dropout-both"]},
                          {"delta", d}});
    }
    write_file_atomic(out_path(c, "report_runs.csv"), csv);
    write_json(out_path(c, "report.json"), {{"ce_vs_sd_dropout", deltas},
                                            {"mean_val_acc_delta", mean_delta},
                                            {"kl_direction_ablation_mean_val_acc", ablation}});
    log << "mean SD-Dropout minus CE val accuracy over " << c.report.seeds.size() << " seeds: " << mean_delta
        << "\n";
    for (const auto& [flow, acc] : ablation) log << "  flow=" << flow << " mean val_acc=" << acc << "\n";
}

int run_command(const std::string& command, const fs::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
    try {
        if (std::find(command_names().begin(), command_names().end(), command) == command_names().end()) {
            throw ConfigError("unknown command '" + command + "'");
        }
        if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path.string());
        RunConfig c = load_config(config_path, overrides);
        if (command == "train") cmd_train(std::move(c), out);
        else if (command == "eval") cmd_eval(std::move(c), out);
        else if (command == "kl-analyze") cmd_kl_analyze(std::move(c), out);
        else if (command == "attack") cmd_attack(std::move(c), out);
        else if (command == "corrupt-eval") cmd_corrupt_eval(std::move(c), out);
        else if (command == "ood") cmd_ood(std::move(c), out);
        else cmd_report(std::move(c), out);
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const MissingInput& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const DataFormatError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "runtime abort: " << e.what() << "\n";
        return kExitRuntimeAbort;
    }
}

}  // namespace sdd
