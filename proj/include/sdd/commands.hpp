#pragma once

// Command implementations behind the `sddrop` CLI.
//
// Files written into output_dir (all written atomically):
//   train        model.ckpt, model_epoch<M>.ckpt (at each milestone M),
//                train_log.csv, kl_trace.csv (kl.trace only)
//   eval         eval.json, reliability.csv
//   kl-analyze   kl_report.json, kl_report.csv
//   attack       attack.json
//   corrupt-eval corruption.csv, corruption.json
//   ood          ood.json
//   report       report_runs.csv, report.json
// plus <command>_config.json holding the fully resolved configuration.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdd/config.hpp"

namespace sdd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeAbort = 3;

inline constexpr const char* kTrainLogHeader = "epoch,lr,train_loss,train_acc,val_acc";
inline constexpr const char* kReliabilityHeader = "bin_low,bin_high,count,acc,conf";
inline constexpr const char* kKlHeader =
    "snapshot,prob_a1,mean_r,mean_r1,a2_hold_fraction,cosine,l1_forward,l1_reverse";

const std::vector<std::string>& command_names();

// Fills model fields left for inference (input_dim, head_dims) from the
// dataset and checks that model and data agree. Throws ConfigError.
void resolve_model(RunConfig& config, const Dataset& data);

// Exact decimal text for a double (round-trips).
std::string format_double(double v);

void cmd_train(RunConfig config, std::ostream& log);
void cmd_eval(RunConfig config, std::ostream& log);
void cmd_kl_analyze(RunConfig config, std::ostream& log);
void cmd_attack(RunConfig config, std::ostream& log);
void cmd_corrupt_eval(RunConfig config, std::ostream& log);
void cmd_ood(RunConfig config, std::ostream& log);
void cmd_report(RunConfig config, std::ostream& log);

// Loads the config, dispatches, maps failures onto exit codes.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err);

}  // namespace sdd
