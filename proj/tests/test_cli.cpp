#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "sdd/checkpoint.hpp"
#include "sdd/commands.hpp"

namespace sdd {
namespace {

namespace fs = std::filesystem;

// Small, fast run shared by the command tests.
fs::path write_config(const fs::path& dir, const std::string& extra = "") {
    std::ofstream(dir / "run.json") << R"({
  "output_dir": ")" << (dir / "out").string()
                                    << R"(",
  "data": {"n_per_class": 40, "dim": 4},
  "model": {"hidden_dims": [16, 16]},
  "train": {"epochs": 6, "batch_size": 32, "milestones": [2, 4]},
  "kl": {"probe_size": 8},
  "report": {"seeds": [0, 1], "epochs": 2}
)" << extra << "}\n";
    return dir / "run.json";
}

int run(const std::string& cmd, const fs::path& config, const std::vector<std::string>& overrides = {},
        std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = run_command(cmd, config, overrides, out, err);
    if (err_text) *err_text = err.str();
    return code;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

TEST(Cli, TrainWritesCheckpointLogAndConfigEcho) {
    const auto dir = testing::scratch_dir("cli_train");
    ASSERT_EQ(run("train", write_config(dir)), kExitOk);
    EXPECT_TRUE(fs::exists(dir / "out" / "model.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "out" / "model_epoch2.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "out" / "model_epoch4.ckpt"));
    EXPECT_EQ(line_count(dir / "out" / "train_log.csv"), 1u + 6u);
    std::ifstream log(dir / "out" / "train_log.csv");
    std::string header;
    std::getline(log, header);
    EXPECT_EQ(header, kTrainLogHeader);
    const auto echo = nlohmann::json::parse(read_file(dir / "out" / "train_config.json"));
    EXPECT_EQ(echo["model"]["input_dim"], 4);
    EXPECT_EQ(echo["model"]["head_dims"], nlohmann::json::array({4}));
    EXPECT_EQ(echo["train"]["epochs"], 6);
    for (const auto& entry : fs::directory_iterator(dir / "out")) {
        EXPECT_NE(entry.path().extension(), ".tmp");
    }
}

TEST(Cli, EvaluationCommandsProduceReports) {
    const auto dir = testing::scratch_dir("cli_eval");
    const auto cfg = write_config(dir, R"(, "kl": {"probe_size": 8, "trace": true})");
    ASSERT_EQ(run("train", cfg), kExitOk);
    EXPECT_EQ(line_count(dir / "out" / "kl_trace.csv"), 1u + 6u);
    for (const std::string cmd : {"eval", "kl-analyze", "attack", "corrupt-eval", "ood"}) {
        std::string err;
        EXPECT_EQ(run(cmd, cfg, {}, &err), kExitOk) << cmd << ": " << err;
    }
    const auto out = dir / "out";
    EXPECT_EQ(line_count(out / "reliability.csv"), 11u);
    const auto eval = nlohmann::json::parse(read_file(out / "eval.json"));
    EXPECT_GE(eval["ece"].get<double>(), 0.0);
    const auto attack = nlohmann::json::parse(read_file(out / "attack.json"));
    EXPECT_LE(attack["attacked_accuracy"].get<double>(), attack["clean_accuracy"].get<double>());
    EXPECT_EQ(line_count(out / "corruption.csv"), 1u + 15u);
    const auto ood = nlohmann::json::parse(read_file(out / "ood.json"));
    for (const char* key : {"fpr_at_95_tpr", "detection_error", "auroc", "aupr_in", "aupr_out"}) {
        EXPECT_TRUE(ood.contains(key)) << key;
    }
    const auto kl = nlohmann::json::parse(read_file(out / "kl_report.json"));
    EXPECT_EQ(kl["snapshots"].size(), 1u);
    EXPECT_EQ(line_count(out / "kl_report.csv"), 2u);
    for (const char* f : {"eval_config.json", "kl-analyze_config.json", "attack_config.json",
                          "corrupt-eval_config.json", "ood_config.json"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
}

TEST(Cli, ReportListsSeedsAndAblation) {
    const auto dir = testing::scratch_dir("cli_report");
    ASSERT_EQ(run("report", write_config(dir)), kExitOk);
    const auto report = nlohmann::json::parse(read_file(dir / "out" / "report.json"));
    EXPECT_EQ(report["ce_vs_sd_dropout"].size(), 2u);
    EXPECT_EQ(report["kl_direction_ablation_mean_val_acc"].size(), 3u);
    EXPECT_EQ(line_count(dir / "out" / "report_runs.csv"), 1u + 2u * 4u);
}

TEST(Cli, IdenticalConfigGivesIdenticalOutputs) {
    const auto a = testing::scratch_dir("cli_det_a"), b = testing::scratch_dir("cli_det_b");
    ASSERT_EQ(run("train", write_config(a)), kExitOk);
    ASSERT_EQ(run("train", write_config(b)), kExitOk);
    EXPECT_EQ(read_file(a / "out" / "train_log.csv"), read_file(b / "out" / "train_log.csv"));
    EXPECT_EQ(read_file(a / "out" / "model.ckpt"), read_file(b / "out" / "model.ckpt"));
}

TEST(Cli, ExitCodes) {
    const auto dir = testing::scratch_dir("cli_exit");
    std::string err;
    EXPECT_EQ(run("train", dir / "missing.json", {}, &err), kExitConfigError);
    EXPECT_NE(err.find("missing.json"), std::string::npos);
    const auto cfg = write_config(dir);
    EXPECT_EQ(run("train", cfg, {"train.epochz=1"}), kExitConfigError);
    EXPECT_EQ(run("dance", cfg), kExitConfigError);
    // No checkpoint yet.
    EXPECT_EQ(run("eval", cfg, {}, &err), kExitConfigError);
    EXPECT_NE(err.find("model.ckpt"), std::string::npos);
    EXPECT_EQ(run("train", cfg, {"model.input_dim=9"}), kExitConfigError);
    // Divergence aborts with a location.
    EXPECT_EQ(run("train", cfg, {"train.lr=1e200"}, &err), kExitRuntimeAbort);
    EXPECT_NE(err.find("epoch"), std::string::npos);
}

TEST(Cli, OodSameFileTwiceIsChance) {
    const auto dir = testing::scratch_dir("cli_ood_null");
    {
        const Dataset d = gen_blobs(250, 4, 4, 0.9, 3);
        std::ofstream csv(dir / "set.csv");
        csv << "f0,f1,f2,f3,label\n";
        for (std::size_t i = 0; i < d.size(); ++i) {
            for (double v : d.row(i)) csv << format_double(v) << ",";
            csv << d.labels[i] << "\n";
        }
    }
    const std::string set = R"({"kind": "csv", "path": ")" + (dir / "set.csv").string() + R"("})";
    std::ofstream(dir / "run.json") << R"({"output_dir": ")" << (dir / "out").string() << R"(",
      "data": )" << set << R"(, "model": {"hidden_dims": [16, 16]},
      "train": {"epochs": 3, "batch_size": 64},
      "ood": {"in_data": )" << set << R"(, "out_data": )" << set << "}}";
    ASSERT_EQ(run("train", dir / "run.json"), kExitOk);
    std::string err;
    ASSERT_EQ(run("ood", dir / "run.json", {}, &err), kExitOk) << err;
    const auto ood = nlohmann::json::parse(read_file(dir / "out" / "ood.json"));
    EXPECT_NEAR(ood["auroc"].get<double>(), 0.5, 0.02);
}

TEST(Cli, BinaryMapsMissingConfigToExitTwo) {
    const std::string cmd = std::string(SDDROP_BIN) + " train --config /nonexistent/cfg.json 2>/dev/null";
    const int status = std::system(cmd.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), kExitConfigError);
    const int usage = std::system((std::string(SDDROP_BIN) + " >/dev/null 2>&1").c_str());
    EXPECT_EQ(WEXITSTATUS(usage), kExitConfigError);
}

}  // namespace
}  // namespace sdd
