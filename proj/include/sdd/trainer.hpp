#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdd/data.hpp"
#include "sdd/distill.hpp"
#include "sdd/model.hpp"

namespace sdd {

enum class RunMode { CrossEntropy, StandardDropout, SdDropout, LabelSmoothing, SdDropoutKd };

std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string& s);

// Everything a batch step has built so far; handed to the extra-KD hook.
struct BatchContext {
    const Tensor& clean_logits;
    const Tensor& logits_u;
    const Tensor& logits_v;
    std::span<const int> labels;
    double temperature;
};

// Returns the scalar extra distillation loss for one batch.
using KdHook = std::function<Tensor(const BatchContext&)>;

struct TrainConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    std::vector<std::size_t> milestones{100, 150};
    double gamma = 0.1;
    std::uint64_t seed = 0;
    RunMode run_mode = RunMode::SdDropout;
    DistillLossSpec distill;
    double beta = 0.5;
    // Extra loss for SdDropoutKd; default_kd_hook when empty.
    KdHook kd_hook;

    void validate() const;
};

struct OptimizerState {
    std::vector<std::vector<double>> velocity;

    static OptimizerState zeros_like(const Parameters& params);
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;
};

struct TrainResult {
    Parameters params;
    std::vector<EpochLog> log;
};

class TrainingAborted : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

// g' = g + weight_decay * theta; v = momentum * v + g'; theta -= lr * v.
// Throws TrainingAborted naming the parameter on a non-finite gradient.
void sgd_step(Parameters& params, std::span<const std::vector<double>> grads, OptimizerState& state,
              double lr, double momentum, double weight_decay);

// KL(softmax_T(detach(clean)) || softmax_T(logits_u)): distils the
// undropped prediction into the dropout view.
Tensor default_kd_hook(const BatchContext& ctx);

// Called after every epoch with the current weights and the log so far.
using EpochCallback = std::function<void(const EpochLog&, const Parameters&)>;

TrainResult train_run(const ModelSpec& model_spec, const Dataset& train, const Dataset* val,
                      const TrainConfig& config, const EpochCallback& on_epoch = {});

struct PredictionRecord {
    double confidence = 0.0;
    bool correct = false;
    int label = 0;
    int predicted = 0;
    std::vector<double> logits;
};

struct EvalResult {
    double accuracy = 0.0;
    std::vector<PredictionRecord> records;
};

// No dropout; argmax prediction with max-softmax confidence.
EvalResult evaluate(const Parameters& params, const Dataset& data);
EvalResult evaluate_logits(const Tensor& logits, std::span<const int> labels);

}  // namespace sdd
