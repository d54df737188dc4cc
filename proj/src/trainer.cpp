#include "sdd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdd/rng.hpp"

namespace sdd {

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::CrossEntropy: return "cross-entropy";
        case RunMode::StandardDropout: return "standard-dropout";
        case RunMode::SdDropout: return "sd-dropout";
        case RunMode::LabelSmoothing: return "label-smoothing";
        case RunMode::SdDropoutKd: return "sd-dropout-kd";
    }
    return "?";
}

RunMode parse_run_mode(const std::string& s) {
    for (auto mode : {RunMode::CrossEntropy, RunMode::StandardDropout, RunMode::SdDropout,
                      RunMode::LabelSmoothing, RunMode::SdDropoutKd}) {
        if (s == to_string(mode)) return mode;
    }
    throw std::invalid_argument("unknown run mode '" + s +
                                "' (expected cross-entropy, standard-dropout, sd-dropout, "
                                "label-smoothing or sd-dropout-kd)");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train.momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be >= 0");
    if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (!(gamma > 0.0)) throw std::invalid_argument("train.gamma must be positive");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
        if (milestones[i] <= milestones[i - 1]) {
            throw std::invalid_argument("train.milestones must be strictly increasing");
        }
    }
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("train.beta must lie in [0, 1)");
    distill.validate();
    if (run_mode == RunMode::LabelSmoothing && !(distill.label_smoothing_alpha > 0.0)) {
        throw std::invalid_argument("label-smoothing mode needs distill.label_smoothing_alpha > 0");
    }
}

OptimizerState OptimizerState::zeros_like(const Parameters& params) {
    OptimizerState state;
    for (const auto& nt : params.tensors()) state.velocity.emplace_back(nt.tensor.size(), 0.0);
    return state;
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
    const auto passed = std::count_if(config.milestones.begin(), config.milestones.end(),
                                      [epoch](std::size_t m) { return m <= epoch; });
    return config.lr * std::pow(config.gamma, static_cast<double>(passed));
}

void sgd_step(Parameters& params, std::span<const std::vector<double>> grads, OptimizerState& state,
              double lr, double momentum, double weight_decay) {
    auto& tensors = params.tensors();
    if (grads.size() != tensors.size() || state.velocity.size() != tensors.size()) {
        throw ShapeError("sgd_step: gradient/state count does not match parameters");
    }
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const auto& g = grads[t];
        for (double x : g) {
            if (!std::isfinite(x)) {
                throw TrainingAborted("non-finite gradient for parameter " + tensors[t].name);
            }
        }
    }
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto theta = tensors[t].tensor.mutable_values();
        auto& v = state.velocity[t];
        const auto& g = grads[t];
        if (g.size() != theta.size() || v.size() != theta.size()) {
            throw ShapeError("sgd_step: size mismatch for parameter " + tensors[t].name);
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double decayed = g[i] + weight_decay * theta[i];
            v[i] = momentum * v[i] + decayed;
            theta[i] -= lr * v[i];
        }
    }
}

Tensor default_kd_hook(const BatchContext& ctx) {
    const Posterior teacher = softmax_with_temperature(detach(ctx.clean_logits), ctx.temperature);
    const Posterior student = softmax_with_temperature(ctx.logits_u, ctx.temperature);
    return kl_divergence(teacher, student, FlowMode::Both);
}

namespace {

Tensor primary_loss(const Tensor& logits, std::span<const int> labels, const DistillLossSpec& spec) {
    if (spec.label_smoothing_alpha > 0.0) {
        return label_smoothing_loss(logits, labels, spec.label_smoothing_alpha);
    }
    return cross_entropy(logits, labels);
}

// One optimisation step; returns the batch loss.
double train_batch(Parameters& params, OptimizerState& state, const Tensor& x,
                   std::span<const int> y, const TrainConfig& config, double lr,
                   std::uint64_t& mask_counter) {
    const auto& spec = params.spec();
    // Two mask seeds are consumed per batch in every mode so the random
    // streams of different modes stay aligned.
    const std::uint64_t seed_u = derive_mask_seed(config.seed, mask_counter++);
    const std::uint64_t seed_v = derive_mask_seed(config.seed, mask_counter++);

    const Tensor features = forward_features(params, x);
    Tensor loss;
    switch (config.run_mode) {
        case RunMode::CrossEntropy:
        case RunMode::LabelSmoothing:
            loss = primary_loss(head_forward(params, features), y, config.distill);
            break;
        case RunMode::StandardDropout: {
            const auto u = sample_batch_mask(x.dim(0), spec.feature_dim(), config.beta, seed_u);
            loss = primary_loss(masked_head_forward(params, features, u), y, config.distill);
            break;
        }
        case RunMode::SdDropout:
        case RunMode::SdDropoutKd: {
            const Tensor clean = head_forward(params, features);
            const Tensor ce = primary_loss(clean, y, config.distill);
            const auto u = sample_batch_mask(x.dim(0), spec.feature_dim(), config.beta, seed_u);
            const auto v = sample_batch_mask(x.dim(0), spec.feature_dim(), config.beta, seed_v);
            const Tensor zu = masked_head_forward(params, features, u);
            const Tensor zv = masked_head_forward(params, features, v);
            const Tensor sdd = sdd_loss(zu, zv, config.distill.temperature, config.distill.flow_mode);
            std::optional<Tensor> kd;
            if (config.run_mode == RunMode::SdDropoutKd) {
                const BatchContext ctx{clean, zu, zv, y, config.distill.temperature};
                kd = config.kd_hook ? config.kd_hook(ctx) : default_kd_hook(ctx);
            }
            loss = total_loss(ce, sdd, kd, config.distill);
            break;
        }
    }
    const double value = loss.item();
    if (!std::isfinite(value)) throw NonFiniteError("loss is not finite");

    const GradientMap grads = backward(loss);
    std::vector<std::vector<double>> flat;
    flat.reserve(params.tensors().size());
    for (const auto& nt : params.tensors()) flat.push_back(grads.get(nt.tensor));
    sgd_step(params, flat, state, lr, config.momentum, config.weight_decay);
    return value;
}

}  // namespace

TrainResult train_run(const ModelSpec& model_spec, const Dataset& train, const Dataset* val,
                      const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    model_spec.validate();
    train.validate();
    if (train.dim != model_spec.input_dim) {
        throw std::invalid_argument("dataset dimension " + std::to_string(train.dim) +
                                    " does not match model.input_dim " +
                                    std::to_string(model_spec.input_dim));
    }
    if (train.num_classes > model_spec.num_classes()) {
        throw std::invalid_argument("dataset has " + std::to_string(train.num_classes) +
                                    " classes but the model outputs " +
                                    std::to_string(model_spec.num_classes()));
    }

    TrainResult result{init_model(model_spec, derive_seed(config.seed, kInitStream, 0)), {}};
    auto& params = result.params;
    OptimizerState state = OptimizerState::zeros_like(params);
    std::uint64_t mask_counter = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        const auto batches =
            batch_iter(train.size(), config.batch_size, derive_seed(config.seed, kShuffleStream, epoch));
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& idx = batches[b];
            const auto labels = train.gather_labels(idx);
            try {
                loss_sum += train_batch(params, state, train.gather(idx), labels, config, lr, mask_counter) *
                            static_cast<double>(idx.size());
            } catch (const NonFiniteError& e) {
                throw TrainingAborted("divergence at epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(b) + ": " + e.what());
            } catch (const TrainingAborted& e) {
                throw TrainingAborted("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                                      ": " + e.what());
            }
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_sum / static_cast<double>(train.size());
        entry.train_acc = evaluate(params, train).accuracy;
        if (val != nullptr && val->size() > 0) entry.val_acc = evaluate(params, *val).accuracy;
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry, params);
    }
    return result;
}

EvalResult evaluate_logits(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw ShapeError("evaluate: logits " + to_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    const Tensor probs = softmax(detach(logits));
    EvalResult result;
    result.records.resize(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = logits.values().subspan(i * k, k);
        const auto p = probs.values().subspan(i * k, k);
        const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        auto& rec = result.records[i];
        rec.predicted = static_cast<int>(best);
        rec.label = labels[i];
        rec.correct = rec.predicted == rec.label;
        rec.confidence = p[best];
        rec.logits.assign(z.begin(), z.end());
        hits += rec.correct ? 1 : 0;
    }
    result.accuracy = n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
    return result;
}

EvalResult evaluate(const Parameters& params, const Dataset& data) {
    return evaluate_logits(detach(forward(params, data.all_features())), data.labels);
}

}  // namespace sdd
