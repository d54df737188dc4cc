#include "sdd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdd/distill.hpp"
#include "sdd/rng.hpp"

namespace sdd {

std::vector<CalibrationRecord> calibration_records(const EvalResult& eval) {
    std::vector<CalibrationRecord> out;
    out.reserve(eval.records.size());
    for (const auto& r : eval.records) out.push_back({r.confidence, r.correct});
    return out;
}

std::size_t ece_bin(double confidence, std::size_t bins) {
    const auto m_total = static_cast<double>(bins);
    auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(confidence * m_total)));
    m = std::min(m, bins);
    // ceil(c * M) can land one bin off when c * M rounds; settle against the
    // exact boundaries m / M.
    while (m > 1 && confidence <= static_cast<double>(m - 1) / m_total) --m;
    while (m < bins && confidence > static_cast<double>(m) / m_total) ++m;
    return m - 1;
}

EceResult ece(std::span<const CalibrationRecord> records, std::size_t bins) {
    if (records.empty()) throw std::invalid_argument("ece: no records");
    if (bins < 1) throw std::invalid_argument("ece: need at least one bin");
    EceResult result;
    result.bins.resize(bins);
    std::vector<double> sum_conf(bins, 0.0), sum_correct(bins, 0.0);
    for (const auto& r : records) {
        if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
            throw std::invalid_argument("ece: confidence outside [0, 1]");
        }
        const std::size_t b = ece_bin(r.confidence, bins);
        ++result.bins[b].count;
        sum_conf[b] += r.confidence;
        sum_correct[b] += r.correct ? 1.0 : 0.0;
    }
    const auto n = static_cast<double>(records.size());
    for (std::size_t b = 0; b < bins; ++b) {
        auto& s = result.bins[b];
        s.index = b;
        s.low = static_cast<double>(b) / static_cast<double>(bins);
        s.high = static_cast<double>(b + 1) / static_cast<double>(bins);
        if (s.count == 0) continue;
        const auto c = static_cast<double>(s.count);
        s.acc = sum_correct[b] / c;
        s.conf = sum_conf[b] / c;
        result.ece += (c / n) * std::abs(s.acc - s.conf);
    }
    return result;
}

FgsmResult fgsm_attack(const Parameters& params, const Tensor& x, std::span<const int> labels,
                       const AttackConfig& cfg) {
    if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("fgsm: epsilon must be >= 0");
    const Tensor input = Tensor::from(x.shape(), {x.values().begin(), x.values().end()}, true);
    const auto grad = backward(cross_entropy(forward(params, input), labels)).get(input);

    FgsmResult result;
    result.step.resize(grad.size());
    std::vector<double> adv(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double sign = grad[i] > 0.0 ? 1.0 : grad[i] < 0.0 ? -1.0 : 0.0;
        result.step[i] = cfg.epsilon * sign;
        double v = x[i] + result.step[i];
        if (cfg.clip_min) v = std::max(v, *cfg.clip_min);
        if (cfg.clip_max) v = std::min(v, *cfg.clip_max);
        adv[i] = v;
    }
    result.adversarial = Tensor::from(x.shape(), std::move(adv));
    return result;
}

std::string to_string(Corruption kind) {
    switch (kind) {
        case Corruption::GaussianNoise: return "gaussian_noise";
        case Corruption::Brightness: return "brightness";
        case Corruption::Contrast: return "contrast";
    }
    return "?";
}

Corruption parse_corruption(const std::string& s) {
    for (auto kind : {Corruption::GaussianNoise, Corruption::Brightness, Corruption::Contrast}) {
        if (s == to_string(kind)) return kind;
    }
    throw std::invalid_argument("unknown corruption '" + s +
                                "' (expected gaussian_noise, brightness or contrast)");
}

std::vector<double> add_gaussian_noise(std::span<const double> features, double sigma,
                                       std::uint64_t seed) {
    Engine eng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out(features.begin(), features.end());
    for (auto& v : out) v += sigma * gauss(eng);
    return out;
}

std::vector<double> corrupt(std::span<const double> features, std::size_t dim, Corruption kind,
                            int severity, std::uint64_t seed) {
    if (severity < 1 || severity > 5) {
        throw std::invalid_argument("corruption severity must lie in 1..5, got " + std::to_string(severity));
    }
    if (dim == 0 || features.size() % dim != 0) throw ShapeError("corrupt: feature size not a multiple of dim");
    const double s = severity;
    switch (kind) {
        case Corruption::GaussianNoise:
            return add_gaussian_noise(features, 0.04 * s, seed);
        case Corruption::Brightness: {
            std::vector<double> out(features.begin(), features.end());
            for (auto& v : out) v += 0.1 * s;
            return out;
        }
        case Corruption::Contrast: {
            std::vector<double> out(features.size());
            const double factor = 1.0 - 0.1 * s;
            for (std::size_t r = 0; r < features.size() / dim; ++r) {
                const auto row = features.subspan(r * dim, dim);
                double mean = 0.0;
                for (double v : row) mean += v;
                mean /= static_cast<double>(dim);
                for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] = mean + (row[j] - mean) * factor;
            }
            return out;
        }
    }
    throw std::invalid_argument("unknown corruption kind");
}

Dataset corrupt(const Dataset& data, Corruption kind, int severity, std::uint64_t seed) {
    Dataset out = data;
    out.features = corrupt(data.features, data.dim, kind, severity, seed);
    return out;
}

namespace {

Tensor max_softmax(const Parameters& params, const Tensor& x, double temperature) {
    return max(softmax_with_temperature(forward(params, x), temperature).probs, 1);
}

}  // namespace

std::vector<double> odin_score(const Parameters& params, const Tensor& x, const OdinConfig& cfg) {
    if (!(cfg.temperature > 0.0)) throw std::invalid_argument("odin: temperature must be positive");
    if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("odin: epsilon must be >= 0");
    Tensor shifted = x;
    if (cfg.epsilon > 0.0) {
        const Tensor input = Tensor::from(x.shape(), {x.values().begin(), x.values().end()}, true);
        // Rows are independent, so the summed objective yields per-row gradients.
        const auto grad = backward(sum(log(max_softmax(params, input, cfg.temperature)))).get(input);
        std::vector<double> moved(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double sign_neg = grad[i] < 0.0 ? 1.0 : grad[i] > 0.0 ? -1.0 : 0.0;
            moved[i] = x[i] - cfg.epsilon * sign_neg;
        }
        shifted = Tensor::from(x.shape(), std::move(moved));
    }
    const Tensor scores = max_softmax(params, shifted, cfg.temperature);
    return {scores.values().begin(), scores.values().end()};
}

namespace {

struct SweepPoint {
    std::size_t tp = 0;
    std::size_t fp = 0;
};

// Cumulative (tp, fp) after admitting each distinct score, highest first.
std::vector<SweepPoint> sweep(std::span<const double> positive, std::span<const double> negative) {
    std::vector<std::pair<double, bool>> all;
    all.reserve(positive.size() + negative.size());
    for (double s : positive) all.emplace_back(s, true);
    for (double s : negative) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<SweepPoint> points;
    SweepPoint cur;
    for (std::size_t i = 0; i < all.size(); ++i) {
        (all[i].second ? cur.tp : cur.fp) += 1;
        if (i + 1 == all.size() || all[i + 1].first != all[i].first) points.push_back(cur);
    }
    return points;
}

void check_scores(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ood metrics need non-empty score lists");
    for (auto span : {a, b}) {
        for (double s : span) {
            if (!std::isfinite(s)) throw std::invalid_argument("ood metrics: non-finite score");
        }
    }
}

}  // namespace

double auroc(std::span<const double> positive, std::span<const double> negative) {
    check_scores(positive, negative);
    std::vector<double> neg(negative.begin(), negative.end());
    std::sort(neg.begin(), neg.end());
    double credit = 0.0;
    for (double s : positive) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
        const auto hi = std::upper_bound(lo, neg.end(), s);
        credit += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return credit / (static_cast<double>(positive.size()) * static_cast<double>(negative.size()));
}

double average_precision(std::span<const double> positive, std::span<const double> negative) {
    check_scores(positive, negative);
    const auto n_pos = static_cast<double>(positive.size());
    double ap = 0.0, prev_recall = 0.0;
    for (const auto& pt : sweep(positive, negative)) {
        const double recall = static_cast<double>(pt.tp) / n_pos;
        const double precision = static_cast<double>(pt.tp) / static_cast<double>(pt.tp + pt.fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

OODMetrics ood_metrics(std::span<const double> in_scores, std::span<const double> out_scores) {
    check_scores(in_scores, out_scores);
    const std::size_t n_in = in_scores.size(), n_out = out_scores.size();
    OODMetrics m;
    m.detection_error = 0.5;  // threshold above every score
    bool found95 = false;
    for (const auto& pt : sweep(in_scores, out_scores)) {
        const double tpr = static_cast<double>(pt.tp) / static_cast<double>(n_in);
        const double fpr = static_cast<double>(pt.fp) / static_cast<double>(n_out);
        if (!found95 && 100 * pt.tp >= 95 * n_in) {
            m.fpr_at_95_tpr = fpr;
            found95 = true;
        }
        m.detection_error = std::min(m.detection_error, 0.5 * (1.0 - tpr) + 0.5 * fpr);
    }
    m.auroc = auroc(in_scores, out_scores);
    m.aupr_in = average_precision(in_scores, out_scores);
    std::vector<double> neg_in, neg_out;
    for (double s : in_scores) neg_in.push_back(-s);
    for (double s : out_scores) neg_out.push_back(-s);
    m.aupr_out = average_precision(neg_out, neg_in);
    return m;
}

}  // namespace sdd
