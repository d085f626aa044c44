#include "snowdet/ensemble.hpp"

#include <cmath>

#include "snowdet/metrics.hpp"

namespace snowdet {

void EnsembleConfig::validate() const {
    if (!(weight_a >= 0.0 && weight_a <= 1.0)) throw Error("ensemble weight_a must lie in [0, 1]");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
        throw Error("decision_threshold must lie in (0, 1)");
    }
}

nlohmann::json EnsembleConfig::to_json() const {
    return {{"weight_a", weight_a},
            {"weight_b", 1.0 - weight_a},
            {"model_a_ref", model_a_ref},
            {"model_b_ref", model_b_ref},
            {"decision_threshold", decision_threshold}};
}

EnsembleConfig EnsembleConfig::from_json(const nlohmann::json& j) {
    EnsembleConfig c;
    c.weight_a = j.at("weight_a").get<double>();
    c.model_a_ref = j.value("model_a_ref", "");
    c.model_b_ref = j.value("model_b_ref", "");
    c.decision_threshold = j.value("decision_threshold", 0.5);
    c.validate();
    return c;
}

ProbabilityBatch ProbabilityBatch::from_tensor(const torch::Tensor& probs) {
    if (probs.dim() != 2 || probs.size(1) != kNumClasses) throw Error("probabilities must be [B, 2]");
    const auto p = probs.detach().to(torch::kFloat64).contiguous();
    const auto* data = p.data_ptr<double>();
    ProbabilityBatch out;
    out.rows.resize(static_cast<std::size_t>(p.size(0)));
    for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i] = {data[2 * i], data[2 * i + 1]};
    return out;
}

namespace {

void check_compatible(const ProbabilityBatch& a, const ProbabilityBatch& b) {
    if (a.size() != b.size()) {
        throw Error("ensemble batch size mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    if (a.class_order != b.class_order) throw Error("ensemble members disagree on class order");
    if (a.class_order != class_order_names()) throw Error("unexpected class order; index 1 must be snow");
}

}  // namespace

std::vector<PredictionResult> ensemble_predict(const ProbabilityBatch& probs_a, const ProbabilityBatch& probs_b,
                                               const EnsembleConfig& config) {
    config.validate();
    check_compatible(probs_a, probs_b);
    const double wa = config.weight_a;
    const double wb = 1.0 - wa;
    std::vector<PredictionResult> out(probs_a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& r = out[i];
        if (i < probs_a.record_ids.size()) r.record_id = probs_a.record_ids[i];
        r.probs_a = probs_a.rows[i];
        r.probs_b = probs_b.rows[i];
        for (int c = 0; c < kNumClasses; ++c) r.ensemble[c] = wa * r.probs_a[c] + wb * r.probs_b[c];
        r.label = decide(r.snow_probability(), config.decision_threshold);
    }
    return out;
}

std::vector<double> weight_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
    return grid;
}

double ensemble_macro_f1(const ProbabilityBatch& probs_a, const ProbabilityBatch& probs_b,
                         std::span<const Label> labels, double weight_a, double threshold) {
    if (labels.size() != probs_a.size()) throw Error("label count does not match prediction count");
    EnsembleConfig cfg;
    cfg.weight_a = weight_a;
    cfg.decision_threshold = threshold;
    const auto preds = ensemble_predict(probs_a, probs_b, cfg);
    std::vector<LabeledOutcome> outcomes;
    outcomes.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) outcomes.push_back({"", labels[i], preds[i].label});
    return compute_report(std::span<const LabeledOutcome>(outcomes)).macro_f1;
}

WeightFit fit_weight_detailed(const ProbabilityBatch& val_probs_a, const ProbabilityBatch& val_probs_b,
                              std::span<const Label> val_labels, double threshold) {
    if (val_labels.empty() || val_probs_a.size() == 0) throw Error("cannot fit ensemble weight on an empty validation set");
    check_compatible(val_probs_a, val_probs_b);

    WeightFit fit;
    fit.grid = weight_grid();
    for (double w : fit.grid) {
        fit.scores.push_back(ensemble_macro_f1(val_probs_a, val_probs_b, val_labels, w, threshold));
    }
    fit.solo_a_macro_f1 = fit.scores.back();
    fit.solo_b_macro_f1 = fit.scores.front();

    // Grid points are i/20; compare distances from 0.5 in integer steps.
    const bool favour_a = fit.solo_a_macro_f1 >= fit.solo_b_macro_f1;
    std::size_t best = 0;
    for (std::size_t i = 1; i < fit.grid.size(); ++i) {
        const auto dist = [](std::size_t k) { return std::abs(static_cast<int>(k) - 10); };
        if (fit.scores[i] > fit.scores[best]) {
            best = i;
        } else if (fit.scores[i] == fit.scores[best]) {
            if (dist(i) < dist(best)) {
                best = i;
            } else if (dist(i) == dist(best) && favour_a && i > best) {
                best = i;
            }
        }
    }
    fit.config.weight_a = fit.grid[best];
    fit.config.decision_threshold = threshold;
    return fit;
}

EnsembleConfig fit_weight(const ProbabilityBatch& val_probs_a, const ProbabilityBatch& val_probs_b,
                          std::span<const Label> val_labels) {
    return fit_weight_detailed(val_probs_a, val_probs_b, val_labels).config;
}

}  // namespace snowdet
