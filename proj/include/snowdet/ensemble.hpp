#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "snowdet/prediction.hpp"
#include "snowdet/types.hpp"

namespace snowdet {

struct EnsembleConfig {
    /// Weight on model A; model B receives 1 - weight_a.
    double weight_a = 0.5;
    std::string model_a_ref;
    std::string model_b_ref;
    double decision_threshold = 0.5;

    void validate() const;
    nlohmann::json to_json() const;
    static EnsembleConfig from_json(const nlohmann::json& j);
};

/// Row-normalised class probabilities of one model over a batch.
struct ProbabilityBatch {
    std::array<std::string, 2> class_order = class_order_names();
    std::vector<std::array<double, 2>> rows;
    /// Optional, same length as rows when present.
    std::vector<std::string> record_ids;

    std::size_t size() const { return rows.size(); }
    static ProbabilityBatch from_tensor(const torch::Tensor& probs);
};

/// Convex combination weight_a * A + (1 - weight_a) * B per row, labelled
/// with the config's decision threshold. Per-model rows are kept in the result.
std::vector<PredictionResult> ensemble_predict(const ProbabilityBatch& probs_a, const ProbabilityBatch& probs_b,
                                               const EnsembleConfig& config);

/// Candidate weights 0.00, 0.05, ..., 1.00.
std::vector<double> weight_grid();

/// Macro-F1 of the ensemble at one weight against ground truth.
double ensemble_macro_f1(const ProbabilityBatch& probs_a, const ProbabilityBatch& probs_b,
                         std::span<const Label> labels, double weight_a, double threshold = 0.5);

struct WeightFit {
    EnsembleConfig config;
    std::vector<double> grid;
    std::vector<double> scores;
    double solo_a_macro_f1 = 0.0;
    double solo_b_macro_f1 = 0.0;
};

/// Picks weight_a from weight_grid() maximising validation macro-F1. Ties go
/// to the weight closest to 0.5, then to the side of the model with the
/// higher solo macro-F1 (model A when those are equal too).
WeightFit fit_weight_detailed(const ProbabilityBatch& val_probs_a, const ProbabilityBatch& val_probs_b,
                              std::span<const Label> val_labels, double threshold = 0.5);

EnsembleConfig fit_weight(const ProbabilityBatch& val_probs_a, const ProbabilityBatch& val_probs_b,
                          std::span<const Label> val_labels);

}  // namespace snowdet
