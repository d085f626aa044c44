#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "snowdet/prediction.hpp"
#include "snowdet/types.hpp"

namespace snowdet {

/// Binary confusion counts with snow as the positive class.
struct ConfusionMatrix {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
    std::int64_t actual_positives() const { return tp + fn; }
    std::int64_t actual_negatives() const { return fp + tn; }
    void validate() const;

    bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricsReport {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    double precision_snow = 0.0;
    double recall_snow = 0.0;
    double f1_snow = 0.0;
    double precision_snowfree = 0.0;
    double recall_snowfree = 0.0;
    double f1_snowfree = 0.0;
    double macro_f1 = 0.0;
    /// fp / max(actual negatives, 1)
    double fp_ratio = 0.0;
    /// fn / max(actual positives, 1)
    double fn_ratio = 0.0;
    std::vector<std::string> misclassified_ids;

    nlohmann::json to_json() const;
};

/// Ground truth and decision for one record.
struct LabeledOutcome {
    std::string record_id;
    Label truth = Label::snow_free;
    Label predicted = Label::snow_free;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1(double precision, double recall);

/// (1 + b^2) p r / (b^2 p + r); 0 when the denominator is 0.
double f_beta(double precision, double recall, double beta);

ConfusionMatrix confusion_from(std::span<const LabeledOutcome> outcomes);

/// Builds a report from counts alone (misclassified_ids stays empty).
MetricsReport report_from_confusion(const ConfusionMatrix& cm);

MetricsReport compute_report(std::span<const LabeledOutcome> outcomes);
/// Every prediction must carry a ground-truth label.
MetricsReport compute_report(std::span<const PredictionResult> predictions);

/// False-positive rate over actual negatives and miss rate over actual
/// positives. A ratio is absent when its ground-truth class is empty.
struct ErrorRatios {
    std::optional<double> fp_ratio;
    std::optional<double> fn_ratio;
};
ErrorRatios error_ratios(const ConfusionMatrix& cm);

/// Percentage with one decimal, rounded half away from zero: 0.3125 -> "31.3%".
std::string format_percent(double ratio);

/// Value of format_percent as a number of percent (0.3125 -> 31.3).
double rounded_percent(double ratio);

}  // namespace snowdet
