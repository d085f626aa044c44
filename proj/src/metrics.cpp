#include "snowdet/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace snowdet {

void ConfusionMatrix::validate() const {
    if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw Error("confusion counts must be non-negative");
    if (total() <= 0) throw Error("confusion matrix is empty");
}

namespace {

void check_ratio(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) throw Error(std::string(name) + " must lie in [0, 1]");
}

double safe_div(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double f1(double precision, double recall) {
    check_ratio(precision, "precision");
    check_ratio(recall, "recall");
    const double sum = precision + recall;
    return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

double f_beta(double precision, double recall, double beta) {
    if (!(beta > 0.0)) throw Error("beta must be positive");
    check_ratio(precision, "precision");
    check_ratio(recall, "recall");
    const double b2 = beta * beta;
    const double den = b2 * precision + recall;
    return den == 0.0 ? 0.0 : (1.0 + b2) * precision * recall / den;
}

ConfusionMatrix confusion_from(std::span<const LabeledOutcome> outcomes) {
    ConfusionMatrix cm;
    for (const auto& o : outcomes) {
        const bool actual = o.truth == Label::snow;
        const bool predicted = o.predicted == Label::snow;
        if (actual && predicted) ++cm.tp;
        else if (!actual && predicted) ++cm.fp;
        else if (actual && !predicted) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

MetricsReport report_from_confusion(const ConfusionMatrix& cm) {
    cm.validate();
    MetricsReport r;
    r.confusion = cm;
    r.accuracy = safe_div(cm.tp + cm.tn, cm.total());
    r.precision_snow = safe_div(cm.tp, cm.tp + cm.fp);
    r.recall_snow = safe_div(cm.tp, cm.tp + cm.fn);
    r.f1_snow = f1(r.precision_snow, r.recall_snow);
    r.precision_snowfree = safe_div(cm.tn, cm.tn + cm.fn);
    r.recall_snowfree = safe_div(cm.tn, cm.tn + cm.fp);
    r.f1_snowfree = f1(r.precision_snowfree, r.recall_snowfree);
    r.macro_f1 = (r.f1_snow + r.f1_snowfree) / 2.0;
    r.fp_ratio = static_cast<double>(cm.fp) / static_cast<double>(std::max<std::int64_t>(cm.actual_negatives(), 1));
    r.fn_ratio = static_cast<double>(cm.fn) / static_cast<double>(std::max<std::int64_t>(cm.actual_positives(), 1));
    return r;
}

MetricsReport compute_report(std::span<const LabeledOutcome> outcomes) {
    if (outcomes.empty()) throw Error("cannot compute metrics for an empty prediction batch");
    MetricsReport r = report_from_confusion(confusion_from(outcomes));
    for (const auto& o : outcomes) {
        if (o.truth != o.predicted) r.misclassified_ids.push_back(o.record_id);
    }
    return r;
}

MetricsReport compute_report(std::span<const PredictionResult> predictions) {
    std::vector<LabeledOutcome> outcomes;
    outcomes.reserve(predictions.size());
    for (const auto& p : predictions) {
        if (!p.truth) throw Error("prediction for " + p.record_id + " has no ground-truth label");
        outcomes.push_back({p.record_id, *p.truth, p.label});
    }
    return compute_report(std::span<const LabeledOutcome>(outcomes));
}

ErrorRatios error_ratios(const ConfusionMatrix& cm) {
    if (cm.tp < 0 || cm.fp < 0 || cm.fn < 0 || cm.tn < 0) throw Error("confusion counts must be non-negative");
    ErrorRatios out;
    if (cm.actual_negatives() > 0) out.fp_ratio = safe_div(cm.fp, cm.actual_negatives());
    if (cm.actual_positives() > 0) out.fn_ratio = safe_div(cm.fn, cm.actual_positives());
    return out;
}

double rounded_percent(double ratio) {
    const double tenths = ratio * 1000.0;
    // Nudge by a relative epsilon so values like 0.3125 that print as an exact
    // half are not pushed below it by representation error.
    const double nudged = tenths + std::copysign(1e-9 * std::max(1.0, std::fabs(tenths)), tenths);
    return std::round(nudged) / 10.0;
}

std::string format_percent(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", rounded_percent(ratio));
    return buf;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["confusion"] = {{"tp", confusion.tp}, {"fp", confusion.fp}, {"fn", confusion.fn}, {"tn", confusion.tn}};
    j["accuracy"] = accuracy;
    j["precision_snow"] = precision_snow;
    j["recall_snow"] = recall_snow;
    j["f1_snow"] = f1_snow;
    j["precision_snowfree"] = precision_snowfree;
    j["recall_snowfree"] = recall_snowfree;
    j["f1_snowfree"] = f1_snowfree;
    j["macro_f1"] = macro_f1;
    j["fp_ratio"] = fp_ratio;
    j["fn_ratio"] = fn_ratio;
    j["misclassified_ids"] = misclassified_ids;
    j["display"] = {{"accuracy", format_percent(accuracy)},
                    {"f1", format_percent(macro_f1)},
                    {"fp_ratio", format_percent(fp_ratio)},
                    {"fn_ratio", format_percent(fn_ratio)}};
    return j;
}

}  // namespace snowdet
