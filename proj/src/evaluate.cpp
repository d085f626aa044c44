#include "snowdet/evaluate.hpp"

#include <cstdio>

#include "snowdet/io.hpp"

namespace snowdet {

using nlohmann::json;

namespace {

MetricsReport member_report(const std::vector<PredictionResult>& preds, bool use_a, double threshold) {
    std::vector<LabeledOutcome> outcomes;
    for (const auto& p : preds) {
        const double snow = use_a ? p.probs_a[kSnowIndex] : p.probs_b[kSnowIndex];
        outcomes.push_back({p.record_id, *p.truth, decide(snow, threshold)});
    }
    return compute_report(std::span<const LabeledOutcome>(outcomes));
}

}  // namespace

Evaluation evaluate_bundle(const EnsembleBundle& bundle, const DatasetManifest& manifest, Split split,
                           FeatureCache* cache) {
    const auto records = manifest.records_in(split);
    if (records.empty()) throw Error("manifest has no records in split " + std::string(to_string(split)));
    Evaluation ev;
    ev.split = split;
    ev.predictions = bundle.predict_records(records, cache);
    ev.ensemble = compute_report(std::span<const PredictionResult>(ev.predictions));
    ev.model_a = member_report(ev.predictions, true, bundle.config().decision_threshold);
    ev.model_b = member_report(ev.predictions, false, bundle.config().decision_threshold);
    return ev;
}

json report_document(const Evaluation& ev, const EnsembleBundle& bundle, const json& provenance) {
    const std::string name_a(to_string(bundle.meta_a().arch));
    const std::string name_b(to_string(bundle.meta_b().arch));
    json doc;
    doc["code_version"] = code_version();
    doc["split"] = to_string(ev.split);
    doc["bundle_digest"] = bundle.digest();
    doc["weight_a"] = bundle.config().weight_a;
    doc["decision_threshold"] = bundle.config().decision_threshold;
    doc["members"] = {{"model_a", {{"arch", name_a}, {"epoch", bundle.meta_a().epoch},
                                   {"learning_rate", bundle.meta_a().learning_rate}}},
                      {"model_b", {{"arch", name_b}, {"epoch", bundle.meta_b().epoch},
                                   {"learning_rate", bundle.meta_b().learning_rate}}}};
    doc["provenance"] = provenance;
    doc["ensemble"] = ev.ensemble.to_json();
    doc["per_model"] = {{name_a, ev.model_a.to_json()}, {name_b, ev.model_b.to_json()}};
    doc["predictions"] = json::array();
    for (const auto& p : ev.predictions) {
        doc["predictions"].push_back({{"id", p.record_id},
                                      {"truth", p.truth ? json(to_string(*p.truth)) : json(nullptr)},
                                      {"label", to_string(p.label)},
                                      {"snow_probability", p.snow_probability()},
                                      {"per_model", {{name_a, p.probs_a[kSnowIndex]}, {name_b, p.probs_b[kSnowIndex]}}}});
    }
    return doc;
}

std::string report_table(const Evaluation& ev, const EnsembleBundle& bundle) {
    std::string out = "model       F1 (macro)  accuracy  FP/N    FN/P\n";
    auto row = [&](const std::string& name, const MetricsReport& r) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-11s %-11s %-9s %-7s %s\n", name.c_str(), format_percent(r.macro_f1).c_str(),
                      format_percent(r.accuracy).c_str(), format_percent(r.fp_ratio).c_str(),
                      format_percent(r.fn_ratio).c_str());
        out += buf;
    };
    row("ensemble", ev.ensemble);
    row(std::string(to_string(bundle.meta_a().arch)), ev.model_a);
    row(std::string(to_string(bundle.meta_b().arch)), ev.model_b);
    return out;
}

WrittenReport write_evaluation(const std::filesystem::path& out_dir, const Evaluation& ev,
                               const EnsembleBundle& bundle, const DatasetManifest& manifest,
                               const json& provenance) {
    WrittenReport w;
    w.report_json = out_dir / "report.json";
    w.table = out_dir / "report.txt";
    write_json_atomic(w.report_json, report_document(ev, bundle, provenance));
    write_file_atomic(w.table, report_table(ev, bundle));
    GalleryOptions opts;
    opts.model_a_name = std::string(to_string(bundle.meta_a().arch));
    opts.model_b_name = std::string(to_string(bundle.meta_b().arch));
    w.gallery = render_gallery(ev.ensemble, ev.predictions, manifest, out_dir, opts);
    return w;
}

}  // namespace snowdet
