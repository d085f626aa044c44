#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "snowdet/bundle.hpp"
#include "snowdet/gallery.hpp"
#include "snowdet/metrics.hpp"

namespace snowdet {

/// Table-1-style evaluation of a bundle on one split: one report for the
/// ensemble and one per member.
struct Evaluation {
    Split split = Split::test;
    MetricsReport ensemble;
    MetricsReport model_a;
    MetricsReport model_b;
    std::vector<PredictionResult> predictions;
};

Evaluation evaluate_bundle(const EnsembleBundle& bundle, const DatasetManifest& manifest, Split split,
                           FeatureCache* cache = nullptr);

/// Deterministic report document: no timestamps, no absolute paths.
/// `provenance` (seed, config hash, ...) is embedded verbatim.
nlohmann::json report_document(const Evaluation& evaluation, const EnsembleBundle& bundle,
                               const nlohmann::json& provenance = nlohmann::json::object());

/// Plain-text table with F1, accuracy, FP/N and FN/P per row.
std::string report_table(const Evaluation& evaluation, const EnsembleBundle& bundle);

struct WrittenReport {
    std::filesystem::path report_json;
    std::filesystem::path table;
    GalleryResult gallery;
};

/// Writes report.json, report.txt and the gallery into `out_dir`.
WrittenReport write_evaluation(const std::filesystem::path& out_dir, const Evaluation& evaluation,
                               const EnsembleBundle& bundle, const DatasetManifest& manifest,
                               const nlohmann::json& provenance = nlohmann::json::object());

}  // namespace snowdet
