#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "json.hpp"
#include "snowdet/ensemble.hpp"
#include "snowdet/features.hpp"
#include "snowdet/trainer.hpp"

namespace snowdet {

/// Directory holding two member checkpoints plus the fitted ensemble config:
///
///     <dir>/ensemble.json
///     <dir>/model_a.ckpt  <dir>/model_a.meta
///     <dir>/model_b.ckpt  <dir>/model_b.meta
///
/// Loaded bundles are immutable; prediction is const and thread-safe.
class EnsembleBundle {
public:
    /// Copies both checkpoints into `dir` and writes ensemble.json.
    /// The members must share class order and preprocessing constants.
    static void write(const std::filesystem::path& dir, const Checkpoint& model_a, const Checkpoint& model_b,
                      EnsembleConfig config, const nlohmann::json& provenance = nlohmann::json::object());

    static EnsembleBundle load(const std::filesystem::path& dir);

    const EnsembleConfig& config() const { return config_; }
    const PreprocessConfig& preprocess() const { return preprocess_; }
    const ClassifierModel& model_a() const { return *model_a_; }
    const ClassifierModel& model_b() const { return *model_b_; }
    const CheckpointMeta& meta_a() const { return meta_a_; }
    const CheckpointMeta& meta_b() const { return meta_b_; }
    /// SHA-256 over ensemble.json and both members' files.
    const std::string& digest() const { return digest_; }
    /// Contents of ensemble.json as written.
    const nlohmann::json& sidecar() const { return sidecar_; }

    /// Metadata served by the model-info endpoint.
    nlohmann::json info() const;

    PredictionResult predict_image(const cv::Mat& image) const;
    std::vector<PredictionResult> predict_records(std::span<const ImageRecord> records,
                                                  FeatureCache* cache = nullptr) const;

private:
    EnsembleBundle() = default;

    EnsembleConfig config_;
    PreprocessConfig preprocess_;
    CheckpointMeta meta_a_, meta_b_;
    std::shared_ptr<ClassifierModel> model_a_, model_b_;
    std::string digest_;
    nlohmann::json sidecar_;
};

/// Per-member probabilities over the records, ready for ensembling.
std::pair<ProbabilityBatch, ProbabilityBatch> member_probabilities(const ClassifierModel& model_a,
                                                                   const ClassifierModel& model_b,
                                                                   std::span<const ImageRecord> records,
                                                                   const PreprocessConfig& preprocess,
                                                                   FeatureCache* cache);

}  // namespace snowdet
