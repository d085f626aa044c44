#pragma once

#include <map>
#include <mutex>
#include <span>
#include <string>

#include <torch/torch.h>

#include "snowdet/dataset.hpp"
#include "snowdet/models.hpp"
#include "snowdet/preprocess.hpp"

namespace snowdet {

/// Loads and preprocesses one record's image: [3, S, S].
torch::Tensor load_preprocessed(const ImageRecord& record, const PreprocessConfig& config);

/// Memoises frozen-backbone features per (backbone, preprocessing, record).
/// With the backbone frozen, in inference mode and no augmentation, a
/// record's features are fixed, so training can run the head alone.
class FeatureCache {
public:
    /// [N, F] features for the records, computing missing rows.
    torch::Tensor features_for(const ClassifierModel& model, std::span<const ImageRecord> records,
                               const PreprocessConfig& config);

    void put(const ClassifierModel& model, const ImageRecord& record, const PreprocessConfig& config,
             torch::Tensor row);
    std::size_t size() const;

private:
    static std::string key(const ClassifierModel& model, const ImageRecord& record, const PreprocessConfig& config);

    mutable std::mutex mutex_;
    std::map<std::string, torch::Tensor> rows_;
};

/// Features without memoisation (cache may be null).
torch::Tensor extract_features(const ClassifierModel& model, std::span<const ImageRecord> records,
                               const PreprocessConfig& config, FeatureCache* cache);

}  // namespace snowdet
