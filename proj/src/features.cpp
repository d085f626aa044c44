#include "snowdet/features.hpp"

namespace snowdet {

torch::Tensor load_preprocessed(const ImageRecord& record, const PreprocessConfig& config) {
    return preprocess_image(load_rgb(record.path), config);
}

std::string FeatureCache::key(const ClassifierModel& model, const ImageRecord& record,
                              const PreprocessConfig& config) {
    return model.backbone_id() + "|" + config.hash() + "|" + record.id + "|" + record.path.string();
}

torch::Tensor FeatureCache::features_for(const ClassifierModel& model, std::span<const ImageRecord> records,
                                         const PreprocessConfig& config) {
    if (records.empty()) throw Error("no records to extract features for");
    std::vector<torch::Tensor> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        const auto k = key(model, r, config);
        {
            std::lock_guard lock(mutex_);
            if (auto it = rows_.find(k); it != rows_.end()) {
                rows.push_back(it->second);
                continue;
            }
        }
        auto row = model.features(load_preprocessed(r, config).unsqueeze(0)).squeeze(0);
        {
            std::lock_guard lock(mutex_);
            rows_.emplace(k, row);
        }
        rows.push_back(row);
    }
    return torch::stack(rows, 0);
}

void FeatureCache::put(const ClassifierModel& model, const ImageRecord& record, const PreprocessConfig& config,
                       torch::Tensor row) {
    std::lock_guard lock(mutex_);
    rows_[key(model, record, config)] = std::move(row);
}

std::size_t FeatureCache::size() const {
    std::lock_guard lock(mutex_);
    return rows_.size();
}

torch::Tensor extract_features(const ClassifierModel& model, std::span<const ImageRecord> records,
                               const PreprocessConfig& config, FeatureCache* cache) {
    if (cache) return cache->features_for(model, records, config);
    FeatureCache local;
    return local.features_for(model, records, config);
}

}  // namespace snowdet
