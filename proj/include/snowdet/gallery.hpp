#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snowdet/dataset.hpp"
#include "snowdet/metrics.hpp"
#include "snowdet/prediction.hpp"

namespace snowdet {

struct GalleryOptions {
    int thumb_size = 160;
    std::string title = "Snow detection: evaluation gallery";
    std::string model_a_name = "model A";
    std::string model_b_name = "model B";
};

struct GalleryResult {
    std::filesystem::path page;
    int tiles = 0;
    int flagged = 0;
    int placeholders = 0;
    std::vector<std::string> warnings;
};

/// Writes <out_dir>/index.html plus thumbnails under <out_dir>/thumbs/. One
/// tile per prediction showing the image, ground truth, both members' and
/// the ensemble's snow probability; misclassified tiles are set in bold with
/// a highlighted border. Records missing from the manifest or from disk get
/// a placeholder tile and a warning.
GalleryResult render_gallery(const MetricsReport& report, std::span<const PredictionResult> predictions,
                             const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                             const GalleryOptions& options = {});

}  // namespace snowdet
