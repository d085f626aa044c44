#pragma once

#include <cstdint>
#include <filesystem>

#include <opencv2/core.hpp>

namespace snowdet {

struct DemoDataOptions {
    std::filesystem::path out_dir;
    std::uint64_t seed = 7;
    int image_size = 256;
    /// Locations with one snow and one snow-free image each.
    int pairs = 38;
    /// Unpaired test images per class, each from its own location.
    int test_per_class = 11;
};

struct DemoDataResult {
    std::filesystem::path train_val_root;
    std::filesystem::path test_root;
    std::filesystem::path recipe;
    int train_val_images = 0;
    int test_images = 0;
};

/// Writes a synthetic pavement dataset:
///
///     <out>/train_val/{snow,snow_free}/locNNN_<label>.png   (paired by location)
///     <out>/train_val/metadata.jsonl
///     <out>/test/{snow,snow_free}/tlocNNN_<label>.png       (distinct locations)
///     <out>/recipe.json                                      (default run recipe)
///
/// Snow-free images are dark textured asphalt; snow images show the same
/// location's pavement mostly covered by bright, low-saturation snow.
/// Output is a pure function of the options.
DemoDataResult generate_demo_data(const DemoDataOptions& options);

/// One synthetic RGB image (exposed for tests).
cv::Mat synth_pavement(std::uint64_t location_seed, bool snow, int size);

}  // namespace snowdet
