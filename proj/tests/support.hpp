#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <opencv2/core.hpp>

#include "snowdet/dataset.hpp"
#include "snowdet/recipe.hpp"

namespace snowdet::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "snowdet");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Writes an RGB image as PNG (creating parent directories).
void write_png(const std::filesystem::path& path, const cv::Mat& rgb);
cv::Mat solid_rgb(int height, int width, cv::Vec3b rgb);
cv::Mat noise_rgb(int height, int width, std::uint32_t seed);

/// A small demo dataset plus a completed recipe run over it, built once per
/// process: 8 location pairs, 3 test images per class, 64 px images.
struct SmallRun {
    std::filesystem::path data_dir;
    std::filesystem::path run_dir;
    RunRecipe recipe;
    RecipeOutcome outcome;
    DatasetManifest manifest;
};
const SmallRun& small_run();

}  // namespace snowdet::testing
