#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "json.hpp"

namespace snowdet {

enum class Interpolation { bilinear, nearest, bicubic };

/// Resize target and normalisation constants. Defaults are the ImageNet-1K
/// statistics the backbones were pre-trained with.
struct PreprocessConfig {
    int height = 128;
    int width = 128;
    std::array<double, 3> channel_mean{0.485, 0.456, 0.406};
    std::array<double, 3> channel_std{0.229, 0.224, 0.225};
    Interpolation interpolation = Interpolation::bilinear;
    /// Non-square inputs are centre-cropped to a square before resizing.
    bool center_crop_square = true;

    void validate() const;
    nlohmann::json to_json() const;
    static PreprocessConfig from_json(const nlohmann::json& j);
    /// SHA-256 of the canonical JSON form; stored with every checkpoint.
    std::string hash() const;

    bool operator==(const PreprocessConfig&) const = default;
};

/// Decodes an encoded image (JPEG, PNG, ...) into 8-bit RGB. Grayscale is
/// replicated, alpha dropped, EXIF orientation applied.
cv::Mat decode_rgb(std::span<const unsigned char> bytes);
cv::Mat load_rgb(const std::filesystem::path& path);

/// Converts a 1-, 3- (RGB) or 4-channel (RGBA) 8-bit image to 3-channel RGB.
cv::Mat ensure_rgb(const cv::Mat& image);

/// Resizes (antialiased for bilinear/bicubic, result re-quantised to 8 bit),
/// scales to [0,1] and normalises per channel. Returns a float tensor of shape
/// [3, height, width].
torch::Tensor preprocess_image(const cv::Mat& image, const PreprocessConfig& config = {});

/// The resize step alone, as 8-bit RGB [height, width, 3].
cv::Mat resize_rgb(const cv::Mat& image, const PreprocessConfig& config = {});

}  // namespace snowdet
