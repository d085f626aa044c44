#include "snowdet/preprocess.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "snowdet/digest.hpp"
#include "snowdet/io.hpp"
#include "snowdet/types.hpp"

namespace snowdet {

namespace F = torch::nn::functional;

namespace {

std::string_view interpolation_name(Interpolation mode) {
    switch (mode) {
        case Interpolation::bilinear: return "bilinear";
        case Interpolation::nearest: return "nearest";
        case Interpolation::bicubic: return "bicubic";
    }
    return "bilinear";
}

Interpolation parse_interpolation(std::string_view name) {
    if (name == "bilinear") return Interpolation::bilinear;
    if (name == "nearest") return Interpolation::nearest;
    if (name == "bicubic") return Interpolation::bicubic;
    throw Error("unknown interpolation '" + std::string(name) + "'");
}

}  // namespace

void PreprocessConfig::validate() const {
    if (height <= 0 || width <= 0) throw Error("preprocess target size must be positive");
    for (double s : channel_std) {
        if (!(s > 0.0)) throw Error("preprocess channel_std components must be positive");
    }
}

nlohmann::json PreprocessConfig::to_json() const {
    return {{"target_size", {height, width}},
            {"channel_mean", channel_mean},
            {"channel_std", channel_std},
            {"interpolation", interpolation_name(interpolation)},
            {"center_crop_square", center_crop_square}};
}

PreprocessConfig PreprocessConfig::from_json(const nlohmann::json& j) {
    PreprocessConfig c;
    c.height = j.at("target_size").at(0).get<int>();
    c.width = j.at("target_size").at(1).get<int>();
    c.channel_mean = j.at("channel_mean").get<std::array<double, 3>>();
    c.channel_std = j.at("channel_std").get<std::array<double, 3>>();
    c.interpolation = parse_interpolation(j.value("interpolation", "bilinear"));
    c.center_crop_square = j.value("center_crop_square", true);
    c.validate();
    return c;
}

std::string PreprocessConfig::hash() const { return sha256_hex(canonical_json(to_json())); }

cv::Mat decode_rgb(std::span<const unsigned char> bytes) {
    if (bytes.empty()) throw Error("empty image payload");
    const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<unsigned char*>(bytes.data()));
    cv::Mat bgr;
    try {
        bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
    } catch (const cv::Exception& e) {
        throw Error(std::string("image decoding failed: ") + e.what());
    }
    if (bgr.empty()) throw Error("image decoding failed: unrecognised or corrupt data");
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

cv::Mat load_rgb(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
        return decode_rgb({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

cv::Mat ensure_rgb(const cv::Mat& image) {
    if (image.empty() || image.rows < 1 || image.cols < 1) throw Error("image has a zero dimension");
    if (image.depth() != CV_8U) throw Error("image must have 8-bit channels");
    cv::Mat rgb;
    switch (image.channels()) {
        case 1: cv::cvtColor(image, rgb, cv::COLOR_GRAY2RGB); break;
        case 3: rgb = image; break;
        case 4: cv::cvtColor(image, rgb, cv::COLOR_RGBA2RGB); break;
        default: throw Error("unsupported channel count " + std::to_string(image.channels()));
    }
    return rgb;
}

namespace {

/// [H, W, 3] uint8 RGB -> [1, 3, h, w] float in 0..255 after crop + resize,
/// rounded back to integer intensities.
torch::Tensor resize_tensor(const cv::Mat& image, const PreprocessConfig& config) {
    config.validate();
    cv::Mat rgb = ensure_rgb(image);
    if (config.center_crop_square && rgb.rows != rgb.cols) {
        const int side = std::min(rgb.rows, rgb.cols);
        rgb = rgb(cv::Rect((rgb.cols - side) / 2, (rgb.rows - side) / 2, side, side));
    }
    if (!rgb.isContinuous()) rgb = rgb.clone();

    auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
    auto x = hwc.permute({2, 0, 1}).unsqueeze(0).to(torch::kFloat32);
    if (rgb.rows == config.height && rgb.cols == config.width) return x;

    auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>{config.height, config.width});
    switch (config.interpolation) {
        case Interpolation::nearest: opts.mode(torch::kNearest); break;
        case Interpolation::bilinear: opts.mode(torch::kBilinear).align_corners(false).antialias(true); break;
        case Interpolation::bicubic: opts.mode(torch::kBicubic).align_corners(false).antialias(true); break;
    }
    return F::interpolate(x, opts).round().clamp(0.0, 255.0);
}

}  // namespace

cv::Mat resize_rgb(const cv::Mat& image, const PreprocessConfig& config) {
    auto x = resize_tensor(image, config).squeeze(0).permute({1, 2, 0}).to(torch::kUInt8).contiguous();
    cv::Mat out(config.height, config.width, CV_8UC3);
    std::memcpy(out.data, x.data_ptr(), x.nbytes());
    return out;
}

torch::Tensor preprocess_image(const cv::Mat& image, const PreprocessConfig& config) {
    torch::NoGradGuard no_grad;
    auto x = resize_tensor(image, config).squeeze(0).div(255.0);
    const auto mean = torch::tensor({config.channel_mean[0], config.channel_mean[1], config.channel_mean[2]},
                                    torch::kFloat32).view({3, 1, 1});
    const auto stdev = torch::tensor({config.channel_std[0], config.channel_std[1], config.channel_std[2]},
                                     torch::kFloat32).view({3, 1, 1});
    return x.sub(mean).div(stdev).contiguous();
}

}  // namespace snowdet
