#include <array>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "doctest.h"
#include "snowdet/preprocess.hpp"
#include "support.hpp"

using namespace snowdet;
using snowdet::testing::noise_rgb;
using snowdet::testing::solid_rgb;

namespace {

// (1 - mean) / std and (0 - mean) / std, evaluated by hand to four decimals.
constexpr std::array<double, 3> kWhite{2.2489, 2.4286, 2.6400};
constexpr std::array<double, 3> kBlack{-2.1179, -2.0357, -1.8044};

std::vector<unsigned char> encode(const cv::Mat& rgb, const std::string& ext) {
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    std::vector<unsigned char> buf;
    cv::imencode(ext, bgr, buf);
    return buf;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("constant image at the channel means maps to ~0") {
    const auto out = preprocess_image(solid_rgb(300, 300, {124, 116, 104}));
    CHECK(out.abs().max().item<double>() < 0.02);
}

TEST_CASE("all-white and all-black images give the derived channel constants") {
    for (auto [colour, expected] : {std::pair{cv::Vec3b{255, 255, 255}, kWhite}, std::pair{cv::Vec3b{0, 0, 0}, kBlack}}) {
        const auto out = preprocess_image(solid_rgb(97, 97, colour));
        for (int c = 0; c < 3; ++c) {
            CAPTURE(c);
            CHECK(std::abs(out[c].max().item<double>() - expected[c]) < 1e-3);
            CHECK(std::abs(out[c].min().item<double>() - expected[c]) < 1e-3);
        }
    }
}

TEST_CASE("output shape is always 3x128x128") {
    for (auto [h, w] : {std::pair{1, 1}, std::pair{128, 128}, std::pair{3024, 3024}, std::pair{480, 640},
                        std::pair{640, 480}, std::pair{7, 500}}) {
        CAPTURE(h);
        CAPTURE(w);
        const auto out = preprocess_image(noise_rgb(h, w, static_cast<std::uint32_t>(h * 31 + w)));
        CHECK(out.sizes() == torch::IntArrayRef{3, 128, 128});
        CHECK((out.scalar_type() == torch::kFloat32));
    }
}

TEST_CASE("output follows (resized / 255 - mean) / std, channel first") {
    const auto img = noise_rgb(256, 256, 5);
    PreprocessConfig cfg;
    const auto resized = resize_rgb(img, cfg);
    const auto out = preprocess_image(img, cfg);
    for (int y : {0, 17, 64, 127}) {
        for (int x : {0, 33, 90, 127}) {
            const auto px = resized.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c) {
                const double expect = (px[c] / 255.0 - cfg.channel_mean[c]) / cfg.channel_std[c];
                CHECK(out[c][y][x].item<double>() == doctest::Approx(expect).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("affine consistency on constant images") {
    PreprocessConfig cfg;
    cv::RNG rng(3);
    for (int i = 0; i < 20; ++i) {
        const cv::Vec3b colour(rng.uniform(0, 256), rng.uniform(0, 256), rng.uniform(0, 256));
        const auto img = solid_rgb(50 + i, 50 + i, colour);
        const auto out = preprocess_image(img, cfg);
        for (int c = 0; c < 3; ++c) {
            const auto back = (out[c] * cfg.channel_std[c] + cfg.channel_mean[c]).clamp(0.0, 1.0) * 255.0;
            CHECK((back - static_cast<double>(colour[c])).abs().max().item<double>() <= 1.0 + 1e-4);
        }
    }
}

TEST_CASE("non-square inputs are centre-cropped before resizing") {
    // 100 x 300: the central 100 x 100 square is red, the flanks blue.
    cv::Mat img = solid_rgb(100, 300, {0, 0, 255});
    img(cv::Rect(100, 0, 100, 100)).setTo(cv::Vec3b{255, 0, 0});
    const auto resized = resize_rgb(img);
    cv::Mat diff;
    cv::absdiff(resized, solid_rgb(128, 128, {255, 0, 0}), diff);
    CHECK(cv::countNonZero(diff.reshape(1)) == 0);

    PreprocessConfig stretch;
    stretch.center_crop_square = false;
    cv::Mat r2 = resize_rgb(img, stretch);
    CHECK(r2.at<cv::Vec3b>(64, 2)[2] > 200);
}

TEST_CASE("grey and alpha inputs are converted to RGB") {
    cv::Mat grey(40, 40, CV_8UC1, cv::Scalar(77));
    const auto a = preprocess_image(grey);
    const auto b = preprocess_image(solid_rgb(40, 40, {77, 77, 77}));
    CHECK(torch::equal(a, b));

    cv::Mat rgba(40, 40, CV_8UC4, cv::Scalar(10, 20, 30, 0));
    CHECK(torch::equal(preprocess_image(rgba), preprocess_image(solid_rgb(40, 40, {10, 20, 30}))));

    CHECK(ensure_rgb(grey).channels() == 3);
}

TEST_CASE("zero-dimension input is an error") {
    CHECK_THROWS_AS(preprocess_image(cv::Mat()), Error);
    CHECK_THROWS_AS(preprocess_image(cv::Mat(0, 10, CV_8UC3)), Error);
    CHECK_THROWS_AS(ensure_rgb(cv::Mat(5, 5, CV_8UC2)), Error);
}

TEST_CASE("decoding PNG and JPEG, rejecting garbage") {
    const auto img = noise_rgb(60, 80, 9);
    const auto png = encode(img, ".png");
    const auto decoded = decode_rgb(png);
    cv::Mat diff;
    cv::absdiff(decoded, img, diff);
    CHECK(cv::countNonZero(diff.reshape(1)) == 0);

    const auto jpg = decode_rgb(encode(solid_rgb(32, 32, {200, 40, 40}), ".jpg"));
    CHECK(jpg.channels() == 3);
    CHECK(jpg.at<cv::Vec3b>(16, 16)[0] > 180);  // red stays in channel 0 (RGB order)

    const std::vector<unsigned char> junk{'n', 'o', 't', ' ', 'a', 'n', ' ', 'i', 'm', 'a', 'g', 'e'};
    CHECK_THROWS_AS(decode_rgb(junk), Error);
    CHECK_THROWS_AS(decode_rgb(std::vector<unsigned char>{}), Error);
}

TEST_CASE("identical bytes give identical arrays") {
    const auto bytes = encode(noise_rgb(300, 200, 4), ".png");
    CHECK(torch::equal(preprocess_image(decode_rgb(bytes)), preprocess_image(decode_rgb(bytes))));
}

TEST_CASE("config validation, serialisation and hash") {
    PreprocessConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(PreprocessConfig::from_json(cfg.to_json()) == cfg);
    CHECK(cfg.to_json()["target_size"] == nlohmann::json::array({128, 128}));
    const auto h = cfg.hash();
    CHECK(h.size() == 64);

    auto other = cfg;
    other.interpolation = Interpolation::bicubic;
    CHECK(other.hash() != h);
    CHECK_NOTHROW(preprocess_image(noise_rgb(64, 64, 1), other));
    other.interpolation = Interpolation::nearest;
    CHECK_NOTHROW(preprocess_image(noise_rgb(64, 64, 1), other));

    auto bad = cfg;
    bad.channel_std[1] = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.height = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

}
