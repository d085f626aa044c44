#include "snowdet/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "snowdet/io.hpp"
#include "snowdet/rng.hpp"
#include "snowdet/types.hpp"

namespace snowdet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Smooth random field in [0, 1] from a coarse grid upsampled bicubically.
cv::Mat blob_field(Rng& rng, int size, int grid) {
    cv::Mat coarse(grid, grid, CV_32F);
    for (int y = 0; y < grid; ++y)
        for (int x = 0; x < grid; ++x) coarse.at<float>(y, x) = static_cast<float>(rng.uniform());
    cv::Mat field;
    cv::resize(coarse, field, cv::Size(size, size), 0, 0, cv::INTER_CUBIC);
    cv::normalize(field, field, 0.0, 1.0, cv::NORM_MINMAX);
    return field;
}

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5); }

}  // namespace

cv::Mat synth_pavement(std::uint64_t location_seed, bool snow, int size) {
    // The pavement depends only on the location; snow is layered on top with
    // its own stream so both images of a pair share the ground texture.
    Rng rng = Rng::derive(location_seed, 0);
    const double base = rng.uniform(55.0, 105.0);
    const double tint = rng.uniform(-6.0, 6.0);
    const double grain = rng.uniform(8.0, 16.0);
    const cv::Mat shade = blob_field(rng, size, 4 + static_cast<int>(rng.below(4)));

    cv::Mat img(size, size, CV_8UC3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double g = base + 25.0 * (shade.at<float>(y, x) - 0.5) + grain * rng.normal();
            img.at<cv::Vec3b>(y, x) = {clamp8(g + tint), clamp8(g), clamp8(g - tint)};
        }
    }
    // Slab seams and cracks.
    const int seams = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < seams; ++i) {
        const int pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
        const cv::Scalar dark(base * 0.45, base * 0.45, base * 0.45);
        if (rng.below(2) == 0) cv::line(img, {pos, 0}, {pos, size - 1}, dark, 2);
        else cv::line(img, {0, pos}, {size - 1, pos}, dark, 2);
    }
    const int cracks = static_cast<int>(rng.below(4));
    for (int i = 0; i < cracks; ++i) {
        cv::Point p(static_cast<int>(rng.below(size)), static_cast<int>(rng.below(size)));
        for (int k = 0; k < 6; ++k) {
            cv::Point q = p + cv::Point(static_cast<int>(rng.uniform(-25, 25)), static_cast<int>(rng.uniform(-25, 25)));
            cv::line(img, p, q, cv::Scalar(base * 0.35, base * 0.35, base * 0.35), 1);
            p = q;
        }
    }
    if (!snow) return img;

    Rng snow_rng = Rng::derive(location_seed, 1);
    const cv::Mat cover = blob_field(snow_rng, size, 3 + static_cast<int>(snow_rng.below(4)));
    const double coverage = snow_rng.uniform(0.85, 1.0);
    const double brightness = snow_rng.uniform(205.0, 245.0);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double c = cover.at<float>(y, x);
            if (c > coverage) continue;
            // Feathered edge over the last 0.08 of the threshold.
            const double alpha = std::min(1.0, (coverage - c) / 0.08);
            const double s = brightness + 10.0 * snow_rng.normal();
            auto& px = img.at<cv::Vec3b>(y, x);
            const cv::Vec3d snow_px(s - 4.0, s - 1.0, s + 3.0);
            for (int ch = 0; ch < 3; ++ch) px[ch] = clamp8((1.0 - alpha) * px[ch] + alpha * snow_px[ch]);
        }
    }
    // Footprints.
    const int prints = static_cast<int>(snow_rng.below(5));
    for (int i = 0; i < prints; ++i) {
        const cv::Point c(static_cast<int>(snow_rng.below(size)), static_cast<int>(snow_rng.below(size)));
        cv::ellipse(img, c, {size / 40 + 2, size / 20 + 2}, snow_rng.uniform(0, 180), 0, 360,
                    cv::Scalar(brightness * 0.7, brightness * 0.72, brightness * 0.78), -1);
    }
    return img;
}

namespace {

void write_png(const fs::path& path, const cv::Mat& rgb) {
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    std::vector<unsigned char> buf;
    cv::imencode(".png", bgr, buf);
    write_file_atomic(path, std::string(buf.begin(), buf.end()));
}

std::string loc_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
    return buf;
}

}  // namespace

DemoDataResult generate_demo_data(const DemoDataOptions& options) {
    if (options.out_dir.empty()) throw Error("demo-data needs an output directory");
    if (options.image_size < 32) throw Error("demo-data image size must be at least 32");
    if (options.pairs < 2 || options.test_per_class < 1) throw Error("demo-data needs >= 2 pairs and >= 1 test image per class");

    DemoDataResult r;
    r.train_val_root = options.out_dir / "train_val";
    r.test_root = options.out_dir / "test";
    for (const auto* label : {"snow", "snow_free"}) {
        fs::create_directories(r.train_val_root / label);
        fs::create_directories(r.test_root / label);
    }

    std::string metadata;
    for (int i = 0; i < options.pairs; ++i) {
        const auto loc = loc_name("loc", i);
        const std::uint64_t loc_seed = Rng::derive(options.seed, 1000 + static_cast<std::uint64_t>(i)).next();
        for (bool snow : {true, false}) {
            const std::string label = snow ? "snow" : "snow_free";
            const auto file = label + "/" + loc + "_" + label + ".png";
            write_png(r.train_val_root / file, synth_pavement(loc_seed, snow, options.image_size));
            char ts[32];
            std::snprintf(ts, sizeof(ts), "2024-01-%02dT%02d:00:00Z", 1 + i % 28, snow ? 9 : 15);
            metadata += json{{"file", file}, {"location_id", loc}, {"captured_at", ts}}.dump() + "\n";
            ++r.train_val_images;
        }
    }
    write_file_atomic(r.train_val_root / "metadata.jsonl", metadata);

    // Test images come from their own locations and seeds and are not paired.
    for (int i = 0; i < 2 * options.test_per_class; ++i) {
        const bool snow = i < options.test_per_class;
        const std::string label = snow ? "snow" : "snow_free";
        const auto loc = loc_name("tloc", i);
        const std::uint64_t loc_seed = Rng::derive(options.seed ^ 0x5EED7E57ULL, 5000 + static_cast<std::uint64_t>(i)).next();
        write_png(r.test_root / label / (loc + "_" + label + ".png"), synth_pavement(loc_seed, snow, options.image_size));
        ++r.test_images;
    }

    r.recipe = options.out_dir / "recipe.json";
    json recipe = {
        {"seed", 42},
        {"output_root", "run"},
        {"ingest", {{"root", "train_val"}, {"test_root", "test"}}},
        {"split", {{"train_fraction", 0.8}}},
        {"backbone", {{"init", "seeded"}, {"backbone_seed", 2024}}},
        {"sweep", {{"archs", {"vgg19", "resnet50"}},
                   {"learning_rates", {1e-4}},
                   {"max_epochs", 25},
                   {"eval_epochs", {15, 20, 25}},
                   {"checkpoint_interval", 5},
                   {"batch_size", 4}}},
        {"ensemble", {{"decision_threshold", 0.5}}},
        {"eval", {{"split", "test"}}},
        {"export", {{"enabled", true}}}};
    write_json_atomic(r.recipe, recipe);
    return r;
}

}  // namespace snowdet
