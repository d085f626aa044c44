#include "support.hpp"

#include <atomic>
#include <mutex>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <unistd.h>

#include "snowdet/synthetic.hpp"

namespace snowdet::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_png(const fs::path& path, const cv::Mat& rgb) {
    fs::create_directories(path.parent_path());
    cv::Mat bgr;
    if (rgb.channels() == 3) cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    else bgr = rgb;
    cv::imwrite(path.string(), bgr);
}

cv::Mat solid_rgb(int height, int width, cv::Vec3b rgb) { return cv::Mat(height, width, CV_8UC3, rgb); }

cv::Mat noise_rgb(int height, int width, std::uint32_t seed) {
    cv::Mat m(height, width, CV_8UC3);
    cv::RNG rng(seed);
    rng.fill(m, cv::RNG::UNIFORM, 0, 256);
    return m;
}

const SmallRun& small_run() {
    static std::once_flag once;
    static SmallRun run;
    static TempDir dir("snowdet-smallrun");
    std::call_once(once, [] {
        DemoDataOptions demo;
        demo.out_dir = dir.path() / "data";
        demo.pairs = 8;
        demo.test_per_class = 3;
        demo.image_size = 64;
        const auto generated = generate_demo_data(demo);
        run.data_dir = demo.out_dir;
        run.recipe = load_recipe(generated.recipe);
        run.recipe.output_root = dir.path() / "run";
        run.recipe.train.max_epochs = 10;
        run.recipe.train.eval_epochs = {5, 10};
        run.run_dir = run.recipe.output_root;
        run.outcome = run_recipe(run.recipe);
        if (run.outcome.exit_code != 0) {
            throw Error("small recipe run failed in " + run.outcome.failed_stage + ": " + run.outcome.error);
        }
        run.manifest = load_manifest(run.run_dir / "manifest.split.jsonl");
    });
    return run;
}

}  // namespace snowdet::testing
