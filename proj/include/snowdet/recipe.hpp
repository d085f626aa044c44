#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "snowdet/models.hpp"
#include "snowdet/preprocess.hpp"
#include "snowdet/trainer.hpp"

namespace snowdet {

/// The full procedure as one reproducible configuration:
/// ingest -> pair -> split -> sweep -> fit ensemble weight -> eval -> export.
///
/// JSON layout (relative paths resolve against the recipe file's directory):
///
///     {"seed": 42, "output_root": "run",
///      "ingest": {"root": "...", "test_root": "..."},   // or "manifest": "path"
///      "split": {"train_fraction": 0.8},
///      "backbone": {"init": "pretrained"|"seeded", "weights_dir": "...", "backbone_seed": 0},
///      "preprocess": {...},
///      "sweep": {"archs": [...], "learning_rates": [...], "max_epochs": 25, ...},
///      "ensemble": {"decision_threshold": 0.5},
///      "eval": {"split": "test"},
///      "export": {"enabled": true}}
struct RunRecipe {
    std::uint64_t seed = 42;
    std::filesystem::path output_root;

    std::optional<std::filesystem::path> ingest_root;
    std::optional<std::filesystem::path> ingest_test_root;
    std::optional<std::filesystem::path> manifest;

    double train_fraction = 0.8;
    BackboneSpec backbone;
    PreprocessConfig preprocess;
    std::vector<Arch> archs{Arch::vgg19, Arch::resnet50};
    std::vector<double> learning_rates{1e-4};
    TrainConfig train;
    double decision_threshold = 0.5;
    Split eval_split = Split::test;
    bool export_enabled = true;

    static RunRecipe from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    nlohmann::json to_json() const;
    /// Hash of the resolved configuration, excluding output_root.
    std::string config_hash() const;
};

RunRecipe load_recipe(const std::filesystem::path& path);

struct RecipeOutcome {
    int exit_code = 0;
    std::string failed_stage;
    std::string error;
    std::filesystem::path report;
    std::filesystem::path bundle;
};

/// Runs every stage in order under <output_root>. Holds <output_root>/.lock
/// for the duration. On failure writes <output_root>/FAILED.json naming the
/// stage, keeps partial artifacts and returns a non-zero exit code.
RecipeOutcome run_recipe(const RunRecipe& recipe,
                         const std::function<void(const std::string&)>& log = {});

}  // namespace snowdet
