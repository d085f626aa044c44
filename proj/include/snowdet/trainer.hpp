#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "snowdet/dataset.hpp"
#include "snowdet/features.hpp"
#include "snowdet/models.hpp"
#include "snowdet/preprocess.hpp"

namespace snowdet {

/// Fine-tuning hyperparameters. The optimiser is Adam with PyTorch's
/// defaults (betas 0.9/0.999, eps 1e-8, no weight decay); the loss is
/// two-class cross-entropy over the head scores.
struct TrainConfig {
    double learning_rate = 1e-4;
    int max_epochs = 25;
    std::vector<int> eval_epochs{15, 20, 25};
    int checkpoint_interval = 5;
    int batch_size = 4;
    std::uint64_t seed = 42;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);

    /// The learning-rate grid {1e-4, 1e-3, 1e-2, 1e-1}.
    static std::vector<double> default_learning_rates();
};

struct CheckpointMeta {
    std::string run_id;
    Arch arch = Arch::resnet50;
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    std::string manifest_hash;
    std::uint64_t seed = 0;

    BackboneSpec backbone;
    PreprocessConfig preprocess;
    std::string config_hash;
    /// File name of the head weights, relative to the meta file.
    std::string weights_file;

    nlohmann::json to_json() const;
    static CheckpointMeta from_json(const nlohmann::json& j);
};

struct Checkpoint {
    CheckpointMeta meta;
    std::filesystem::path meta_path;
    std::filesystem::path weights_path;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    int steps = 0;
};

struct TrainResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<EpochStats> history;
};

struct TrainContext {
    /// Checkpoints go to <run_root>/<run_id>/<arch>/epoch_<k>.{ckpt,meta}.
    std::filesystem::path run_root = "runs";
    std::string run_id;
    std::string manifest_hash;
    PreprocessConfig preprocess;
    FeatureCache* cache = nullptr;
    std::function<void(const EpochStats&)> on_epoch;
};

/// Raised when a mini-batch yields a non-finite loss.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& message, int epoch, int step, std::vector<std::string> batch_ids);
    int epoch;
    int step;
    std::vector<std::string> batch_ids;
};

/// Mini-batch Adam on the head only. Each epoch shuffles the training set with
/// a stream derived from (seed, epoch); the last partial batch is kept. After
/// every checkpoint_interval epochs the head weights and a CheckpointMeta
/// with train/val loss and accuracy are written atomically.
TrainResult train(ClassifierModel& model, const std::vector<ImageRecord>& train_split,
                  const std::vector<ImageRecord>& val_split, const TrainConfig& config, const TrainContext& context);

/// ceil(n / batch_size)
int steps_per_epoch(std::size_t n, int batch_size);

std::string make_run_id(double learning_rate, std::uint64_t seed);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& meta_path);
Checkpoint read_checkpoint(const std::filesystem::path& meta_path);
/// Rebuilds the model recorded in the meta and loads its head weights.
ClassifierModel load_checkpoint(const Checkpoint& checkpoint);
/// Loads only the head weights into an already built model with the same backbone.
void load_head_from(ClassifierModel& model, const Checkpoint& checkpoint);

struct SplitEvaluation {
    double loss = 0.0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    torch::Tensor probabilities;
};

/// Mean cross-entropy, accuracy (snow iff p_snow >= 0.5) and macro-F1.
SplitEvaluation evaluate_features(const ClassifierModel& model, const torch::Tensor& features,
                                  const std::vector<Label>& labels);

struct SweepCell {
    Arch arch = Arch::resnet50;
    double learning_rate = 0.0;
    int epoch = 0;
    bool ok = true;
    std::string error;
    double val_macro_f1 = 0.0;
    double val_accuracy = 0.0;
    double val_loss = 0.0;
    std::filesystem::path checkpoint_meta;

    nlohmann::json to_json() const;
};

struct Leaderboard {
    /// Successful cells, ranked by validation macro-F1 (non-increasing), then
    /// lower validation loss, lower learning rate, earlier epoch.
    std::vector<SweepCell> ranked;
    /// One entry per failed (arch, lr) run.
    std::vector<SweepCell> failures;

    std::optional<SweepCell> best(Arch arch) const;
    nlohmann::json to_json() const;
};

struct SweepOptions {
    std::vector<Arch> archs{Arch::vgg19, Arch::resnet50};
    std::vector<TrainConfig> grid;
    /// Template for the backbones (init source, weights dir, backbone seed).
    BackboneSpec backbone;
    std::filesystem::path run_root = "runs";
    PreprocessConfig preprocess;
    FeatureCache* cache = nullptr;
    std::function<void(const std::string&)> log;
    /// Embedded in sweep_summary.json.
    nlohmann::json provenance = nlohmann::json::object();
};

/// Grid of configs, one per learning rate, sharing the other defaults.
std::vector<TrainConfig> make_grid(const std::vector<double>& learning_rates, const TrainConfig& base);

/// One training run per (arch, config); each run's checkpoints at the
/// config's eval_epochs are scored on the validation split. A failing run is
/// recorded and the sweep continues. Writes <run_root>/sweep_summary.json.
Leaderboard sweep(const DatasetManifest& manifest, const SweepOptions& options);

}  // namespace snowdet
