#include "snowdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "snowdet/digest.hpp"
#include "snowdet/io.hpp"
#include "snowdet/metrics.hpp"
#include "snowdet/rng.hpp"

namespace snowdet {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be positive");
    if (max_epochs < 1) throw Error("max_epochs must be at least 1");
    if (checkpoint_interval < 1) throw Error("checkpoint_interval must be at least 1");
    if (max_epochs % checkpoint_interval != 0) throw Error("checkpoint_interval must divide max_epochs");
    if (batch_size < 1) throw Error("batch_size must be at least 1");
    for (int e : eval_epochs) {
        if (e < checkpoint_interval || e > max_epochs || e % checkpoint_interval != 0) {
            throw Error("eval epoch " + std::to_string(e) +
                        " is not a checkpointed epoch (multiple of checkpoint_interval, <= max_epochs)");
        }
    }
}

json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate},
            {"max_epochs", max_epochs},
            {"eval_epochs", eval_epochs},
            {"checkpoint_interval", checkpoint_interval},
            {"batch_size", batch_size},
            {"seed", seed},
            {"optimizer", {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}, {"weight_decay", 0.0}}},
            {"loss", "cross_entropy"}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.eval_epochs = j.value("eval_epochs", c.eval_epochs);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

std::vector<double> TrainConfig::default_learning_rates() { return {1e-4, 1e-3, 1e-2, 1e-1}; }

json CheckpointMeta::to_json() const {
    return {{"run_id", run_id},
            {"arch", to_string(arch)},
            {"epoch", epoch},
            {"learning_rate", learning_rate},
            {"train_loss", train_loss},
            {"train_accuracy", train_accuracy},
            {"val_loss", val_loss},
            {"val_accuracy", val_accuracy},
            {"manifest_hash", manifest_hash},
            {"seed", seed},
            {"class_order", class_order_names()},
            {"backbone", backbone.to_json()},
            {"preprocess", preprocess.to_json()},
            {"preprocess_hash", preprocess.hash()},
            {"config_hash", config_hash},
            {"weights_file", weights_file},
            {"code_version", code_version()}};
}

CheckpointMeta CheckpointMeta::from_json(const json& j) {
    CheckpointMeta m;
    m.run_id = j.at("run_id").get<std::string>();
    m.arch = parse_arch(j.at("arch").get<std::string>());
    m.epoch = j.at("epoch").get<int>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.train_loss = j.at("train_loss").get<double>();
    m.train_accuracy = j.at("train_accuracy").get<double>();
    m.val_loss = j.at("val_loss").get<double>();
    m.val_accuracy = j.at("val_accuracy").get<double>();
    m.manifest_hash = j.at("manifest_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.backbone = BackboneSpec::from_json(j.at("backbone"));
    m.preprocess = PreprocessConfig::from_json(j.at("preprocess"));
    m.config_hash = j.value("config_hash", "");
    m.weights_file = j.at("weights_file").get<std::string>();
    if (j.contains("class_order") && j["class_order"].get<std::array<std::string, 2>>() != class_order_names()) {
        throw Error("checkpoint " + m.run_id + " uses an unsupported class order");
    }
    return m;
}

TrainingDiverged::TrainingDiverged(const std::string& message, int epoch_, int step_, std::vector<std::string> ids)
    : Error(message), epoch(epoch_), step(step_), batch_ids(std::move(ids)) {}

int steps_per_epoch(std::size_t n, int batch_size) {
    return static_cast<int>((n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

std::string make_run_id(double learning_rate, std::uint64_t seed) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "lr%.0e_seed%llu", learning_rate, static_cast<unsigned long long>(seed));
    return buf;
}

namespace {

torch::Tensor label_tensor(const std::vector<Label>& labels) {
    std::vector<std::int64_t> v;
    v.reserve(labels.size());
    for (auto l : labels) v.push_back(static_cast<std::int64_t>(l));
    return torch::tensor(v, torch::kInt64);
}

std::vector<Label> labels_of(const std::vector<ImageRecord>& records) {
    std::vector<Label> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
}

std::int64_t count_correct(const torch::Tensor& probs, const torch::Tensor& targets) {
    const auto predicted = probs.select(1, kSnowIndex).ge(0.5).to(torch::kInt64);
    return predicted.eq(targets).sum().item<std::int64_t>();
}

}  // namespace

SplitEvaluation evaluate_features(const ClassifierModel& model, const torch::Tensor& features,
                                  const std::vector<Label>& labels) {
    if (labels.empty()) throw Error("cannot evaluate an empty split");
    torch::NoGradGuard no_grad;
    const auto targets = label_tensor(labels);
    const auto logits = model.logits_from_features(features);
    SplitEvaluation out;
    out.loss = torch::nn::functional::cross_entropy(logits, targets).item<double>();
    out.probabilities = softmax_rows(logits);
    out.accuracy = static_cast<double>(count_correct(out.probabilities, targets)) / static_cast<double>(labels.size());

    std::vector<LabeledOutcome> outcomes;
    const auto snow = out.probabilities.select(1, kSnowIndex).contiguous();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        outcomes.push_back({"", labels[i], decide(snow[static_cast<std::int64_t>(i)].item<double>(), 0.5)});
    }
    out.macro_f1 = compute_report(std::span<const LabeledOutcome>(outcomes)).macro_f1;
    return out;
}

TrainResult train(ClassifierModel& model, const std::vector<ImageRecord>& train_split,
                  const std::vector<ImageRecord>& val_split, const TrainConfig& config, const TrainContext& context) {
    config.validate();
    if (train_split.empty()) throw Error("training split is empty");
    if (val_split.empty()) throw Error("validation split is empty");
    if (context.run_id.empty()) throw Error("run_id must be set");

    const auto train_x = extract_features(model, train_split, context.preprocess, context.cache);
    const auto val_x = extract_features(model, val_split, context.preprocess, context.cache);
    const auto train_labels = labels_of(train_split);
    const auto val_labels = labels_of(val_split);
    const auto train_y = label_tensor(train_labels);

    const fs::path out_dir = context.run_root / context.run_id / std::string(to_string(model.spec().arch));
    fs::create_directories(out_dir);

    const std::string config_hash = sha256_hex(
        canonical_json({{"train", config.to_json()},
                        {"backbone", model.spec().to_json()},
                        {"preprocess_hash", context.preprocess.hash()},
                        {"manifest_hash", context.manifest_hash}}));

    torch::optim::Adam optimizer(model.trainable_parameters(), torch::optim::AdamOptions(config.learning_rate));
    auto& head = model.head();
    head->train();

    TrainResult result;
    const auto n = static_cast<std::int64_t>(train_split.size());
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        auto rng = Rng::derive(config.seed, static_cast<std::uint64_t>(epoch));
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::int64_t correct = 0;
        int step = 0;
        for (std::int64_t begin = 0; begin < n; begin += config.batch_size, ++step) {
            const auto end = std::min<std::int64_t>(begin + config.batch_size, n);
            const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + begin, order.begin() + end));
            const auto x = train_x.index_select(0, idx);
            const auto y = train_y.index_select(0, idx);

            optimizer.zero_grad();
            const auto logits = head->forward(x);
            const auto loss = torch::nn::functional::cross_entropy(logits, y);
            const double loss_value = loss.item<double>();
            if (!std::isfinite(loss_value)) {
                std::vector<std::string> ids;
                for (auto i = begin; i < end; ++i) ids.push_back(train_split[static_cast<std::size_t>(order[i])].id);
                json diag = {{"error", "non-finite loss"},
                             {"loss", std::isnan(loss_value) ? "nan" : "inf"},
                             {"epoch", epoch},
                             {"step", step},
                             {"batch_ids", ids}};
                write_json_atomic(out_dir / "FAILED.json", diag);
                std::string joined;
                for (const auto& id : ids) joined += (joined.empty() ? "" : ", ") + id;
                throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                           std::to_string(step) + " (batch: " + joined + ")",
                                       epoch, step, ids);
            }
            loss.backward();
            optimizer.step();

            loss_sum += loss_value * static_cast<double>(end - begin);
            {
                torch::NoGradGuard no_grad;
                correct += count_correct(torch::softmax(logits, 1), y);
            }
        }

        EpochStats stats{epoch, loss_sum / static_cast<double>(n),
                         static_cast<double>(correct) / static_cast<double>(n), step};
        result.history.push_back(stats);
        if (context.on_epoch) context.on_epoch(stats);

        if (epoch % config.checkpoint_interval == 0) {
            const auto val = evaluate_features(model, val_x, val_labels);
            Checkpoint ckpt;
            auto& meta = ckpt.meta;
            meta.run_id = context.run_id;
            meta.arch = model.spec().arch;
            meta.epoch = epoch;
            meta.learning_rate = config.learning_rate;
            meta.train_loss = stats.train_loss;
            meta.train_accuracy = stats.train_accuracy;
            meta.val_loss = val.loss;
            meta.val_accuracy = val.accuracy;
            meta.manifest_hash = context.manifest_hash;
            meta.seed = config.seed;
            meta.backbone = model.spec();
            meta.preprocess = context.preprocess;
            meta.config_hash = config_hash;
            meta.weights_file = "epoch_" + std::to_string(epoch) + ".ckpt";
            ckpt.weights_path = out_dir / meta.weights_file;
            ckpt.meta_path = out_dir / ("epoch_" + std::to_string(epoch) + ".meta");
            save_safetensors(ckpt.weights_path, model.head_state(),
                             {{"arch", std::string(to_string(meta.arch))}, {"epoch", std::to_string(epoch)}});
            write_json_atomic(ckpt.meta_path, meta.to_json());
            result.checkpoints.push_back(std::move(ckpt));
        }
    }
    head->eval();
    return result;
}

CheckpointMeta read_checkpoint_meta(const fs::path& meta_path) {
    if (!fs::exists(meta_path)) throw Error("checkpoint meta not found: " + meta_path.string());
    return CheckpointMeta::from_json(read_json(meta_path));
}

Checkpoint read_checkpoint(const fs::path& meta_path) {
    Checkpoint c;
    c.meta = read_checkpoint_meta(meta_path);
    c.meta_path = meta_path;
    c.weights_path = meta_path.parent_path() / c.meta.weights_file;
    return c;
}

void load_head_from(ClassifierModel& model, const Checkpoint& checkpoint) {
    if (model.spec().arch != checkpoint.meta.arch) throw Error("checkpoint architecture does not match the model");
    model.load_head_state(load_safetensors(checkpoint.weights_path));
}

ClassifierModel load_checkpoint(const Checkpoint& checkpoint) {
    auto model = build_model(checkpoint.meta.backbone);
    load_head_from(model, checkpoint);
    return model;
}

json SweepCell::to_json() const {
    json j = {{"arch", to_string(arch)}, {"learning_rate", learning_rate}, {"status", ok ? "ok" : "failed"}};
    if (ok) {
        j["epoch"] = epoch;
        j["val_macro_f1"] = val_macro_f1;
        j["val_accuracy"] = val_accuracy;
        j["val_loss"] = val_loss;
        j["checkpoint_meta"] = checkpoint_meta.generic_string();
    } else {
        j["error"] = error;
    }
    return j;
}

std::optional<SweepCell> Leaderboard::best(Arch arch) const {
    for (const auto& c : ranked) {
        if (c.arch == arch) return c;
    }
    return std::nullopt;
}

json Leaderboard::to_json() const {
    json j;
    j["ranking_key"] = "val_macro_f1 desc, val_loss asc, learning_rate asc, epoch asc";
    j["ranked"] = json::array();
    for (const auto& c : ranked) j["ranked"].push_back(c.to_json());
    j["failures"] = json::array();
    for (const auto& c : failures) j["failures"].push_back(c.to_json());
    j["best"] = json::object();
    for (Arch a : {Arch::vgg19, Arch::resnet50}) {
        if (auto b = best(a)) j["best"][std::string(to_string(a))] = b->to_json();
    }
    return j;
}

std::vector<TrainConfig> make_grid(const std::vector<double>& learning_rates, const TrainConfig& base) {
    std::vector<TrainConfig> grid;
    for (double lr : learning_rates) {
        TrainConfig c = base;
        c.learning_rate = lr;
        grid.push_back(c);
    }
    return grid;
}

Leaderboard sweep(const DatasetManifest& manifest, const SweepOptions& options) {
    if (options.grid.empty()) throw Error("sweep grid is empty");
    if (options.archs.empty()) throw Error("sweep needs at least one architecture");
    for (const auto& c : options.grid) c.validate();
    const auto train_split = manifest.records_in(Split::train);
    const auto val_split = manifest.records_in(Split::val);
    if (train_split.empty() || val_split.empty()) throw Error("manifest has no train/val split; run split first");
    const auto manifest_hash = manifest_content_hash(manifest);
    const auto val_labels = labels_of(val_split);

    FeatureCache local_cache;
    FeatureCache* cache = options.cache ? options.cache : &local_cache;
    auto log = [&](const std::string& msg) {
        if (options.log) options.log(msg);
    };

    Leaderboard board;
    for (Arch arch : options.archs) {
        std::optional<ClassifierModel> model;
        std::string build_error;
        try {
            BackboneSpec spec = options.backbone;
            spec.arch = arch;
            model.emplace(build_model(spec));
        } catch (const std::exception& e) {
            build_error = e.what();
        }
        for (const auto& config : options.grid) {
            SweepCell failure;
            failure.arch = arch;
            failure.learning_rate = config.learning_rate;
            failure.ok = false;
            if (!model) {
                failure.error = build_error;
                board.failures.push_back(failure);
                log(std::string(to_string(arch)) + " lr=" + std::to_string(config.learning_rate) + " failed: " + build_error);
                continue;
            }
            try {
                model->reset_head(config.seed);
                TrainContext ctx;
                ctx.run_root = options.run_root;
                ctx.run_id = make_run_id(config.learning_rate, config.seed);
                ctx.manifest_hash = manifest_hash;
                ctx.preprocess = options.preprocess;
                ctx.cache = cache;
                log("training " + std::string(to_string(arch)) + " " + ctx.run_id);
                const auto result = train(*model, train_split, val_split, config, ctx);
                const auto val_x = extract_features(*model, val_split, options.preprocess, cache);
                for (const auto& ckpt : result.checkpoints) {
                    if (std::find(config.eval_epochs.begin(), config.eval_epochs.end(), ckpt.meta.epoch) ==
                        config.eval_epochs.end()) {
                        continue;
                    }
                    load_head_from(*model, ckpt);
                    const auto eval = evaluate_features(*model, val_x, val_labels);
                    SweepCell cell;
                    cell.arch = arch;
                    cell.learning_rate = config.learning_rate;
                    cell.epoch = ckpt.meta.epoch;
                    cell.val_macro_f1 = eval.macro_f1;
                    cell.val_accuracy = eval.accuracy;
                    cell.val_loss = eval.loss;
                    cell.checkpoint_meta = ckpt.meta_path;
                    board.ranked.push_back(cell);
                }
            } catch (const std::exception& e) {
                failure.error = e.what();
                board.failures.push_back(failure);
                log(std::string(to_string(arch)) + " lr=" + std::to_string(config.learning_rate) + " failed: " + e.what());
            }
        }
    }
    std::stable_sort(board.ranked.begin(), board.ranked.end(), [](const SweepCell& a, const SweepCell& b) {
        if (a.val_macro_f1 != b.val_macro_f1) return a.val_macro_f1 > b.val_macro_f1;
        if (a.val_loss != b.val_loss) return a.val_loss < b.val_loss;
        if (a.learning_rate != b.learning_rate) return a.learning_rate < b.learning_rate;
        return a.epoch < b.epoch;
    });
    auto summary = board.to_json();
    summary["provenance"] = options.provenance;
    write_json_atomic(options.run_root / "sweep_summary.json", summary);
    return board;
}

}  // namespace snowdet
