#include "snowdet/bundle.hpp"

#include "snowdet/digest.hpp"
#include "snowdet/io.hpp"

namespace snowdet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void copy_member(const Checkpoint& src, const fs::path& dir, const std::string& name) {
    CheckpointMeta meta = src.meta;
    meta.weights_file = name + ".ckpt";
    write_file_atomic(dir / meta.weights_file, read_file(src.weights_path));
    write_json_atomic(dir / (name + ".meta"), meta.to_json());
}

}  // namespace

void EnsembleBundle::write(const fs::path& dir, const Checkpoint& model_a, const Checkpoint& model_b,
                           EnsembleConfig config, const json& provenance) {
    if (model_a.meta.preprocess.hash() != model_b.meta.preprocess.hash()) {
        throw Error("ensemble members were trained with different preprocessing constants");
    }
    config.model_a_ref = "model_a.meta";
    config.model_b_ref = "model_b.meta";
    config.validate();
    fs::create_directories(dir);
    copy_member(model_a, dir, "model_a");
    copy_member(model_b, dir, "model_b");

    json doc = config.to_json();
    doc["archs"] = {{"model_a", to_string(model_a.meta.arch)}, {"model_b", to_string(model_b.meta.arch)}};
    doc["class_order"] = class_order_names();
    doc["preprocess"] = model_a.meta.preprocess.to_json();
    doc["preprocess_hash"] = model_a.meta.preprocess.hash();
    doc["training_manifest_hash"] = model_a.meta.manifest_hash;
    doc["members"] = {{"model_a", {{"run_id", model_a.meta.run_id}, {"epoch", model_a.meta.epoch},
                                   {"learning_rate", model_a.meta.learning_rate}}},
                      {"model_b", {{"run_id", model_b.meta.run_id}, {"epoch", model_b.meta.epoch},
                                   {"learning_rate", model_b.meta.learning_rate}}}};
    doc["provenance"] = provenance;
    doc["code_version"] = code_version();
    write_json_atomic(dir / "ensemble.json", doc);
}

EnsembleBundle EnsembleBundle::load(const fs::path& dir) {
    if (!fs::exists(dir / "ensemble.json")) throw Error("not an ensemble bundle (missing ensemble.json): " + dir.string());
    EnsembleBundle b;
    b.sidecar_ = read_json(dir / "ensemble.json");
    b.config_ = EnsembleConfig::from_json(b.sidecar_);

    const auto ckpt_a = read_checkpoint(dir / b.config_.model_a_ref);
    const auto ckpt_b = read_checkpoint(dir / b.config_.model_b_ref);
    b.meta_a_ = ckpt_a.meta;
    b.meta_b_ = ckpt_b.meta;
    if (b.meta_a_.preprocess.hash() != b.meta_b_.preprocess.hash()) {
        throw Error("bundle members disagree on preprocessing constants");
    }
    if (b.sidecar_.contains("class_order") &&
        b.sidecar_["class_order"].get<std::array<std::string, 2>>() != class_order_names()) {
        throw Error("bundle class order must be [snow_free, snow]");
    }
    b.preprocess_ = b.meta_a_.preprocess;
    b.model_a_ = std::make_shared<ClassifierModel>(load_checkpoint(ckpt_a));
    b.model_b_ = std::make_shared<ClassifierModel>(load_checkpoint(ckpt_b));

    Sha256 h;
    for (const auto* name : {"ensemble.json", "model_a.meta", "model_a.ckpt", "model_b.meta", "model_b.ckpt"}) {
        const auto path = dir / name;
        if (!fs::exists(path)) continue;
        h.update(std::string(name) + "\n");
        h.update(read_file(path));
    }
    b.digest_ = h.hex_digest();
    return b;
}

json EnsembleBundle::info() const {
    json j;
    j["archs"] = {to_string(meta_a_.arch), to_string(meta_b_.arch)};
    j["weight_a"] = config_.weight_a;
    j["decision_threshold"] = config_.decision_threshold;
    j["class_order"] = class_order_names();
    j["preprocess"] = preprocess_.to_json();
    j["training_manifest_hash"] = meta_a_.manifest_hash;
    j["model_version"] = digest_;
    j["bundle"] = sidecar_;
    return j;
}

PredictionResult EnsembleBundle::predict_image(const cv::Mat& image) const {
    const auto x = preprocess_image(image, preprocess_).unsqueeze(0);
    auto pa = ProbabilityBatch::from_tensor(predict_proba(*model_a_, x));
    auto pb = ProbabilityBatch::from_tensor(predict_proba(*model_b_, x));
    return ensemble_predict(pa, pb, config_).front();
}

std::pair<ProbabilityBatch, ProbabilityBatch> member_probabilities(const ClassifierModel& model_a,
                                                                   const ClassifierModel& model_b,
                                                                   std::span<const ImageRecord> records,
                                                                   const PreprocessConfig& preprocess,
                                                                   FeatureCache* cache) {
    auto pa = ProbabilityBatch::from_tensor(
        model_a.proba_from_features(extract_features(model_a, records, preprocess, cache)));
    auto pb = ProbabilityBatch::from_tensor(
        model_b.proba_from_features(extract_features(model_b, records, preprocess, cache)));
    for (const auto& r : records) pa.record_ids.push_back(r.id);
    pb.record_ids = pa.record_ids;
    return {std::move(pa), std::move(pb)};
}

std::vector<PredictionResult> EnsembleBundle::predict_records(std::span<const ImageRecord> records,
                                                              FeatureCache* cache) const {
    if (records.empty()) return {};
    const auto [pa, pb] = member_probabilities(*model_a_, *model_b_, records, preprocess_, cache);
    auto out = ensemble_predict(pa, pb, config_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].truth = records[i].label;
    return out;
}

}  // namespace snowdet
