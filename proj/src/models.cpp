#include "snowdet/models.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "backbones.hpp"
#include "snowdet/digest.hpp"

namespace snowdet {

namespace fs = std::filesystem;

void BackboneSpec::validate() const {
    if (num_classes != kNumClasses) throw Error("num_classes must be 2");
    if (pretrained_on != "imagenet_1k") throw Error("backbones must be pre-trained on imagenet_1k");
    if (!freeze_features) throw Error("unfrozen backbones are not supported; only the head is trained");
    if (input_size < 32) throw Error("input_size must be at least 32");
}

fs::path BackboneSpec::weights_path() const {
    return weights_dir / (std::string(to_string(arch)) + "_imagenet1k.safetensors");
}

nlohmann::json BackboneSpec::to_json() const {
    nlohmann::json j = {{"arch", to_string(arch)},
                        {"pretrained_on", pretrained_on},
                        {"num_classes", num_classes},
                        {"freeze_features", freeze_features},
                        {"init", init == BackboneInit::pretrained ? "pretrained" : "seeded"},
                        {"head_seed", head_seed},
                        {"input_size", input_size}};
    if (init == BackboneInit::pretrained) {
        j["weights_path"] = fs::absolute(weights_path()).lexically_normal().string();
    } else {
        j["backbone_seed"] = backbone_seed;
    }
    return j;
}

BackboneSpec BackboneSpec::from_json(const nlohmann::json& j) {
    BackboneSpec s;
    s.arch = parse_arch(j.at("arch").get<std::string>());
    s.pretrained_on = j.value("pretrained_on", "imagenet_1k");
    s.num_classes = j.value("num_classes", kNumClasses);
    s.freeze_features = j.value("freeze_features", true);
    const auto init = j.value("init", "pretrained");
    if (init == "pretrained") {
        s.init = BackboneInit::pretrained;
        if (j.contains("weights_path")) s.weights_dir = fs::path(j["weights_path"].get<std::string>()).parent_path();
    } else if (init == "seeded") {
        s.init = BackboneInit::seeded;
        s.backbone_seed = j.value("backbone_seed", std::uint64_t{0});
    } else {
        throw Error("unknown backbone init '" + init + "'");
    }
    s.head_seed = j.value("head_seed", std::uint64_t{0});
    s.input_size = j.value("input_size", 128);
    return s;
}

ClassifierModel::ClassifierModel(BackboneSpec spec, std::shared_ptr<detail::BackboneImpl> backbone,
                                 torch::nn::Linear head, std::string backbone_id)
    : spec_(std::move(spec)),
      backbone_(std::move(backbone)),
      head_(std::move(head)),
      backbone_id_(std::move(backbone_id)) {}

ClassifierModel::~ClassifierModel() = default;

std::int64_t ClassifierModel::feature_width() const { return backbone_->feature_width(); }

std::string ClassifierModel::head_prefix() const { return backbone_->head_prefix(); }

torch::Tensor ClassifierModel::features(const torch::Tensor& batch) const {
    if (batch.dim() != 4 || batch.size(0) < 1 || batch.size(1) != 3 || batch.size(2) != spec_.input_size ||
        batch.size(3) != spec_.input_size) {
        std::ostringstream msg;
        msg << "expected input of shape [B, 3, " << spec_.input_size << ", " << spec_.input_size << "], got "
            << batch.sizes();
        throw Error(msg.str());
    }
    torch::NoGradGuard no_grad;
    const auto x = batch.to(torch::kFloat32);
    std::vector<torch::Tensor> rows;
    rows.reserve(static_cast<std::size_t>(x.size(0)));
    for (std::int64_t b = 0; b < x.size(0); ++b) {
        rows.push_back(backbone_->forward(x.slice(0, b, b + 1)));
    }
    return torch::cat(rows, 0);
}

torch::Tensor ClassifierModel::logits_from_features(const torch::Tensor& features) const {
    if (features.dim() != 2 || features.size(1) != feature_width()) {
        throw Error("feature batch must be [B, " + std::to_string(feature_width()) + "]");
    }
    return torch::linear(features, head_->weight, head_->bias);
}

torch::Tensor ClassifierModel::proba_from_features(const torch::Tensor& features) const {
    torch::NoGradGuard no_grad;
    return softmax_rows(logits_from_features(features));
}

void ClassifierModel::reset_head(std::uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(feature_width()));
    head_->weight.uniform_(-bound, bound, gen);
    head_->bias.uniform_(-bound, bound, gen);
    spec_.head_seed = seed;
}

std::vector<torch::Tensor> ClassifierModel::trainable_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : backbone_->parameters()) {
        if (p.requires_grad()) out.push_back(p);
    }
    for (const auto& p : head_->parameters()) {
        if (p.requires_grad()) out.push_back(p);
    }
    return out;
}

std::string tensor_map_checksum(const TensorMap& tensors) {
    Sha256 h;
    for (const auto& [name, t] : tensors) {
        const auto c = t.detach().contiguous();
        h.update(name);
        h.update(c.data_ptr(), c.nbytes());
    }
    return h.hex_digest();
}

namespace {

TensorMap backbone_state(const detail::BackboneImpl& backbone) {
    TensorMap out;
    for (const auto& item : backbone.named_parameters()) out.emplace(item.key(), item.value());
    for (const auto& item : backbone.named_buffers()) out.emplace(item.key(), item.value());
    return out;
}

}  // namespace

std::string ClassifierModel::frozen_checksum() const { return tensor_map_checksum(backbone_state(*backbone_)); }

std::string ClassifierModel::head_checksum() const { return tensor_map_checksum(head_state()); }

TensorMap ClassifierModel::head_state() const {
    const auto prefix = head_prefix();
    return {{prefix + ".weight", head_->weight.detach().clone()}, {prefix + ".bias", head_->bias.detach().clone()}};
}

void ClassifierModel::load_head_state(const TensorMap& state) {
    const auto prefix = head_prefix();
    torch::NoGradGuard no_grad;
    for (auto [suffix, target] : {std::pair{".weight", head_->weight}, std::pair{".bias", head_->bias}}) {
        auto it = state.find(prefix + suffix);
        if (it == state.end()) throw Error("checkpoint lacks " + prefix + suffix);
        if (it->second.sizes() != target.sizes()) throw Error("checkpoint shape mismatch for " + prefix + suffix);
        target.copy_(it->second);
    }
}

TensorMap ClassifierModel::full_state() const {
    TensorMap out = backbone_state(*backbone_);
    for (auto& [k, v] : head_state()) out.emplace(k, v);
    return out;
}

namespace {

void load_pretrained(detail::BackboneImpl& backbone, const BackboneSpec& spec) {
    const auto path = spec.weights_path();
    if (!fs::exists(path)) {
        throw Error("pre-trained ImageNet-1K weights for " + std::string(to_string(spec.arch)) +
                    " not found at " + path.string() +
                    " (convert them with tools/convert_torchvision_weights.py)");
    }
    const TensorMap weights = load_safetensors(path);
    torch::NoGradGuard no_grad;
    auto copy_into = [&](const std::string& name, torch::Tensor& target) {
        auto it = weights.find(name);
        if (it == weights.end()) {
            throw Error(std::string(to_string(spec.arch)) + " weights file lacks tensor " + name);
        }
        if (it->second.sizes() != target.sizes()) {
            throw Error(std::string(to_string(spec.arch)) + " weights: shape mismatch for " + name);
        }
        target.copy_(it->second.to(target.scalar_type()));
    };
    for (auto& item : backbone.named_parameters()) copy_into(item.key(), item.value());
    for (auto& item : backbone.named_buffers()) copy_into(item.key(), item.value());
}

}  // namespace

ClassifierModel build_model(const BackboneSpec& spec) {
    spec.validate();
    auto backbone = detail::make_backbone(spec.arch);
    std::string backbone_id;
    if (spec.init == BackboneInit::pretrained) {
        load_pretrained(*backbone, spec);
        backbone_id = sha256_file(spec.weights_path());
    } else {
        detail::seeded_init(*backbone, spec.arch, spec.backbone_seed);
        backbone_id = sha256_hex("seeded-v2:" + std::string(to_string(spec.arch)) + ":" +
                                 std::to_string(spec.backbone_seed));
    }
    backbone->eval();
    for (auto& p : backbone->parameters()) p.set_requires_grad(false);

    torch::nn::Linear head(backbone->feature_width(), kNumClasses);
    ClassifierModel model(spec, std::move(backbone), std::move(head), std::move(backbone_id));
    model.reset_head(spec.head_seed);
    return model;
}

torch::Tensor softmax_rows(const torch::Tensor& logits) {
    if (logits.dim() != 2 || logits.size(1) != kNumClasses) throw Error("scores must be [B, 2]");
    return torch::softmax(logits, 1);
}

torch::Tensor predict_proba(const ClassifierModel& model, const torch::Tensor& batch) {
    torch::NoGradGuard no_grad;
    return model.proba_from_features(model.features(batch));
}

}  // namespace snowdet
