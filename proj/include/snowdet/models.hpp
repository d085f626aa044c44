#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "snowdet/safetensors.hpp"
#include "snowdet/types.hpp"

namespace snowdet {

namespace detail {
class BackboneImpl;
}

/// Where the frozen feature-extractor weights come from.
enum class BackboneInit {
    /// ImageNet-1K weights loaded from `<weights_dir>/<arch>_imagenet1k.safetensors`.
    pretrained,
    /// Random weights drawn from `backbone_seed` (see detail::seeded_init).
    /// Used for offline demos and tests where the ImageNet weights are unavailable.
    seeded,
};

struct BackboneSpec {
    Arch arch = Arch::resnet50;
    std::string pretrained_on = "imagenet_1k";
    int num_classes = kNumClasses;
    bool freeze_features = true;

    BackboneInit init = BackboneInit::pretrained;
    std::filesystem::path weights_dir = "weights";
    std::uint64_t backbone_seed = 0;
    /// Seed for the fresh classification head.
    std::uint64_t head_seed = 0;
    /// Expected spatial input size (square).
    int input_size = 128;

    void validate() const;
    std::filesystem::path weights_path() const;
    nlohmann::json to_json() const;
    static BackboneSpec from_json(const nlohmann::json& j);
};

/// Frozen pre-trained backbone plus a trainable single affine 2-way head.
/// Probability columns follow kClassOrder: [snow_free, snow].
///
/// After construction the backbone is in inference mode and never receives
/// gradients; only head() parameters are trainable. Prediction is const and
/// may run concurrently from several threads.
class ClassifierModel {
public:
    ClassifierModel(BackboneSpec spec, std::shared_ptr<detail::BackboneImpl> backbone,
                    torch::nn::Linear head, std::string backbone_id);
    ClassifierModel(ClassifierModel&&) noexcept = default;
    ClassifierModel& operator=(ClassifierModel&&) noexcept = default;
    ClassifierModel(const ClassifierModel&) = delete;
    ClassifierModel& operator=(const ClassifierModel&) = delete;
    ~ClassifierModel();

    const BackboneSpec& spec() const { return spec_; }
    std::int64_t feature_width() const;
    /// Identifies the frozen weights: digest of the weights file, or of the
    /// seeded-init recipe.
    const std::string& backbone_id() const { return backbone_id_; }

    /// [B, 3, S, S] -> [B, feature_width()]. Each sample runs through the
    /// backbone on its own, so results do not depend on batch composition.
    torch::Tensor features(const torch::Tensor& batch) const;
    /// Head scores (no softmax) for a feature batch.
    torch::Tensor logits_from_features(const torch::Tensor& features) const;
    torch::Tensor proba_from_features(const torch::Tensor& features) const;

    torch::nn::Linear& head() { return head_; }
    /// Re-draws the head from PyTorch's default uniform fan-in scheme
    /// (bound 1/sqrt(fan_in)) with the given seed.
    void reset_head(std::uint64_t seed);
    std::vector<torch::Tensor> trainable_parameters() const;

    /// SHA-256 over every backbone parameter and buffer.
    std::string frozen_checksum() const;
    std::string head_checksum() const;

    TensorMap head_state() const;
    void load_head_state(const TensorMap& state);
    /// Full state dict in torchvision naming with the new head in place of the
    /// original classification layer.
    TensorMap full_state() const;
    std::string head_prefix() const;

private:
    BackboneSpec spec_;
    std::shared_ptr<detail::BackboneImpl> backbone_;
    torch::nn::Linear head_{nullptr};
    std::string backbone_id_;
};

/// Builds the backbone with frozen weights and a freshly initialised head
/// (PyTorch's default uniform fan-in scheme drawn from spec.head_seed).
/// Throws when the pre-trained weights are missing, naming the arch.
ClassifierModel build_model(const BackboneSpec& spec);

/// Row-wise normalised exponential of [B, 2] scores.
torch::Tensor softmax_rows(const torch::Tensor& logits);

/// [B, 3, S, S] preprocessed batch -> [B, 2] class probabilities.
torch::Tensor predict_proba(const ClassifierModel& model, const torch::Tensor& batch);

/// Hash over tensor names and contents, in name order.
std::string tensor_map_checksum(const TensorMap& tensors);

}  // namespace snowdet
