#pragma once

// Frozen feature extractors. Module and parameter names follow torchvision's
// state-dict layout so converted ImageNet weights load without renaming.

#include <cstdint>
#include <memory>
#include <string>

#include <torch/torch.h>

#include "snowdet/types.hpp"

namespace snowdet::detail {

class BackboneImpl : public torch::nn::Module {
public:
    /// [B, 3, H, W] -> [B, feature_width()] penultimate features.
    virtual torch::Tensor forward(torch::Tensor x) = 0;
    virtual std::int64_t feature_width() const = 0;
    /// State-dict prefix of the classification layer the head replaces.
    virtual std::string head_prefix() const = 0;
};

/// VGG-19: 16 conv layers, adaptive 7x7 pooling and the first two fully
/// connected layers (with their dropout slots) of the classifier stack.
class Vgg19Impl : public BackboneImpl {
public:
    Vgg19Impl();
    torch::Tensor forward(torch::Tensor x) override;
    std::int64_t feature_width() const override { return 4096; }
    std::string head_prefix() const override { return "classifier.6"; }

private:
    torch::nn::Sequential features_{nullptr};
    torch::nn::AdaptiveAvgPool2d avgpool_{nullptr};
    torch::nn::Sequential classifier_{nullptr};
};

class BottleneckImpl : public torch::nn::Module {
public:
    BottleneckImpl(std::int64_t in_planes, std::int64_t planes, std::int64_t stride, bool downsample);
    torch::Tensor forward(torch::Tensor x);

    static constexpr std::int64_t kExpansion = 4;
    torch::nn::BatchNorm2d bn3{nullptr};

private:
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet-50 (v1.5, stride on the 3x3 convolution) up to global average pooling.
class ResNet50Impl : public BackboneImpl {
public:
    ResNet50Impl();
    torch::Tensor forward(torch::Tensor x) override;
    std::int64_t feature_width() const override { return 2048; }
    std::string head_prefix() const override { return "fc"; }

    /// Residual-branch output norms, used by seeded initialisation.
    std::vector<torch::nn::BatchNorm2d> residual_norms() const;

private:
    torch::nn::Sequential make_layer(std::int64_t planes, int blocks, std::int64_t stride);

    std::int64_t in_planes_ = 64;
    torch::nn::Conv2d conv1_{nullptr};
    torch::nn::BatchNorm2d bn1_{nullptr};
    torch::nn::MaxPool2d maxpool_{nullptr};
    torch::nn::Sequential layer1_{nullptr}, layer2_{nullptr}, layer3_{nullptr}, layer4_{nullptr};
    std::vector<Bottleneck> blocks_;
};

std::shared_ptr<BackboneImpl> make_backbone(Arch arch);

/// Random weights drawn from a seeded generator, standing in for ImageNet
/// weights when those are unavailable.
///
/// ResNet-50 follows torchvision's scheme: Kaiming-normal (fan-out)
/// convolutions, unit batch-norm scales, zero-init residual branches.
/// VGG-19 has no normalisation layers, and under the fan-out scheme its
/// activations shrink about 30x across the stack, far below the O(1) scale of
/// trained features. It uses He fan-in init for every conv and linear layer
/// instead, which preserves the forward variance.
void seeded_init(BackboneImpl& backbone, Arch arch, std::uint64_t seed);

}  // namespace snowdet::detail
