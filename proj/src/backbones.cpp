#include "backbones.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace snowdet::detail {

namespace nn = torch::nn;

Vgg19Impl::Vgg19Impl() {
    // 'M' marks a 2x2 max-pool.
    constexpr int kPool = -1;
    const int cfg[] = {64, 64, kPool, 128, 128, kPool, 256, 256, 256, 256, kPool,
                       512, 512, 512, 512, kPool, 512, 512, 512, 512, kPool};
    nn::Sequential features;
    std::int64_t in = 3;
    for (int v : cfg) {
        if (v == kPool) {
            features->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
        } else {
            features->push_back(nn::Conv2d(nn::Conv2dOptions(in, v, 3).padding(1)));
            features->push_back(nn::ReLU());
            in = v;
        }
    }
    features_ = register_module("features", features);
    avgpool_ = register_module("avgpool", nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({7, 7})));
    classifier_ = register_module("classifier",
                                  nn::Sequential(nn::Linear(512 * 7 * 7, 4096), nn::ReLU(), nn::Dropout(0.5),
                                                 nn::Linear(4096, 4096), nn::ReLU(), nn::Dropout(0.5)));
}

torch::Tensor Vgg19Impl::forward(torch::Tensor x) {
    x = features_->forward(x);
    x = avgpool_->forward(x);
    return classifier_->forward(torch::flatten(x, 1));
}

BottleneckImpl::BottleneckImpl(std::int64_t in_planes, std::int64_t planes, std::int64_t stride,
                               bool with_downsample) {
    const auto out = planes * kExpansion;
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_planes, planes, 1).bias(false)));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module(
        "conv2", nn::Conv2d(nn::Conv2dOptions(planes, planes, 3).stride(stride).padding(1).bias(false)));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(planes, out, 1).bias(false)));
    bn3 = register_module("bn3", nn::BatchNorm2d(out));
    if (with_downsample) {
        downsample = register_module(
            "downsample", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_planes, out, 1).stride(stride).bias(false)),
                                         nn::BatchNorm2d(out)));
    }
}

torch::Tensor BottleneckImpl::forward(torch::Tensor x) {
    auto identity = downsample ? downsample->forward(x) : x;
    auto y = torch::relu(bn1->forward(conv1->forward(x)));
    y = torch::relu(bn2->forward(conv2->forward(y)));
    y = bn3->forward(conv3->forward(y));
    return torch::relu(y + identity);
}

ResNet50Impl::ResNet50Impl() {
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
    bn1_ = register_module("bn1", nn::BatchNorm2d(64));
    maxpool_ = register_module("maxpool", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    layer1_ = register_module("layer1", make_layer(64, 3, 1));
    layer2_ = register_module("layer2", make_layer(128, 4, 2));
    layer3_ = register_module("layer3", make_layer(256, 6, 2));
    layer4_ = register_module("layer4", make_layer(512, 3, 2));
}

nn::Sequential ResNet50Impl::make_layer(std::int64_t planes, int blocks, std::int64_t stride) {
    nn::Sequential layer;
    const bool downsample = stride != 1 || in_planes_ != planes * BottleneckImpl::kExpansion;
    for (int i = 0; i < blocks; ++i) {
        Bottleneck block(in_planes_, planes, i == 0 ? stride : 1, i == 0 && downsample);
        in_planes_ = planes * BottleneckImpl::kExpansion;
        blocks_.push_back(block);
        layer->push_back(block);
    }
    return layer;
}

torch::Tensor ResNet50Impl::forward(torch::Tensor x) {
    x = maxpool_->forward(torch::relu(bn1_->forward(conv1_->forward(x))));
    x = layer4_->forward(layer3_->forward(layer2_->forward(layer1_->forward(x))));
    return torch::flatten(torch::adaptive_avg_pool2d(x, {1, 1}), 1);
}

std::vector<nn::BatchNorm2d> ResNet50Impl::residual_norms() const {
    std::vector<nn::BatchNorm2d> out;
    for (const auto& b : blocks_) out.push_back(b->bn3);
    return out;
}

std::shared_ptr<BackboneImpl> make_backbone(Arch arch) {
    if (arch == Arch::vgg19) return std::make_shared<Vgg19Impl>();
    return std::make_shared<ResNet50Impl>();
}

void seeded_init(BackboneImpl& backbone, Arch arch, std::uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const bool fan_in = arch == Arch::vgg19;
    for (auto& module : backbone.modules(/*include_self=*/false)) {
        if (auto* conv = module->as<nn::Conv2d>()) {
            const auto& w = conv->weight;
            const double fan = static_cast<double>((fan_in ? w.size(1) : w.size(0)) * w.size(2) * w.size(3));
            w.normal_(0.0, std::sqrt(2.0 / fan), gen);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* linear = module->as<nn::Linear>()) {
            if (fan_in) linear->weight.normal_(0.0, std::sqrt(2.0 / static_cast<double>(linear->weight.size(1))), gen);
            else linear->weight.normal_(0.0, 0.01, gen);
            linear->bias.zero_();
        } else if (auto* bn = module->as<nn::BatchNorm2d>()) {
            bn->weight.fill_(1.0);
            bn->bias.zero_();
        }
    }
    if (arch == Arch::resnet50) {
        for (auto& bn : static_cast<ResNet50Impl&>(backbone).residual_norms()) bn->weight.zero_();
    }
}

}  // namespace snowdet::detail
