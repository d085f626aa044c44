"""Reference penultimate features from torchvision's own VGG-19 / ResNet-50.

Writes <out>/<arch>_imagenet1k.safetensors (random weights, randomised batch
norm statistics) and <out>/oracle.safetensors holding the input batch and the
features torchvision computes for it. The C++ models suite loads the same
weights as "pre-trained" and must reproduce the features.
"""
import argparse
import pathlib

import torch
import torchvision
from safetensors.torch import save_file


def randomise_norms(model, gen):
    for m in model.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            n = m.num_features
            m.running_mean.copy_(torch.randn(n, generator=gen) * 0.1)
            m.running_var.copy_(torch.rand(n, generator=gen) * 0.5 + 0.75)
            m.weight.data.copy_(torch.rand(n, generator=gen) * 0.5 + 0.75)
            m.bias.data.copy_(torch.randn(n, generator=gen) * 0.1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=pathlib.Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(1234)
    gen = torch.Generator().manual_seed(99)
    x = torch.randn(2, 3, 128, 128, generator=gen)
    tensors = {"input": x}

    vgg = torchvision.models.vgg19().eval()
    resnet = torchvision.models.resnet50().eval()
    randomise_norms(resnet, gen)
    for arch, model in (("vgg19", vgg), ("resnet50", resnet)):
        save_file({k: v.contiguous() for k, v in model.state_dict().items()},
                  str(args.out / f"{arch}_imagenet1k.safetensors"))

    with torch.no_grad():
        v = torch.flatten(vgg.avgpool(vgg.features(x)), 1)
        tensors["vgg19.features"] = vgg.classifier[:6](v)
        resnet.fc = torch.nn.Identity()
        tensors["resnet50.features"] = resnet(x)
    save_file(tensors, str(args.out / "oracle.safetensors"))


if __name__ == "__main__":
    main()
