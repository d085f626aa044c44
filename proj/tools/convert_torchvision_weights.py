"""Converts torchvision's ImageNet-1K checkpoints into the files `snowdet`
loads for `backbone.init = "pretrained"`.

    python tools/convert_torchvision_weights.py weights/
    python tools/convert_torchvision_weights.py weights/ --from-pth vgg19=vgg19-dcbb9e9d.pth

Writes <out>/vgg19_imagenet1k.safetensors and <out>/resnet50_imagenet1k.safetensors.
Without --from-pth the weights come from torchvision's download cache.
"""
import argparse
import pathlib

import torch
import torchvision
from safetensors.torch import save_file

WEIGHTS = {
    "vgg19": torchvision.models.VGG19_Weights.IMAGENET1K_V1,
    "resnet50": torchvision.models.ResNet50_Weights.IMAGENET1K_V1,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--arch", choices=sorted(WEIGHTS), action="append")
    ap.add_argument("--from-pth", action="append", default=[], metavar="ARCH=FILE",
                    help="use a local state_dict file instead of downloading")
    args = ap.parse_args()
    local = dict(item.split("=", 1) for item in args.from_pth)
    args.out.mkdir(parents=True, exist_ok=True)

    for arch in args.arch or sorted(WEIGHTS):
        if arch in local:
            state = torch.load(local[arch], map_location="cpu", weights_only=True)
        else:
            state = WEIGHTS[arch].get_state_dict(progress=True)
        # Round-trip through the model so missing or renamed keys fail here.
        model = getattr(torchvision.models, arch)()
        model.load_state_dict(state, strict=True)
        tensors = {k: v.detach().contiguous() for k, v in model.state_dict().items()}
        path = args.out / f"{arch}_imagenet1k.safetensors"
        save_file(tensors, str(path), metadata={"format": "pt", "source": str(WEIGHTS[arch])})
        print(f"{arch}: {len(tensors)} tensors -> {path}")


if __name__ == "__main__":
    main()
