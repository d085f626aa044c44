"""Loads an exported bundle into stock torchvision models and compares the
probabilities with the ones the C++ library produced for the same input.

usage: check_export.py <export_dir> <probe.safetensors>
"""
import json
import pathlib
import sys

import torch
import torchvision
from safetensors.torch import load_file

TOL = 1e-5


def build(member):
    arch = member["architecture"].rsplit(".", 1)[-1]
    model = getattr(torchvision.models, arch)()
    out_features, in_features = member["replaced_layer_shape"]
    head = torch.nn.Linear(in_features, out_features)
    if member["replaced_layer"] == "fc":
        model.fc = head
    elif member["replaced_layer"] == "classifier.6":
        model.classifier[6] = head
    else:
        raise SystemExit(f"unknown replaced layer {member['replaced_layer']}")
    return model


def main():
    export_dir = pathlib.Path(sys.argv[1])
    probe = load_file(sys.argv[2])
    desc = json.loads((export_dir / "export.json").read_text())
    assert desc["class_order"] == ["snow_free", "snow"], desc["class_order"]
    x = probe["input"].float()
    assert list(x.shape[1:]) == desc["input"]["shape"][1:], x.shape

    probs = {}
    for name, member in desc["members"].items():
        model = build(member)
        state = load_file(str(export_dir / member["file"]))
        model.load_state_dict(state, strict=True)
        model.eval()
        with torch.no_grad():
            probs[name] = torch.softmax(model(x), dim=1).double()
        err = (probs[name] - probe[f"{name}.probs"].double()).abs().max().item()
        print(f"{name} ({member['architecture']}): max |dp| = {err:.2e}")
        if err > TOL:
            raise SystemExit(f"{name}: export disagrees with the library ({err:.2e} > {TOL})")

    w = desc["ensemble"]["weight_a"]
    ens = w * probs["model_a"] + (1 - w) * probs["model_b"]
    err = (ens - probe["ensemble.probs"].double()).abs().max().item()
    print(f"ensemble: max |dp| = {err:.2e}")
    if err > TOL:
        raise SystemExit(f"ensemble disagrees ({err:.2e} > {TOL})")
    print("export parity OK")


if __name__ == "__main__":
    main()
