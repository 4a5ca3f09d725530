"""Converter from publicly distributed VGG-16 checkpoints to EASTNET/1.

Reads a torchvision-style state dict (``features.N.weight`` keys, .pth via
torch, or an .npz with the same keys) and writes the container covering
conv1_1 through relu4_1. torch is only imported when a .pth file is given.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import WeightsFormatError
from .container import save_weights
from .network import (DEFAULT_TAPS, ConvLayer, NetworkSpec, PoolLayer,
                      ReluLayer)

# torchvision vgg16 "features" indices through relu4_1
VGG16_STRUCTURE = [
    ("conv", "conv1_1", 0), ("relu", "relu1_1", None),
    ("conv", "conv1_2", 2), ("relu", "relu1_2", None),
    ("pool", "pool1", None),
    ("conv", "conv2_1", 5), ("relu", "relu2_1", None),
    ("conv", "conv2_2", 7), ("relu", "relu2_2", None),
    ("pool", "pool2", None),
    ("conv", "conv3_1", 10), ("relu", "relu3_1", None),
    ("conv", "conv3_2", 12), ("relu", "relu3_2", None),
    ("conv", "conv3_3", 14), ("relu", "relu3_3", None),
    ("pool", "pool3", None),
    ("conv", "conv4_1", 17), ("relu", "relu4_1", None),
]

VGG16_CHANNELS = {
    "conv1_1": (64, 3), "conv1_2": (64, 64),
    "conv2_1": (128, 64), "conv2_2": (128, 128),
    "conv3_1": (256, 128), "conv3_2": (256, 256), "conv3_3": (256, 256),
    "conv4_1": (512, 256),
}


def _load_state_dict(path: Path) -> dict:
    if path.suffix == ".npz":
        with np.load(path) as data:
            return {k: np.asarray(data[k]) for k in data.files}
    try:
        import torch
    except ImportError as exc:  # pragma: no cover - torch present in dev envs
        raise WeightsFormatError(
            "reading .pth checkpoints requires torch; install it or convert "
            "the checkpoint to .npz first") from exc
    state = torch.load(path, map_location="cpu", weights_only=True)
    if hasattr(state, "state_dict"):
        state = state.state_dict()
    return {k: v.numpy() for k, v in state.items()}


def network_from_state_dict(state: dict) -> NetworkSpec:
    layers = []
    for kind, name, idx in VGG16_STRUCTURE:
        if kind == "conv":
            wkey, bkey = f"features.{idx}.weight", f"features.{idx}.bias"
            if wkey not in state or bkey not in state:
                raise WeightsFormatError(f"checkpoint is missing {wkey} / {bkey}")
            weight = np.asarray(state[wkey], dtype=np.float32)
            bias = np.asarray(state[bkey], dtype=np.float32)
            expect = VGG16_CHANNELS[name]
            if weight.shape != (expect[0], expect[1], 3, 3):
                raise WeightsFormatError(
                    f"{name}: expected weight shape {(expect[0], expect[1], 3, 3)}, "
                    f"checkpoint has {weight.shape}")
            layers.append(ConvLayer(name, weight, bias))
        elif kind == "relu":
            layers.append(ReluLayer(name))
        else:
            layers.append(PoolLayer(name))
    net = NetworkSpec(layers=layers, tap_points=DEFAULT_TAPS)
    net.validate()
    return net


def build_vgg16_shaped(seed: int = 0) -> NetworkSpec:
    """VGG-16-shaped network with seeded He-initialized filters.

    Stand-in when the published checkpoint is not available; same layer
    names, shapes, and taps as the converted original.
    """
    rng = np.random.default_rng(seed)
    state = {}
    for kind, name, idx in VGG16_STRUCTURE:
        if kind != "conv":
            continue
        out_ch, in_ch = VGG16_CHANNELS[name]
        fan_in = in_ch * 9
        state[f"features.{idx}.weight"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), (out_ch, in_ch, 3, 3)).astype(np.float32)
        state[f"features.{idx}.bias"] = np.zeros(out_ch, dtype=np.float32)
    return network_from_state_dict(state)


def convert_checkpoint(checkpoint_path, out_path) -> NetworkSpec:
    state = _load_state_dict(Path(checkpoint_path))
    net = network_from_state_dict(state)
    save_weights(net, out_path)
    return net
