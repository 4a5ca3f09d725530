#!/usr/bin/env python3
"""Generate the feature-extractor test fixtures.

Writes tests/fixtures/smallnet.eastnet (the small seeded network in
container form) and tests/fixtures/smallnet_reference.npz (activations of a
32x32 gradient image computed with torch, an implementation independent of
this package's conv/pool code). Run from the repository root:

    python3 tools/make_fixture_net.py
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from eastsplat.features import default_network, save_weights  # noqa: E402


def gradient_image(size=32):
    y, x = np.mgrid[0:size, 0:size].astype(np.float32) / (size - 1)
    return np.stack([x, y, np.full_like(x, 0.5)], axis=2)


def torch_reference(net, image):
    import torch
    import torch.nn.functional as F

    x = torch.from_numpy(image.transpose(2, 0, 1)[None].copy())
    mean = torch.tensor(net.normalization_mean, dtype=torch.float32).view(1, 3, 1, 1)
    std = torch.tensor(net.normalization_std, dtype=torch.float32).view(1, 3, 1, 1)
    x = (x - mean) / std
    maps = {}
    for layer in net.layers:
        if layer.kind == "conv":
            x = F.conv2d(x, torch.from_numpy(layer.weight.copy()),
                         torch.from_numpy(layer.bias.copy()), padding=1)
        elif layer.kind == "relu":
            x = F.relu(x)
        else:
            x = F.max_pool2d(x, 2, 2)
        if layer.name in net.tap_points:
            maps[layer.name] = x[0].numpy().copy()
    return maps


def main():
    fixtures = ROOT / "tests" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    net = default_network(seed=0)
    save_weights(net, fixtures / "smallnet.eastnet")

    image = gradient_image()
    maps = torch_reference(net, image)
    np.savez(fixtures / "smallnet_reference.npz", image=image,
             **{f"tap_{k}": v for k, v in maps.items()})
    for k, v in maps.items():
        print(f"{k}: {v.shape} mean {v.mean():.6f}")
    print(f"wrote {fixtures / 'smallnet.eastnet'} and smallnet_reference.npz")


if __name__ == "__main__":
    main()
