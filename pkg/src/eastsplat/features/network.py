"""VGG-style convolutional feature extractor, forward and input-gradient.

The layer vocabulary is conv(3x3, stride 1, pad 1) / relu / maxpool(2x2,
stride 2). Weights are frozen: backward propagates to the input image only.
Convolutions are evaluated as nine shifted matmuls so the heavy lifting
stays in BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, InvariantError

DEFAULT_TAPS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1")
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
MIN_INPUT = 16


@dataclass
class ConvLayer:
    name: str
    weight: np.ndarray  # (out_ch, in_ch, 3, 3)
    bias: np.ndarray  # (out_ch,)

    kind = "conv"

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]


@dataclass
class ReluLayer:
    name: str

    kind = "relu"


@dataclass
class PoolLayer:
    name: str

    kind = "pool"


@dataclass
class NetworkSpec:
    layers: list
    tap_points: tuple = DEFAULT_TAPS
    normalization_mean: np.ndarray = field(default_factory=lambda: np.array(IMAGENET_MEAN))
    normalization_std: np.ndarray = field(default_factory=lambda: np.array(IMAGENET_STD))

    def validate(self) -> None:
        channels = 3
        names = set()
        for layer in self.layers:
            if layer.name in names:
                raise InvariantError(f"duplicate layer name {layer.name!r}")
            names.add(layer.name)
            if layer.kind == "conv":
                if layer.weight.shape[1] != channels:
                    raise InvariantError(
                        f"{layer.name}: expects {layer.weight.shape[1]} input "
                        f"channels, previous layer provides {channels}")
                if layer.weight.shape[2:] != (3, 3):
                    raise InvariantError(f"{layer.name}: kernel must be 3x3")
                if layer.bias.shape != (layer.weight.shape[0],):
                    raise InvariantError(f"{layer.name}: bias shape mismatch")
                channels = layer.out_channels
        for tap in self.tap_points:
            if tap not in names:
                raise InvariantError(f"tap point {tap!r} names no layer")

    def tap_channels(self) -> dict:
        out = {}
        channels = 3
        for layer in self.layers:
            if layer.kind == "conv":
                channels = layer.out_channels
            if layer.name in self.tap_points:
                out[layer.name] = channels
        return out


class FeatureMaps:
    """Tap-point name -> activation tensor (channels x height x width)."""

    def __init__(self, maps: dict, trace=None):
        self.maps = maps
        self._trace = trace

    def __getitem__(self, name):
        return self.maps[name]

    def __contains__(self, name):
        return name in self.maps

    def keys(self):
        return self.maps.keys()

    def items(self):
        return self.maps.items()


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    out_ch = weight.shape[0]
    padded = np.zeros((c, h + 2, w + 2), dtype=x.dtype)
    padded[:, 1:h + 1, 1:w + 1] = x
    out = np.zeros((out_ch, h * w), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            shifted = padded[:, di:di + h, dj:dj + w].reshape(c, h * w)
            out += weight[:, :, di, dj].astype(x.dtype) @ shifted
    out += bias.astype(x.dtype)[:, None]
    return out.reshape(out_ch, h, w)


def conv2d_input_backward(grad_out: np.ndarray, weight: np.ndarray) -> np.ndarray:
    out_ch, h, w = grad_out.shape
    in_ch = weight.shape[1]
    gpad = np.zeros((in_ch, h + 2, w + 2), dtype=grad_out.dtype)
    flat = grad_out.reshape(out_ch, h * w)
    for di in range(3):
        for dj in range(3):
            contrib = weight[:, :, di, dj].astype(grad_out.dtype).T @ flat
            gpad[:, di:di + h, dj:dj + w] += contrib.reshape(in_ch, h, w)
    return gpad[:, 1:h + 1, 1:w + 1]


def maxpool2x2(x: np.ndarray):
    c, h, w = x.shape
    he, we = (h // 2) * 2, (w // 2) * 2
    view = (x[:, :he, :we].reshape(c, he // 2, 2, we // 2, 2)
            .transpose(0, 1, 3, 2, 4).reshape(c, he // 2, we // 2, 4))
    idx = view.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(view, idx[..., None], axis=-1)[..., 0]
    return out, idx, (h, w)


def maxpool2x2_backward(grad_out: np.ndarray, idx: np.ndarray, in_shape) -> np.ndarray:
    c, ho, wo = grad_out.shape
    h, w = in_shape
    buf = np.zeros((c, ho, wo, 4), dtype=grad_out.dtype)
    np.put_along_axis(buf, idx[..., None].astype(np.int64), grad_out[..., None], axis=-1)
    unpooled = (buf.reshape(c, ho, wo, 2, 2).transpose(0, 1, 3, 2, 4)
                .reshape(c, ho * 2, wo * 2))
    full = np.zeros((c, h, w), dtype=grad_out.dtype)
    full[:, :ho * 2, :wo * 2] = unpooled
    return full


def _normalize(net: NetworkSpec, image: np.ndarray) -> np.ndarray:
    x = image.transpose(2, 0, 1)
    mean = net.normalization_mean.astype(image.dtype).reshape(3, 1, 1)
    std = net.normalization_std.astype(image.dtype).reshape(3, 1, 1)
    return (x - mean) / std


def forward(net: NetworkSpec, image: np.ndarray, want_trace: bool = False) -> FeatureMaps:
    """Run the extractor on an H x W x 3 image in [0, 1].

    With ``want_trace`` the returned FeatureMaps carries the relu masks and
    pooling argmax indices backward() needs.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"expected H x W x 3 image, got {image.shape}")
    if image.shape[0] < MIN_INPUT or image.shape[1] < MIN_INPUT:
        raise DimensionError(
            f"image {image.shape[0]}x{image.shape[1]} too small; need at least "
            f"{MIN_INPUT}x{MIN_INPUT}")
    x = _normalize(net, image)
    maps = {}
    trace = [] if want_trace else None
    for layer in net.layers:
        if layer.kind == "conv":
            x = conv2d(x, layer.weight, layer.bias)
            if want_trace:
                trace.append(None)
        elif layer.kind == "relu":
            mask = x > 0
            x = np.where(mask, x, 0)
            if want_trace:
                trace.append(mask)
        elif layer.kind == "pool":
            x, idx, in_shape = maxpool2x2(x)
            if want_trace:
                trace.append((idx, in_shape))
        else:  # pragma: no cover - spec types are closed
            raise InvariantError(f"unknown layer kind {layer.kind!r}")
        if layer.name in net.tap_points:
            maps[layer.name] = x.copy()
    return FeatureMaps(maps, trace=trace)


def backward(net: NetworkSpec, image: np.ndarray, grads: dict,
             features: FeatureMaps | None = None) -> np.ndarray:
    """Input-image gradient for upstream tap gradients.

    ``grads`` maps tap names to arrays shaped like that tap's activations.
    Reuses the forward trace when ``features`` carries one, otherwise
    recomputes it.
    """
    if features is None or features._trace is None:
        features = forward(net, image, want_trace=True)
    trace = features._trace
    for name, g in grads.items():
        if name not in features.maps:
            raise DimensionError(f"gradient given for unknown tap {name!r}")
        if g.shape != features.maps[name].shape:
            raise DimensionError(
                f"gradient for {name!r} has shape {g.shape}, activations are "
                f"{features.maps[name].shape}")

    g = None
    for layer, cached in zip(reversed(net.layers), reversed(trace)):
        if layer.name in grads:
            upstream = grads[layer.name].astype(image.dtype, copy=False)
            g = upstream.copy() if g is None else g + upstream
        if g is None:
            continue  # deeper than any tap receiving gradient
        if layer.kind == "conv":
            g = conv2d_input_backward(g, layer.weight)
        elif layer.kind == "relu":
            g = np.where(cached, g, 0)
        elif layer.kind == "pool":
            idx, in_shape = cached
            g = maxpool2x2_backward(g, idx, in_shape)
    if g is None:
        return np.zeros_like(image)
    std = net.normalization_std.astype(image.dtype).reshape(3, 1, 1)
    return (g / std).transpose(1, 2, 0)


def channel_stats(features: np.ndarray, floor: float = 1e-8):
    """Per-channel mean and population std over spatial positions."""
    if features.size == 0:
        raise DimensionError("channel_stats needs a non-empty tensor")
    c = features.shape[0]
    flat = features.reshape(c, -1)
    mean = flat.mean(axis=1)
    std = np.maximum(flat.std(axis=1), floor)
    return mean, std


def default_network(seed: int = 0, channels=(8, 16, 32, 48),
                    taps=DEFAULT_TAPS) -> NetworkSpec:
    """Small seeded extractor used when no weights container is supplied.

    He-initialized filters; one conv per block, pools between blocks,
    mirroring the tap structure of the full-size network.
    """
    rng = np.random.default_rng(seed)
    layers = []
    in_ch = 3
    for block, out_ch in enumerate(channels, start=1):
        fan_in = in_ch * 9
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_ch, in_ch, 3, 3))
        layers.append(ConvLayer(f"conv{block}_1", weight.astype(np.float32),
                                np.zeros(out_ch, dtype=np.float32)))
        layers.append(ReluLayer(f"relu{block}_1"))
        if block < len(channels):
            layers.append(PoolLayer(f"pool{block}"))
        in_ch = out_ch
    net = NetworkSpec(layers=layers, tap_points=tuple(taps))
    net.validate()
    return net
