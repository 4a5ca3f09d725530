"""Style-transfer objective: feature-statistics modulation and losses.

adain() re-centers content feature channels onto style statistics; the
style loss matches Gram matrices (channel correlations) per tap; the
content loss is a per-tap MSE. Loss gradients are hand-written adjoints so
the whole objective can drive the differentiable renderer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from ..features.network import FeatureMaps, channel_stats, forward

DEFAULT_CONTENT_TAPS = ("relu4_1",)


@dataclass
class LossWeights:
    w_content: float = 1.0
    w_style: float = 10.0

    def validate(self) -> None:
        if self.w_content < 0 or self.w_style < 0:
            raise ValueError("loss weights must be non-negative")
        if self.w_content == 0 and self.w_style == 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass
class StyleTargets:
    """Per-tap style statistics: Gram matrix plus channel mean/std."""

    grams: dict  # tap -> (C, C)
    means: dict  # tap -> (C,)
    stds: dict  # tap -> (C,)

    def taps(self):
        return self.grams.keys()


def adain(content: np.ndarray, style_mean: np.ndarray, style_std: np.ndarray) -> np.ndarray:
    """Shift content channel statistics onto the style's mean and std."""
    style_mean = np.asarray(style_mean, dtype=content.dtype)
    style_std = np.asarray(style_std, dtype=content.dtype)
    if content.shape[0] != style_mean.shape[0] or content.shape[0] != style_std.shape[0]:
        raise DimensionError(
            f"channel mismatch: content has {content.shape[0]} channels, style "
            f"stats have {style_mean.shape[0]}/{style_std.shape[0]}")
    mu, sigma = channel_stats(content)
    mu = mu.astype(content.dtype)[:, None, None]
    sigma = sigma.astype(content.dtype)[:, None, None]
    return (style_std[:, None, None] * (content - mu) / sigma
            + style_mean[:, None, None])


def gram(features: np.ndarray) -> np.ndarray:
    """Channel-correlation matrix, normalized by channels * positions."""
    if features.size == 0:
        raise DimensionError("gram needs a non-empty tensor")
    c = features.shape[0]
    flat = features.reshape(c, -1)
    n = flat.shape[1]
    return (flat @ flat.T) / (c * n)


def gram_backward(features: np.ndarray, grad_gram: np.ndarray) -> np.ndarray:
    """Adjoint of gram(): d sum(grad_gram * G) / d features."""
    c = features.shape[0]
    flat = features.reshape(c, -1)
    n = flat.shape[1]
    sym = grad_gram + grad_gram.T
    return (sym @ flat / (c * n)).reshape(features.shape)


def content_loss(generated: FeatureMaps, target: FeatureMaps,
                 taps=DEFAULT_CONTENT_TAPS) -> float:
    total = 0.0
    for tap in taps:
        if tap not in generated.maps or tap not in target.maps:
            raise DimensionError(f"content tap {tap!r} missing from feature maps")
        a, b = generated[tap], target[tap]
        if a.shape != b.shape:
            raise DimensionError(
                f"content tap {tap!r}: shapes {a.shape} vs {b.shape} differ")
        d = a.astype(np.float64) - b.astype(np.float64)
        total += float(np.mean(d * d))
    return total


def content_loss_backward(generated: FeatureMaps, target: FeatureMaps,
                          taps=DEFAULT_CONTENT_TAPS) -> dict:
    grads = {}
    for tap in taps:
        a, b = generated[tap], target[tap]
        grads[tap] = (2.0 / a.size) * (a - b)
    return grads


def style_loss(generated: FeatureMaps, targets: StyleTargets) -> float:
    total = 0.0
    for tap in targets.taps():
        if tap not in generated.maps:
            raise DimensionError(f"style tap {tap!r} missing from generated features")
        g = gram(generated[tap].astype(np.float64))
        t = targets.grams[tap]
        if g.shape != t.shape:
            raise DimensionError(
                f"style tap {tap!r}: gram {g.shape} vs target {t.shape}")
        d = g - t
        total += float(np.mean(d * d))
    return total


def style_loss_backward(generated: FeatureMaps, targets: StyleTargets) -> dict:
    grads = {}
    for tap in targets.taps():
        feats = generated[tap]
        g = gram(feats.astype(np.float64))
        d = g - targets.grams[tap]
        grad_gram = (2.0 / d.size) * d
        grads[tap] = gram_backward(feats.astype(np.float64), grad_gram).astype(feats.dtype)
    return grads


def total_loss(l_content: float, l_style: float, weights: LossWeights) -> float:
    return weights.w_content * l_content + weights.w_style * l_style


def build_style_targets(net, style_image: np.ndarray) -> StyleTargets:
    """Extract per-tap Gram matrices and channel statistics from a style image."""
    feats = forward(net, style_image)
    grams, means, stds = {}, {}, {}
    for tap, tensor in feats.items():
        grams[tap] = gram(tensor.astype(np.float64))
        mu, sigma = channel_stats(tensor)
        means[tap] = mu.astype(np.float64)
        stds[tap] = sigma.astype(np.float64)
    return StyleTargets(grams=grams, means=means, stds=stds)
