"""Feature-space perceptual distance.

Stand-in for a calibrated learned metric: channel-unit-normalized feature
differences averaged over the extractor's tap points. Symmetric, zero on
identical inputs, non-negative.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ..features.network import forward

NORM_EPS = 1e-10


def unit_normalize_channels(t: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(t.astype(np.float64) ** 2, axis=0, keepdims=True))
    return t / (norm + NORM_EPS)


def feature_distance(a: np.ndarray, b: np.ndarray, net) -> float:
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < 16 or a.shape[1] < 16:
        raise DimensionError("images must be at least 16x16")
    fa = forward(net, a)
    fb = forward(net, b)
    total = 0.0
    taps = list(fa.keys())
    for tap in taps:
        da = unit_normalize_channels(fa[tap])
        db = unit_normalize_channels(fb[tap])
        total += float(np.mean((da - db) ** 2))
    return total / len(taps)
