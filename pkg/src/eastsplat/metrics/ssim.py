"""Structural similarity on Rec. 601 luminance.

11x11 Gaussian window (sigma 1.5, normalized), C1 = 0.01^2, C2 = 0.03^2,
windows fully inside the image ('valid'). ssim_grad() returns the exact
input gradient so 1 - SSIM can serve as a training loss term.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve, correlate

from ..errors import DimensionError

WINDOW = 11
SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2
LUMA = np.array([0.299, 0.587, 0.114])


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


_KERNEL = gaussian_window()


def luminance(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return image.astype(np.float64)
    return image.astype(np.float64) @ LUMA


def _check_pair(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise DimensionError(f"expected H x W or H x W x 3 images, got {a.shape}")
    if a.shape[0] < WINDOW or a.shape[1] < WINDOW:
        raise DimensionError(
            f"images must be at least {WINDOW}x{WINDOW} for the SSIM window")


def _corr(x):
    return correlate(x, _KERNEL, mode="valid")


def _ssim_terms(ya, yb):
    mu_a = _corr(ya)
    mu_b = _corr(yb)
    saa = _corr(ya * ya) - mu_a * mu_a
    sbb = _corr(yb * yb) - mu_b * mu_b
    sab = _corr(ya * yb) - mu_a * mu_b
    p = 2.0 * mu_a * mu_b + C1
    q = 2.0 * sab + C2
    r = mu_a * mu_a + mu_b * mu_b + C1
    d = saa + sbb + C2
    return mu_a, mu_b, saa, sbb, sab, p, q, r, d


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM index over all valid window positions."""
    _check_pair(a, b)
    ya, yb = luminance(a), luminance(b)
    _, _, _, _, _, p, q, r, d = _ssim_terms(ya, yb)
    return float(np.mean(p * q / (r * d)))


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_pair(a, b)
    ya, yb = luminance(a), luminance(b)
    _, _, _, _, _, p, q, r, d = _ssim_terms(ya, yb)
    return p * q / (r * d)


def ssim_grad(a: np.ndarray, b: np.ndarray):
    """(ssim value, d ssim / d a) with the same window semantics as ssim()."""
    _check_pair(a, b)
    ya, yb = luminance(a), luminance(b)
    mu_a, mu_b, saa, sbb, sab, p, q, r, d = _ssim_terms(ya, yb)
    s = p * q / (r * d)
    n = s.size

    # partials of S wrt the window statistics
    ds_dmu_a = (2.0 * mu_b * q) / (r * d) - (2.0 * mu_a * p * q) / (r * r * d)
    ds_dsaa = -p * q / (r * d * d)
    ds_dsab = 2.0 * p / (r * d)

    w = 1.0 / n
    # leaves: mu_a, corr(a^2), corr(a*b); fold the mu_a dependence of the
    # variance/covariance terms into the mu_a slot
    g_mu = w * (ds_dmu_a - 2.0 * mu_a * ds_dsaa - mu_b * ds_dsab)
    g_caa = w * ds_dsaa
    g_cab = w * ds_dsab

    def spread(u):  # adjoint of valid correlation
        return convolve(u, _KERNEL, mode="full")

    g_ya = spread(g_mu) + 2.0 * ya * spread(g_caa) + yb * spread(g_cab)
    value = float(np.mean(s))
    if a.ndim == 2:
        return value, g_ya
    return value, g_ya[:, :, None] * LUMA[None, None, :]
