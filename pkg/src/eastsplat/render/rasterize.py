"""Tile-binned differentiable rasterization.

Splats are binned into 16x16 pixel tiles, depth-sorted per tile (ties broken
by Gaussian index), then composited front-to-back per pixel:

    pixel = sum_i T_i * alpha_i * color_i + T_final * background
    T_i = prod_{j<i} (1 - alpha_j)

alpha_i = opacity * exp(-0.5 d^T cov2d^{-1} d), clamped at 0.99, skipped
below 1/255; compositing stops once transmittance would fall below 1e-4.
The hot per-pixel loops live in a compiled extension (render._core) with a
NumPy twin (render._cpu) selected at import.
"""

from __future__ import annotations

import importlib
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolationError
from ..scene.types import Camera, SceneModel
from . import projection
from .projection import preprocess, preprocess_backward

TILE_SIZE = 16

_BACKENDS = {}


def _load_backend(name: str):
    if name not in _BACKENDS:
        module = {"cython": "eastsplat.render._core", "python": "eastsplat.render._cpu"}[name]
        _BACKENDS[name] = importlib.import_module(module)
    return _BACKENDS[name]


def available_backends() -> list:
    names = []
    try:
        _load_backend("cython")
        names.append("cython")
    except ImportError:
        pass
    names.append("python")
    return names


_active_backend = None


def active_backend() -> str:
    global _active_backend
    if _active_backend is None:
        requested = os.environ.get("EASTSPLAT_BACKEND", "auto")
        if requested in ("cython", "python"):
            _active_backend = requested
        else:
            _active_backend = available_backends()[0]
    return _active_backend


def use_backend(name: str) -> None:
    """Force a kernel backend ('cython' or 'python'); raises if unavailable."""
    global _active_backend
    if name not in ("cython", "python"):
        raise ValueError(f"unknown backend {name!r}")
    _load_backend(name)
    _active_backend = name


@dataclass
class SceneGradients:
    """Per-parameter gradients, same shapes as the GaussianCloud fields."""

    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray

    def check_finite(self) -> None:
        for name in ("positions", "log_scales", "rotations", "opacity_logits", "sh_coeffs"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise FloatingPointError(f"non-finite gradient in {name}")

    @classmethod
    def zeros(cls, n: int, sh_dim: int, dtype) -> "SceneGradients":
        return cls(np.zeros((n, 3), dtype=dtype), np.zeros((n, 3), dtype=dtype),
                   np.zeros((n, 4), dtype=dtype), np.zeros(n, dtype=dtype),
                   np.zeros((n, sh_dim), dtype=dtype))


@dataclass
class TileBinning:
    """Per-tile index ranges into the depth-sorted splat list."""

    sorted_splats: np.ndarray  # (K,) int32, indices into the visible-splat arrays
    tile_ranges: np.ndarray  # (tiles_x*tiles_y + 1,) int64
    tiles_x: int
    tiles_y: int
    tile_size: int


@dataclass
class RenderOutput:
    image: np.ndarray  # (H, W, 3)
    final_transmittance: np.ndarray  # (H, W)
    per_tile_ranges: TileBinning
    last_contrib: np.ndarray  # (H, W) int32, rank of last composited splat, -1 if none
    n_contrib: np.ndarray = None  # (H, W) int32, composited splats per pixel
    background: np.ndarray = field(repr=False, default=None)
    _cache: object = field(repr=False, default=None)
    _scene_token: tuple = field(repr=False, default=None)

    def structure_signature(self) -> tuple:
        """Bytes describing the discrete compositing structure.

        Two renders of the same scene lie on the same smooth piece of the
        render function iff their signatures match (same visibility set,
        sort order, and per-pixel composited splats); finite differencing
        across a signature change straddles a kink.
        """
        cache_idx = b"" if self._cache is None else self._cache.idx.tobytes()
        return (cache_idx, self.per_tile_ranges.sorted_splats.tobytes(),
                self.last_contrib.tobytes(), self.n_contrib.tobytes())


def bin_splats(means2d, bin_radii, depths, width, height, tile_size=TILE_SIZE) -> TileBinning:
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    m = means2d.shape[0]

    x0 = np.clip(np.floor((means2d[:, 0] - bin_radii) / tile_size), 0, tiles_x - 1).astype(np.int64)
    x1 = np.clip(np.floor((means2d[:, 0] + bin_radii) / tile_size), 0, tiles_x - 1).astype(np.int64)
    y0 = np.clip(np.floor((means2d[:, 1] - bin_radii) / tile_size), 0, tiles_y - 1).astype(np.int64)
    y1 = np.clip(np.floor((means2d[:, 1] + bin_radii) / tile_size), 0, tiles_y - 1).astype(np.int64)
    # drop splats whose footprint never reaches the image rectangle
    out = ((means2d[:, 0] + bin_radii < 0) | (means2d[:, 0] - bin_radii > width)
           | (means2d[:, 1] + bin_radii < 0) | (means2d[:, 1] - bin_radii > height))
    counts = np.where(out, 0, (x1 - x0 + 1) * (y1 - y0 + 1))

    total = int(counts.sum())
    ntiles = tiles_x * tiles_y
    if total == 0:
        return TileBinning(np.zeros(0, dtype=np.int32), np.zeros(ntiles + 1, dtype=np.int64),
                           tiles_x, tiles_y, tile_size)

    offsets = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    rep = np.repeat(np.arange(m, dtype=np.int64), counts)
    within = np.arange(total, dtype=np.int64) - offsets[rep]
    span_x = (x1 - x0 + 1)[rep]
    tx = x0[rep] + within % span_x
    ty = y0[rep] + within // span_x
    tile_id = ty * tiles_x + tx

    # primary: tile, secondary: depth, tie-break: splat index
    order = np.lexsort((rep, depths[rep], tile_id))
    sorted_tiles = tile_id[order]
    tile_ranges = np.searchsorted(sorted_tiles, np.arange(ntiles + 1, dtype=np.int64))
    return TileBinning(rep[order].astype(np.int32), tile_ranges.astype(np.int64),
                       tiles_x, tiles_y, tile_size)


def _scene_token(scene: SceneModel, camera: Camera) -> tuple:
    return (id(scene.gaussians), len(scene.gaussians),
            camera.fx, camera.fy, camera.cx, camera.cy, camera.width, camera.height,
            camera.rotation.tobytes(), camera.translation.tobytes())


def rasterize(scene: SceneModel, camera: Camera, background=(0.0, 0.0, 0.0),
              tile_size: int = TILE_SIZE, dtype=None, backend: str | None = None) -> RenderOutput:
    """Render a scene through the given camera.

    ``dtype`` overrides the compute precision (default: the scene's own);
    pass np.float64 for gradient-check headroom.
    """
    camera.validate()
    dtype = np.dtype(dtype or scene.gaussians.dtype)
    bg = np.ascontiguousarray(background, dtype=dtype).reshape(3)
    h, w = camera.height, camera.width

    cache = preprocess(scene.gaussians, camera, dtype=dtype)
    if cache is None:
        tiles_x = (w + tile_size - 1) // tile_size
        tiles_y = (h + tile_size - 1) // tile_size
        binning = TileBinning(np.zeros(0, dtype=np.int32),
                              np.zeros(tiles_x * tiles_y + 1, dtype=np.int64),
                              tiles_x, tiles_y, tile_size)
        return RenderOutput(
            image=np.tile(bg, (h, w, 1)),
            final_transmittance=np.ones((h, w), dtype=dtype),
            per_tile_ranges=binning,
            last_contrib=np.full((h, w), -1, dtype=np.int32),
            n_contrib=np.zeros((h, w), dtype=np.int32),
            background=bg,
            _cache=None,
            _scene_token=_scene_token(scene, camera),
        )

    binning = bin_splats(cache.means2d, cache.bin_radii, cache.depths, w, h, tile_size)
    kernels = _load_backend(backend or active_backend())
    image, final_t, last_rank, n_contrib = kernels.forward(
        binning.sorted_splats, binning.tile_ranges, cache.means2d, cache.conic,
        cache.colors, cache.alpha_base, w, h, tile_size, bg)
    return RenderOutput(
        image=image,
        final_transmittance=final_t,
        per_tile_ranges=binning,
        last_contrib=last_rank,
        n_contrib=n_contrib,
        background=bg,
        _cache=cache,
        _scene_token=_scene_token(scene, camera),
    )


def rasterize_backward(scene: SceneModel, camera: Camera, render: RenderOutput,
                       grad_image: np.ndarray, backend: str | None = None) -> SceneGradients:
    """Gradients of sum(grad_image * image) wrt every Gaussian parameter.

    ``render`` must come from rasterize() on the same scene and camera; the
    stored binning and transmittance are replayed back-to-front.
    """
    if render._scene_token != _scene_token(scene, camera):
        raise ContractViolationError(
            "render output does not match this scene/camera pairing")
    cache = render._cache
    n = len(scene.gaussians)
    sh_dim = scene.gaussians.sh_coeffs.shape[1]
    if cache is None:
        return SceneGradients.zeros(n, sh_dim, scene.gaussians.dtype)

    dtype = cache.dtype
    grad_image = np.ascontiguousarray(grad_image, dtype=dtype)
    if grad_image.shape != render.image.shape:
        raise ContractViolationError(
            f"grad_image shape {grad_image.shape} != image shape {render.image.shape}")

    binning = render.per_tile_ranges
    kernels = _load_backend(backend or active_backend())
    g_means2d, g_conics, g_colors, g_alphas = kernels.backward(
        binning.sorted_splats, binning.tile_ranges, cache.means2d, cache.conic,
        cache.colors, cache.alpha_base, camera.width, camera.height,
        binning.tile_size, render.background, render.final_transmittance,
        render.last_contrib, grad_image)

    g_pos, g_ls, g_rot, g_op, g_sh = preprocess_backward(
        scene.gaussians, cache, g_means2d, g_conics, g_colors, g_alphas)
    return SceneGradients(g_pos, g_ls, g_rot, g_op, g_sh)
