"""Scene seeding from sparse reconstruction points."""

from __future__ import annotations

from datetime import datetime, timezone

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvariantError
from .types import (SH_COEFF_COUNT, Bounds, GaussianCloud, SceneModel, SH_DEGREE, logit)

SH_C0 = 0.28209479177387814

INITIAL_OPACITY = 0.1
NEIGHBOR_COUNT = 3
FALLBACK_SCALE_FRACTION = 0.01


def rgb_to_sh_dc(rgb: np.ndarray) -> np.ndarray:
    """Color in [0,1] to the degree-0 coefficient that reproduces it."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def mean_neighbor_distances(points: np.ndarray, k: int = NEIGHBOR_COUNT) -> np.ndarray:
    """Mean distance from each point to its k nearest other points."""
    points = np.asarray(points, dtype=np.float64)
    tree = cKDTree(points)
    # k+1 because the closest hit is the point itself
    dists, _ = tree.query(points, k=k + 1)
    return dists[:, 1:].mean(axis=1)


def init_scene(dataset, dtype=np.float32) -> SceneModel:
    """One Gaussian per SfM point.

    Position and color come straight from the point; extent is the mean
    distance to the 3 nearest neighbors (log-stored). With fewer than 4
    points there are no meaningful neighbors, so extent falls back to 1% of
    the scene-bounds diagonal.
    """
    points = np.asarray(dataset.sfm_points, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(dataset.sfm_colors, dtype=np.float64).reshape(-1, 3)
    n = points.shape[0]
    if n < 1:
        raise InvariantError("init_scene needs at least one SfM point")

    if n >= NEIGHBOR_COUNT + 1:
        extents = mean_neighbor_distances(points)
    else:
        corners = [cam.center for cam, _ in dataset.views] if dataset.views else []
        bounds = Bounds.of_points(np.vstack([points] + [np.asarray(c).reshape(1, 3) for c in corners]))
        fallback = max(bounds.diagonal * FALLBACK_SCALE_FRACTION, 1e-3)
        extents = np.full(n, fallback)
    extents = np.maximum(extents, 1e-8)

    sh = np.zeros((n, SH_COEFF_COUNT), dtype=np.float64)
    dc = rgb_to_sh_dc(colors)  # (n, 3)
    # coefficient layout: 16 basis values per channel, channels contiguous
    sh[:, 0::16] = dc

    cloud = GaussianCloud(
        positions=points,
        log_scales=np.log(extents)[:, None].repeat(3, axis=1),
        rotations=np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1)),
        opacity_logits=np.full(n, logit(INITIAL_OPACITY)),
        sh_coeffs=sh,
        dtype=dtype,
    )
    scene = SceneModel(
        gaussians=cloud,
        bounds=Bounds.of_points(points),
        metadata={
            "created": datetime.now(timezone.utc).isoformat(),
            "sh_degree": SH_DEGREE,
            "source": "sfm_points",
        },
    )
    scene.validate()
    return scene
