"""Domain types: Gaussian primitives, cameras, scenes, datasets.

Gaussian parameters are stored unconstrained (log-scale, opacity logit,
unnormalized quaternion) and activated on use, so gradient steps never need a
projection back onto the valid set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import DimensionError, InvariantError

SH_DEGREE = 3
SH_COEFFS_PER_CHANNEL = (SH_DEGREE + 1) ** 2  # 16
SH_COEFF_COUNT = SH_COEFFS_PER_CHANNEL * 3  # 48

QUAT_UNIT_TOL = 1e-6
ROTATION_ORTHO_TOL = 1e-6


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


def normalize_quaternion(q):
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise InvariantError("quaternion has (near-)zero norm and cannot be normalized")
    return q / norm


@dataclass
class Gaussian3D:
    """One scene primitive, unconstrained parameterization.

    position     : (3,) scene units
    log_scale    : (3,) exp() gives per-axis extent
    rotation     : (4,) quaternion (w, x, y, z), normalized on activation
    opacity_logit: scalar, sigmoid() gives opacity in (0, 1)
    sh_coeffs    : (48,) = 16 spherical-harmonic coefficients x 3 channels
    """

    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.opacity_logit = float(self.opacity_logit)
        self.sh_coeffs = np.asarray(self.sh_coeffs, dtype=np.float64).reshape(-1)
        if self.sh_coeffs.shape[0] != SH_COEFF_COUNT:
            raise InvariantError(
                f"sh_coeffs must have length {SH_COEFF_COUNT}, got {self.sh_coeffs.shape[0]}"
            )

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def unit_rotation(self) -> np.ndarray:
        return normalize_quaternion(self.rotation)

    def validate(self) -> None:
        for name, arr in (("position", self.position), ("log_scale", self.log_scale),
                          ("rotation", self.rotation), ("sh_coeffs", self.sh_coeffs)):
            if not np.all(np.isfinite(arr)):
                raise InvariantError(f"{name} contains non-finite values")
        if not np.isfinite(self.opacity_logit):
            raise InvariantError("opacity_logit is non-finite")
        if not np.all(self.scale > 0):
            raise InvariantError("activated scale must be strictly positive")
        if not 0.0 < self.opacity < 1.0:
            raise InvariantError("activated opacity must lie strictly inside (0, 1)")
        q = self.unit_rotation
        if abs(np.linalg.norm(q) - 1.0) > QUAT_UNIT_TOL:
            raise InvariantError("activated quaternion is not unit length")


class GaussianCloud:
    """Struct-of-arrays storage for an ordered collection of Gaussian3D.

    Arrays are float32 by default; pass ``dtype=np.float64`` for the
    gradient-check precision mode. Indexing returns a Gaussian3D copy.
    """

    FIELDS = ("positions", "log_scales", "rotations", "opacity_logits", "sh_coeffs")

    def __init__(self, positions, log_scales, rotations, opacity_logits, sh_coeffs,
                 dtype=np.float32):
        self.positions = np.ascontiguousarray(positions, dtype=dtype).reshape(-1, 3)
        n = self.positions.shape[0]
        self.log_scales = np.ascontiguousarray(log_scales, dtype=dtype).reshape(n, 3)
        self.rotations = np.ascontiguousarray(rotations, dtype=dtype).reshape(n, 4)
        self.opacity_logits = np.ascontiguousarray(opacity_logits, dtype=dtype).reshape(n)
        self.sh_coeffs = np.ascontiguousarray(sh_coeffs, dtype=dtype).reshape(n, SH_COEFF_COUNT)

    @classmethod
    def empty(cls, n: int, dtype=np.float32) -> "GaussianCloud":
        return cls(
            np.zeros((n, 3)), np.zeros((n, 3)),
            np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1)),
            np.zeros(n), np.zeros((n, SH_COEFF_COUNT)), dtype=dtype,
        )

    @classmethod
    def from_gaussians(cls, gaussians, dtype=np.float32) -> "GaussianCloud":
        gaussians = list(gaussians)
        return cls(
            np.stack([g.position for g in gaussians]) if gaussians else np.zeros((0, 3)),
            np.stack([g.log_scale for g in gaussians]) if gaussians else np.zeros((0, 3)),
            np.stack([g.rotation for g in gaussians]) if gaussians else np.zeros((0, 4)),
            np.array([g.opacity_logit for g in gaussians]),
            np.stack([g.sh_coeffs for g in gaussians]) if gaussians else np.zeros((0, SH_COEFF_COUNT)),
            dtype=dtype,
        )

    @property
    def dtype(self):
        return self.positions.dtype

    def astype(self, dtype) -> "GaussianCloud":
        return GaussianCloud(self.positions, self.log_scales, self.rotations,
                             self.opacity_logits, self.sh_coeffs, dtype=dtype)

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(self.positions.copy(), self.log_scales.copy(),
                             self.rotations.copy(), self.opacity_logits.copy(),
                             self.sh_coeffs.copy(), dtype=self.dtype)

    def select(self, mask_or_indices) -> "GaussianCloud":
        return GaussianCloud(
            self.positions[mask_or_indices], self.log_scales[mask_or_indices],
            self.rotations[mask_or_indices], self.opacity_logits[mask_or_indices],
            self.sh_coeffs[mask_or_indices], dtype=self.dtype,
        )

    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> Gaussian3D:
        return Gaussian3D(self.positions[i], self.log_scales[i], self.rotations[i],
                          float(self.opacity_logits[i]), self.sh_coeffs[i])

    def __iter__(self) -> Iterator[Gaussian3D]:
        for i in range(len(self)):
            yield self[i]

    def validate(self) -> None:
        for name in self.FIELDS:
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise InvariantError(f"{name} contains non-finite values")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(norms < 1e-12):
            raise InvariantError("rotation quaternions must have non-zero norm")


@dataclass
class Bounds:
    """Axis-aligned box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(3)

    @classmethod
    def of_points(cls, points) -> "Bounds":
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if points.shape[0] == 0:
            raise InvariantError("cannot compute bounds of an empty point set")
        return cls(points.min(axis=0), points.max(axis=0))

    def contains(self, points, tol: float = 1e-6) -> bool:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return bool(np.all(points >= self.lo - tol) and np.all(points <= self.hi + tol))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass
class Camera:
    """Pinhole intrinsics plus world-to-camera pose.

    ``rotation`` maps world to camera coordinates: x_cam = R @ x_world + t.
    Pixel coordinates: u = fx * x/z + cx, v = fy * y/z + cy.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.fx = float(self.fx)
        self.fy = float(self.fy)
        self.cx = float(self.cx)
        self.cy = float(self.cy)
        self.width = int(self.width)
        self.height = int(self.height)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvariantError("camera width and height must be >= 1")
        if self.fx <= 0 or self.fy <= 0:
            raise InvariantError("focal lengths must be positive")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > ROTATION_ORTHO_TOL:
            raise InvariantError(f"camera rotation is not orthonormal (max |R^T R - I| = {err:.3g})")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return points @ self.rotation.T + self.translation

    def project_points(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to pixels; returns (uv (N,2), depth (N,))."""
        cam = self.world_to_camera(points)
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * cam[:, 0] / z + self.cx
            v = self.fy * cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    def resized(self, width: int, height: int) -> "Camera":
        sx = width / self.width
        sy = height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
                      width, height, self.rotation.copy(), self.translation.copy())


@dataclass
class SceneModel:
    """A scene: ordered Gaussians, their bounding box, and creation metadata."""

    gaussians: GaussianCloud
    bounds: Bounds
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.gaussians) == 0:
            raise InvariantError("SceneModel must contain at least one Gaussian")
        self.gaussians.validate()
        if not self.bounds.contains(self.gaussians.positions):
            raise InvariantError("scene bounds do not contain all Gaussian positions")

    def refresh_bounds(self) -> None:
        self.bounds = Bounds.of_points(self.gaussians.positions)

    def snapshot(self) -> "SceneModel":
        """Deep copy; safe to hand to a concurrent reader."""
        return SceneModel(self.gaussians.copy(),
                          Bounds(self.bounds.lo.copy(), self.bounds.hi.copy()),
                          dict(self.metadata))


@dataclass
class TrainingDataset:
    """Posed views plus the sparse points they were reconstructed from."""

    views: list  # list of (Camera, image H x W x 3 float in [0,1])
    sfm_points: np.ndarray  # (M, 3)
    sfm_colors: np.ndarray  # (M, 3) in [0, 1]

    def validate(self) -> None:
        if len(self.views) == 0:
            raise InvariantError("dataset must contain at least one view")
        for cam, image in self.views:
            cam.validate()
            if image.shape != (cam.height, cam.width, 3):
                raise DimensionError(
                    f"image shape {image.shape} does not match camera "
                    f"({cam.height}, {cam.width}, 3)"
                )

    @property
    def cameras(self) -> list:
        return [cam for cam, _ in self.views]

    @property
    def images(self) -> list:
        return [img for _, img in self.views]
