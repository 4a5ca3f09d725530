"""Perspective projection of 3D Gaussians to screen-space splats.

Screen covariance follows the first-order (Jacobian) construction
cov2d = J W S W^T J^T with a +0.3*I low-pass term so sub-pixel splats stay
invertible. The vectorized preprocess() / preprocess_backward() pair is what
rasterization uses; project() is a scalar single-Gaussian implementation kept
deliberately separate so tests can cross-check the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scene.types import Camera, Gaussian3D, sigmoid
from .sh import evaluate_sh_backward, evaluate_sh_colors

NEAR_PLANE = 0.01
COV2D_REGULARIZER = 0.3
CULL_SIGMA = 3.0
ALPHA_SKIP = 1.0 / 255.0
ALPHA_CLAMP = 0.99
# binning radius: beyond sqrt(2*ln(255*alpha_clamp)) sigma the falloff drops
# every alpha below the 1/255 skip threshold
MAX_BIN_SIGMA = float(np.sqrt(2.0 * np.log(255.0 * ALPHA_CLAMP)))


@dataclass
class Splat2D:
    """One projected Gaussian."""

    mean2d: np.ndarray  # (2,) pixels
    cov2d: np.ndarray  # (2,2) pixels^2, regularizer included
    depth: float  # camera-space z
    color: np.ndarray  # (3,) from SH along the view ray
    alpha_base: float  # activated opacity
    radius: float  # conservative cull radius, pixels
    bin_radius: float  # radius beyond which alpha < skip threshold


def quaternions_to_rotations(quats: np.ndarray) -> np.ndarray:
    """(N,4) wxyz quaternions (any norm) -> (N,3,3) rotation matrices."""
    norms = np.linalg.norm(quats, axis=1, keepdims=True)
    q = quats / norms
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty(quats.shape[:1] + (3, 3), dtype=quats.dtype)
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def rotation_quaternion_backward(quats: np.ndarray, grad_r: np.ndarray) -> np.ndarray:
    """Adjoint of quaternions_to_rotations; grad_r (N,3,3) -> grad wrt raw quats (N,4)."""
    norms = np.linalg.norm(quats, axis=1, keepdims=True)
    q = quats / norms
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    zero = np.zeros_like(w)

    def m(rows):
        return 2.0 * np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    dr_dw = m([[zero, -z, y], [z, zero, -x], [-y, x, zero]])
    dr_dx = m([[zero, y, z], [y, -2 * x, -w], [z, w, -2 * x]])
    dr_dy = m([[-2 * y, x, w], [x, zero, z], [-w, z, -2 * y]])
    dr_dz = m([[-2 * z, -w, x], [w, -2 * z, y], [x, y, zero]])
    grad_unit = np.stack([
        np.einsum("nij,nij->n", grad_r, d) for d in (dr_dw, dr_dx, dr_dy, dr_dz)
    ], axis=1)
    # through normalization: d(q/|q|) = (I - qq^T)/|q|
    dot = np.einsum("ni,ni->n", grad_unit, q)
    return (grad_unit - q * dot[:, None]) / norms


def compute_cov3d(log_scale, rotation) -> np.ndarray:
    """World-space covariance R diag(exp(log_scale))^2 R^T for one Gaussian."""
    log_scale = np.asarray(log_scale, dtype=np.float64).reshape(1, 3)
    rotation = np.asarray(rotation, dtype=np.float64).reshape(1, 4)
    r = quaternions_to_rotations(rotation)[0]
    s2 = np.exp(2.0 * log_scale[0])
    return (r * s2) @ r.T


def perspective_jacobian(xcam: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """d(pixel)/d(camera point) rows for points (N,3) -> (N,2,3)."""
    x, y, z = xcam[:, 0], xcam[:, 1], xcam[:, 2]
    j = np.zeros(xcam.shape[:1] + (2, 3), dtype=xcam.dtype)
    j[:, 0, 0] = fx / z
    j[:, 0, 2] = -fx * x / (z * z)
    j[:, 1, 1] = fy / z
    j[:, 1, 2] = -fy * y / (z * z)
    return j


def project(gaussian: Gaussian3D, camera: Camera):
    """Project one Gaussian; returns a Splat2D, or None when culled."""
    camera.validate()
    w_mat = camera.rotation
    xcam = w_mat @ gaussian.position + camera.translation
    depth = float(xcam[2])
    if depth <= NEAR_PLANE:
        return None

    cov3d = compute_cov3d(gaussian.log_scale, gaussian.rotation)
    j = perspective_jacobian(xcam.reshape(1, 3), camera.fx, camera.fy)[0]
    cov2d = j @ w_mat @ cov3d @ w_mat.T @ j.T + COV2D_REGULARIZER * np.eye(2)

    mean2d = np.array([
        camera.fx * xcam[0] / depth + camera.cx,
        camera.fy * xcam[1] / depth + camera.cy,
    ])
    lam_max = max(np.linalg.eigvalsh(cov2d))
    radius = CULL_SIGMA * float(np.sqrt(lam_max))
    if (mean2d[0] + radius < 0 or mean2d[0] - radius > camera.width
            or mean2d[1] + radius < 0 or mean2d[1] - radius > camera.height):
        return None

    alpha_base = float(sigmoid(gaussian.opacity_logit))
    if alpha_base < ALPHA_SKIP:
        bin_sigma = 0.0
    else:
        bin_sigma = float(np.sqrt(2.0 * np.log(255.0 * min(alpha_base, ALPHA_CLAMP))))
    view_dir = gaussian.position - camera.center
    view_dir = view_dir / np.linalg.norm(view_dir)
    color, _ = evaluate_sh_colors(gaussian.sh_coeffs.reshape(1, -1), view_dir.reshape(1, 3))
    return Splat2D(
        mean2d=mean2d,
        cov2d=cov2d,
        depth=depth,
        color=color[0],
        alpha_base=alpha_base,
        radius=radius,
        bin_radius=bin_sigma * float(np.sqrt(lam_max)),
    )


class PreprocessCache:
    """Everything the analytic backward pass needs from the forward projection."""

    __slots__ = (
        "n_total", "idx", "xcam", "j", "m3", "r", "n_diag", "cov2d", "conic",
        "alpha_base", "dirs", "vlen", "pre", "colors", "means2d", "depths",
        "bin_radii", "w_mat", "fx", "fy", "quats", "log_scales", "dtype",
    )


def preprocess(cloud, camera: Camera, dtype=None):
    """Vectorized projection of a GaussianCloud; returns (cache or None).

    None means nothing survived culling. Arrays in the cache are compacted to
    visible splats; ``idx`` maps back into the cloud.
    """
    dtype = np.dtype(dtype or cloud.dtype)
    positions = cloud.positions.astype(dtype, copy=False)
    n = positions.shape[0]
    if n == 0:
        return None
    w_mat = camera.rotation.astype(dtype)
    t = camera.translation.astype(dtype)
    fx, fy = dtype.type(camera.fx), dtype.type(camera.fy)

    xcam = positions @ w_mat.T + t
    depth = xcam[:, 2]
    visible = depth > NEAR_PLANE

    alpha_base = sigmoid(cloud.opacity_logits.astype(dtype, copy=False))
    visible &= alpha_base >= ALPHA_SKIP
    if not np.any(visible):
        return None

    idx = np.flatnonzero(visible)
    xcam = xcam[idx]
    depth = depth[idx]
    alpha_base = alpha_base[idx]
    quats = cloud.rotations.astype(dtype, copy=False)[idx]
    log_scales = cloud.log_scales.astype(dtype, copy=False)[idx]

    r = quaternions_to_rotations(quats)
    n_diag = np.exp(2.0 * log_scales)
    sigma3 = np.einsum("nij,nj,nkj->nik", r, n_diag, r)
    m3 = np.einsum("ij,njk,lk->nil", w_mat, sigma3, w_mat)
    j = perspective_jacobian(xcam, fx, fy)
    cov2d = np.einsum("nai,nij,nbj->nab", j, m3, j)
    cov2d[:, 0, 0] += COV2D_REGULARIZER
    cov2d[:, 1, 1] += COV2D_REGULARIZER

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    ok = det > 0
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = CULL_SIGMA * np.sqrt(lam_max)

    means2d = np.stack([fx * xcam[:, 0] / depth + dtype.type(camera.cx),
                        fy * xcam[:, 1] / depth + dtype.type(camera.cy)], axis=1)
    ok &= means2d[:, 0] + radius >= 0
    ok &= means2d[:, 0] - radius <= camera.width
    ok &= means2d[:, 1] + radius >= 0
    ok &= means2d[:, 1] - radius <= camera.height
    if not np.any(ok):
        return None

    keep = np.flatnonzero(ok)
    idx = idx[keep]
    xcam, depth, alpha_base = xcam[keep], depth[keep], alpha_base[keep]
    quats, log_scales = quats[keep], log_scales[keep]
    r, n_diag, m3, j = r[keep], n_diag[keep], m3[keep], j[keep]
    cov2d, det, lam_max = cov2d[keep], det[keep], lam_max[keep]
    means2d = means2d[keep]

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    conic = np.stack([c / det, -b / det, a / det], axis=1)
    bin_sigma = np.sqrt(2.0 * np.log(255.0 * np.minimum(alpha_base, ALPHA_CLAMP)))
    bin_radii = bin_sigma * np.sqrt(lam_max)

    center = camera.center.astype(dtype)
    v = cloud.positions.astype(dtype, copy=False)[idx] - center
    vlen = np.linalg.norm(v, axis=1)
    dirs = v / vlen[:, None]
    colors, pre = evaluate_sh_colors(cloud.sh_coeffs.astype(dtype, copy=False)[idx], dirs)

    cache = PreprocessCache()
    cache.n_total = n
    cache.idx = idx
    cache.xcam = xcam
    cache.j = j
    cache.m3 = m3
    cache.r = r
    cache.n_diag = n_diag
    cache.cov2d = cov2d
    cache.conic = np.ascontiguousarray(conic)
    cache.alpha_base = np.ascontiguousarray(alpha_base)
    cache.dirs = dirs
    cache.vlen = vlen
    cache.pre = pre
    cache.colors = np.ascontiguousarray(colors)
    cache.means2d = np.ascontiguousarray(means2d)
    cache.depths = np.ascontiguousarray(depth)
    cache.bin_radii = bin_radii
    cache.w_mat = w_mat
    cache.fx = fx
    cache.fy = fy
    cache.quats = quats
    cache.log_scales = log_scales
    cache.dtype = dtype
    return cache


def preprocess_backward(cloud, cache: PreprocessCache, grad_means2d, grad_conic,
                        grad_colors, grad_alpha_base):
    """Chain per-splat screen-space gradients back to Gaussian parameters.

    grad_conic is in (a, b, c) storage form, i.e. the derivative wrt the
    single stored off-diagonal. Returns dense per-field gradient arrays.
    """
    dtype = cache.dtype
    n = cache.n_total
    idx = cache.idx
    g_pos = np.zeros((n, 3), dtype=dtype)
    g_log_scale = np.zeros((n, 3), dtype=dtype)
    g_rot = np.zeros((n, 4), dtype=dtype)
    g_opacity = np.zeros(n, dtype=dtype)
    g_sh = np.zeros((n, cloud.sh_coeffs.shape[1]), dtype=dtype)

    ab = cache.alpha_base
    g_opacity[idx] = grad_alpha_base * ab * (1.0 - ab)

    sh_rows = cloud.sh_coeffs.astype(dtype, copy=False)[idx]
    g_sh_rows, g_dirs = evaluate_sh_backward(sh_rows, cache.dirs, cache.pre, grad_colors)
    g_sh[idx] = g_sh_rows
    dot = np.einsum("ni,ni->n", g_dirs, cache.dirs)
    g_v = (g_dirs - cache.dirs * dot[:, None]) / cache.vlen[:, None]

    # conic (inverse covariance) -> covariance
    minv = np.empty_like(cache.cov2d)
    minv[:, 0, 0] = cache.conic[:, 0]
    minv[:, 0, 1] = minv[:, 1, 0] = cache.conic[:, 1]
    minv[:, 1, 1] = cache.conic[:, 2]
    g_minv = np.empty_like(minv)
    g_minv[:, 0, 0] = grad_conic[:, 0]
    g_minv[:, 0, 1] = g_minv[:, 1, 0] = 0.5 * grad_conic[:, 1]
    g_minv[:, 1, 1] = grad_conic[:, 2]
    g_cov = -np.einsum("nij,njk,nkl->nil", minv, g_minv, minv)

    # cov2d = J M3 J^T (+ const)
    g_m3 = np.einsum("nai,nab,nbj->nij", cache.j, g_cov, cache.j)
    g_j = 2.0 * np.einsum("nab,nbi,nij->naj", g_cov, cache.j, cache.m3)
    g_sigma3 = np.einsum("ji,njk,kl->nil", cache.w_mat, g_m3, cache.w_mat)

    # sigma3 = R diag(n) R^T
    g_r = 2.0 * np.einsum("nij,njk->nik", g_sigma3, cache.r) * cache.n_diag[:, None, :]
    g_n = np.einsum("nji,njk,nki->ni", cache.r, g_sigma3, cache.r)
    g_log_scale[idx] = g_n * 2.0 * cache.n_diag
    g_rot[idx] = rotation_quaternion_backward(cache.quats, g_r)

    # J entries depend on the camera-space point
    x, y, z = cache.xcam[:, 0], cache.xcam[:, 1], cache.xcam[:, 2]
    fx, fy = cache.fx, cache.fy
    inv_z2 = 1.0 / (z * z)
    inv_z3 = inv_z2 / z
    g_xcam = np.zeros_like(cache.xcam)
    g_xcam[:, 0] = g_j[:, 0, 2] * (-fx * inv_z2)
    g_xcam[:, 1] = g_j[:, 1, 2] * (-fy * inv_z2)
    g_xcam[:, 2] = (g_j[:, 0, 0] * (-fx * inv_z2) + g_j[:, 1, 1] * (-fy * inv_z2)
                    + g_j[:, 0, 2] * (2.0 * fx * x * inv_z3)
                    + g_j[:, 1, 2] * (2.0 * fy * y * inv_z3))

    # mean2d = (fx x/z + cx, fy y/z + cy)
    g_xcam[:, 0] += grad_means2d[:, 0] * fx / z
    g_xcam[:, 1] += grad_means2d[:, 1] * fy / z
    g_xcam[:, 2] += -grad_means2d[:, 0] * fx * x * inv_z2 - grad_means2d[:, 1] * fy * y * inv_z2

    g_pos[idx] = g_xcam @ cache.w_mat + g_v
    return g_pos, g_log_scale, g_rot, g_opacity, g_sh
