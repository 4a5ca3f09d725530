"""Real spherical harmonics, degrees 0-3, with analytic gradients.

Coefficient layout per Gaussian: (3 channels, 16 basis values), flattened
channel-major to 48 scalars. Colors are basis . coeffs + 0.5, clamped at 0.
"""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)

BASIS_COUNT = 16


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Basis values for unit directions; dirs (N,3) -> (N,16)."""
    dirs = np.asarray(dirs)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    b = np.empty((dirs.shape[0], BASIS_COUNT), dtype=dirs.dtype)
    b[:, 0] = C0
    b[:, 1] = -C1 * y
    b[:, 2] = C1 * z
    b[:, 3] = -C1 * x
    b[:, 4] = C2[0] * xy
    b[:, 5] = C2[1] * yz
    b[:, 6] = C2[2] * (2.0 * zz - xx - yy)
    b[:, 7] = C2[3] * xz
    b[:, 8] = C2[4] * (xx - yy)
    b[:, 9] = C3[0] * y * (3.0 * xx - yy)
    b[:, 10] = C3[1] * xy * z
    b[:, 11] = C3[2] * y * (4.0 * zz - xx - yy)
    b[:, 12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    b[:, 13] = C3[4] * x * (4.0 * zz - xx - yy)
    b[:, 14] = C3[5] * z * (xx - yy)
    b[:, 15] = C3[6] * x * (xx - 3.0 * yy)
    return b


def sh_basis_grad(dirs: np.ndarray) -> np.ndarray:
    """d(basis_k)/d(dir) for unit directions; dirs (N,3) -> (N,16,3)."""
    dirs = np.asarray(dirs)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    n = dirs.shape[0]
    zero = np.zeros(n, dtype=dirs.dtype)
    g = np.zeros((n, BASIS_COUNT, 3), dtype=dirs.dtype)
    g[:, 1] = np.stack([zero, np.full(n, -C1, dtype=dirs.dtype), zero], axis=1)
    g[:, 2] = np.stack([zero, zero, np.full(n, C1, dtype=dirs.dtype)], axis=1)
    g[:, 3] = np.stack([np.full(n, -C1, dtype=dirs.dtype), zero, zero], axis=1)
    g[:, 4] = C2[0] * np.stack([y, x, zero], axis=1)
    g[:, 5] = C2[1] * np.stack([zero, z, y], axis=1)
    g[:, 6] = C2[2] * np.stack([-2.0 * x, -2.0 * y, 4.0 * z], axis=1)
    g[:, 7] = C2[3] * np.stack([z, zero, x], axis=1)
    g[:, 8] = C2[4] * np.stack([2.0 * x, -2.0 * y, zero], axis=1)
    g[:, 9] = C3[0] * np.stack([6.0 * x * y, 3.0 * xx - 3.0 * yy, zero], axis=1)
    g[:, 10] = C3[1] * np.stack([y * z, x * z, x * y], axis=1)
    g[:, 11] = C3[2] * np.stack([-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z], axis=1)
    g[:, 12] = C3[3] * np.stack([-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy], axis=1)
    g[:, 13] = C3[4] * np.stack([4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z], axis=1)
    g[:, 14] = C3[5] * np.stack([2.0 * x * z, -2.0 * y * z, xx - yy], axis=1)
    g[:, 15] = C3[6] * np.stack([3.0 * xx - 3.0 * yy, -6.0 * x * y, zero], axis=1)
    return g


def evaluate_sh_colors(sh_coeffs: np.ndarray, dirs: np.ndarray):
    """Colors for coefficient rows (N,48) and unit directions (N,3).

    Returns (colors (N,3), pre_clamp (N,3)); pre_clamp feeds the clamp mask
    in the backward pass.
    """
    n = sh_coeffs.shape[0]
    basis = sh_basis(dirs)
    coeffs = sh_coeffs.reshape(n, 3, BASIS_COUNT)
    pre = np.einsum("nk,nck->nc", basis, coeffs) + 0.5
    return np.maximum(pre, 0.0), pre


def evaluate_sh(sh_coeffs, view_dir) -> np.ndarray:
    """Single-Gaussian convenience wrapper; view_dir must be unit within 1e-4."""
    view_dir = np.asarray(view_dir, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(view_dir) - 1.0) > 1e-4:
        raise ValueError("view_dir must be unit length (within 1e-4)")
    colors, _ = evaluate_sh_colors(
        np.asarray(sh_coeffs, dtype=np.float64).reshape(1, -1), view_dir.reshape(1, 3))
    return colors[0]


def evaluate_sh_backward(sh_coeffs, dirs, pre, grad_colors):
    """Gradients of sum(grad_colors * colors) wrt coefficients and directions.

    Returns (grad_coeffs (N,48), grad_dirs (N,3)).
    """
    n = sh_coeffs.shape[0]
    basis = sh_basis(dirs)
    mask = (pre > 0.0).astype(sh_coeffs.dtype)  # (N,3)
    wg = grad_colors * mask
    grad_coeffs = np.einsum("nc,nk->nck", wg, basis).reshape(n, 3 * BASIS_COUNT)
    coeffs = sh_coeffs.reshape(n, 3, BASIS_COUNT)
    bg = sh_basis_grad(dirs)  # (N,16,3)
    grad_dirs = np.einsum("nc,nck,nkd->nd", wg, coeffs, bg)
    return grad_coeffs, grad_dirs
