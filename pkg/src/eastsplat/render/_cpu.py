"""Pure-NumPy compositing kernels.

Fallback for environments without the compiled extension; exact same
compositing semantics as render._core, vectorized across each tile's pixels.
"""

from __future__ import annotations

import numpy as np

ALPHA_SKIP = 1.0 / 255.0
ALPHA_CLAMP = 0.99
TRANSMITTANCE_EPS = 1e-4

BACKEND_NAME = "python"


def _tile_pixel_grid(tx, ty, tile_size, width, height, dtype):
    x0, y0 = tx * tile_size, ty * tile_size
    x1, y1 = min(x0 + tile_size, width), min(y0 + tile_size, height)
    cols = np.arange(x0, x1)
    rows = np.arange(y0, y1)
    px = (cols[None, :] + 0.5).astype(dtype).repeat(y1 - y0, axis=0).ravel()
    py = (rows[:, None] + 0.5).astype(dtype).repeat(x1 - x0, axis=1).ravel()
    return rows, cols, px, py


def forward(sorted_splats, tile_ranges, means2d, conics, colors, alphas,
            width, height, tile_size, background):
    dtype = means2d.dtype
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    image = np.zeros((height, width, 3), dtype=dtype)
    final_t = np.ones((height, width), dtype=dtype)
    last_rank = np.full((height, width), -1, dtype=np.int32)
    n_contrib = np.zeros((height, width), dtype=np.int32)

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            tid = ty * tiles_x + tx
            start, end = tile_ranges[tid], tile_ranges[tid + 1]
            rows, cols, px, py = _tile_pixel_grid(tx, ty, tile_size, width, height, dtype)
            npx = px.shape[0]
            accum = np.zeros((npx, 3), dtype=dtype)
            trans = np.ones(npx, dtype=dtype)
            done = np.zeros(npx, dtype=bool)
            last = np.full(npx, -1, dtype=np.int32)
            count = np.zeros(npx, dtype=np.int32)
            for k in range(start, end):
                s = sorted_splats[k]
                dx = px - means2d[s, 0]
                dy = py - means2d[s, 1]
                ca, cb, cc = conics[s]
                power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                alpha = np.minimum(alphas[s] * np.exp(power), ALPHA_CLAMP)
                elig = (power <= 0.0) & (alpha >= ALPHA_SKIP) & ~done
                if not elig.any():
                    continue
                test_t = trans * (1.0 - alpha)
                crossing = elig & (test_t < TRANSMITTANCE_EPS)
                done |= crossing
                act = elig & ~crossing
                if act.any():
                    accum[act] += (trans[act] * alpha[act])[:, None] * colors[s]
                    trans[act] = test_t[act]
                    last[act] = k
                    count[act] += 1
                if done.all():
                    break
            accum += trans[:, None] * background[None, :]
            shape = (rows.shape[0], cols.shape[0])
            image[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1] = accum.reshape(shape + (3,))
            final_t[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1] = trans.reshape(shape)
            last_rank[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1] = last.reshape(shape)
            n_contrib[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1] = count.reshape(shape)
    return image, final_t, last_rank, n_contrib


def backward(sorted_splats, tile_ranges, means2d, conics, colors, alphas,
             width, height, tile_size, background, final_t, last_rank, grad_image):
    dtype = means2d.dtype
    m = means2d.shape[0]
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    g_means2d = np.zeros((m, 2), dtype=dtype)
    g_conics = np.zeros((m, 3), dtype=dtype)
    g_colors = np.zeros((m, 3), dtype=dtype)
    g_alphas = np.zeros(m, dtype=dtype)

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            tid = ty * tiles_x + tx
            start, end = tile_ranges[tid], tile_ranges[tid + 1]
            if end <= start:
                continue
            rows, cols, px, py = _tile_pixel_grid(tx, ty, tile_size, width, height, dtype)
            sl_r = slice(rows[0], rows[-1] + 1)
            sl_c = slice(cols[0], cols[-1] + 1)
            trans = final_t[sl_r, sl_c].ravel().copy()
            lastv = last_rank[sl_r, sl_c].ravel()
            weights = grad_image[sl_r, sl_c].reshape(-1, 3)
            behind = trans[:, None] * background[None, :]
            for k in range(end - 1, start - 1, -1):
                s = sorted_splats[k]
                part_possible = lastv >= k
                if not part_possible.any():
                    continue
                dx = px - means2d[s, 0]
                dy = py - means2d[s, 1]
                ca, cb, cc = conics[s]
                power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                g_val = np.exp(power)
                alpha_raw = alphas[s] * g_val
                alpha = np.minimum(alpha_raw, ALPHA_CLAMP)
                part = part_possible & (power <= 0.0) & (alpha >= ALPHA_SKIP)
                if not part.any():
                    continue
                one_minus = 1.0 - alpha
                t_i = np.where(part, trans / one_minus, trans)
                w_ta = np.where(part, t_i * alpha, 0.0)
                g_colors[s] += w_ta @ weights
                d_alpha = np.where(
                    part,
                    np.einsum("pc,pc->p", weights,
                              t_i[:, None] * colors[s][None, :] - behind / one_minus[:, None]),
                    0.0,
                )
                free = part & (alpha_raw <= ALPHA_CLAMP)
                d_alpha_free = np.where(free, d_alpha, 0.0)
                g_alphas[s] += np.sum(d_alpha_free * g_val)
                d_power = d_alpha_free * alpha
                g_conics[s, 0] += np.sum(d_power * (-0.5 * dx * dx))
                g_conics[s, 1] += np.sum(d_power * (-dx * dy))
                g_conics[s, 2] += np.sum(d_power * (-0.5 * dy * dy))
                g_means2d[s, 0] += np.sum(d_power * (ca * dx + cb * dy))
                g_means2d[s, 1] += np.sum(d_power * (cb * dx + cc * dy))
                behind[part] += w_ta[part, None] * colors[s][None, :]
                trans[part] = t_i[part]
    return g_means2d, g_conics, g_colors, g_alphas
