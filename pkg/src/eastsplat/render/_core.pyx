# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled compositing kernels; semantics identical to render._cpu."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

ctypedef fused real:
    float
    double

cdef double ALPHA_SKIP = 1.0 / 255.0
cdef double ALPHA_CLAMP = 0.99
cdef double T_EPS = 1e-4

BACKEND_NAME = "cython"


def forward(cnp.int32_t[::1] sorted_splats, cnp.int64_t[::1] tile_ranges,
            real[:, ::1] means2d, real[:, ::1] conics, real[:, ::1] colors,
            real[::1] alphas, int width, int height, int tile_size,
            real[::1] background):
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    image = np.zeros((height, width, 3), dtype=dtype)
    final_t = np.ones((height, width), dtype=dtype)
    last_rank = np.full((height, width), -1, dtype=np.int32)
    n_contrib = np.zeros((height, width), dtype=np.int32)
    cdef real[:, :, ::1] img = image
    cdef real[:, ::1] ft = final_t
    cdef cnp.int32_t[:, ::1] lr = last_rank
    cdef cnp.int32_t[:, ::1] nc = n_contrib

    cdef Py_ssize_t tiles_x = (width + tile_size - 1) // tile_size
    cdef Py_ssize_t tiles_y = (height + tile_size - 1) // tile_size
    cdef Py_ssize_t ty, tx, tid, i, j, k, s, y0, y1, x0, x1, start, end, last
    cdef cnp.int32_t count
    cdef real px, py, dx, dy, ca, cb, cc, power, alpha, testt, trans, w
    cdef real cr, cg, cbl

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            tid = ty * tiles_x + tx
            start = tile_ranges[tid]
            end = tile_ranges[tid + 1]
            y0 = ty * tile_size
            y1 = y0 + tile_size
            if y1 > height:
                y1 = height
            x0 = tx * tile_size
            x1 = x0 + tile_size
            if x1 > width:
                x1 = width
            for i in range(y0, y1):
                py = <real> i + <real> 0.5
                for j in range(x0, x1):
                    px = <real> j + <real> 0.5
                    trans = 1.0
                    cr = 0.0
                    cg = 0.0
                    cbl = 0.0
                    last = -1
                    count = 0
                    for k in range(start, end):
                        s = sorted_splats[k]
                        dx = px - means2d[s, 0]
                        dy = py - means2d[s, 1]
                        ca = conics[s, 0]
                        cb = conics[s, 1]
                        cc = conics[s, 2]
                        power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                        if power > 0.0:
                            continue
                        alpha = alphas[s] * exp(power)
                        if alpha > ALPHA_CLAMP:
                            alpha = <real> ALPHA_CLAMP
                        if alpha < ALPHA_SKIP:
                            continue
                        testt = trans * (1.0 - alpha)
                        if testt < T_EPS:
                            break
                        w = trans * alpha
                        cr = cr + w * colors[s, 0]
                        cg = cg + w * colors[s, 1]
                        cbl = cbl + w * colors[s, 2]
                        trans = testt
                        last = k
                        count = count + 1
                    img[i, j, 0] = cr + trans * background[0]
                    img[i, j, 1] = cg + trans * background[1]
                    img[i, j, 2] = cbl + trans * background[2]
                    ft[i, j] = trans
                    lr[i, j] = <cnp.int32_t> last
                    nc[i, j] = count
    return image, final_t, last_rank, n_contrib


def backward(cnp.int32_t[::1] sorted_splats, cnp.int64_t[::1] tile_ranges,
             real[:, ::1] means2d, real[:, ::1] conics, real[:, ::1] colors,
             real[::1] alphas, int width, int height, int tile_size,
             real[::1] background, real[:, ::1] final_t,
             cnp.int32_t[:, ::1] last_rank, real[:, :, ::1] grad_image):
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    cdef Py_ssize_t m = means2d.shape[0]
    g_means2d = np.zeros((m, 2), dtype=dtype)
    g_conics = np.zeros((m, 3), dtype=dtype)
    g_colors = np.zeros((m, 3), dtype=dtype)
    g_alphas = np.zeros(m, dtype=dtype)
    cdef real[:, ::1] gm = g_means2d
    cdef real[:, ::1] gc = g_conics
    cdef real[:, ::1] gcol = g_colors
    cdef real[::1] ga = g_alphas

    cdef Py_ssize_t tiles_x = (width + tile_size - 1) // tile_size
    cdef Py_ssize_t tiles_y = (height + tile_size - 1) // tile_size
    cdef Py_ssize_t ty, tx, tid, i, j, k, s, y0, y1, x0, x1, start, end, lastv
    cdef real px, py, dx, dy, ca, cb, cc, power, gval, alpha_raw, alpha
    cdef real one_minus, t_i, wta, d_alpha, d_power, trans
    cdef real b0, b1, b2, w0, w1, w2

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            tid = ty * tiles_x + tx
            start = tile_ranges[tid]
            end = tile_ranges[tid + 1]
            if end <= start:
                continue
            y0 = ty * tile_size
            y1 = y0 + tile_size
            if y1 > height:
                y1 = height
            x0 = tx * tile_size
            x1 = x0 + tile_size
            if x1 > width:
                x1 = width
            for i in range(y0, y1):
                py = <real> i + <real> 0.5
                for j in range(x0, x1):
                    lastv = last_rank[i, j]
                    if lastv < 0:
                        continue
                    px = <real> j + <real> 0.5
                    trans = final_t[i, j]
                    b0 = trans * background[0]
                    b1 = trans * background[1]
                    b2 = trans * background[2]
                    w0 = grad_image[i, j, 0]
                    w1 = grad_image[i, j, 1]
                    w2 = grad_image[i, j, 2]
                    for k in range(lastv, start - 1, -1):
                        s = sorted_splats[k]
                        dx = px - means2d[s, 0]
                        dy = py - means2d[s, 1]
                        ca = conics[s, 0]
                        cb = conics[s, 1]
                        cc = conics[s, 2]
                        power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                        if power > 0.0:
                            continue
                        gval = exp(power)
                        alpha_raw = alphas[s] * gval
                        alpha = alpha_raw
                        if alpha > ALPHA_CLAMP:
                            alpha = <real> ALPHA_CLAMP
                        if alpha < ALPHA_SKIP:
                            continue
                        one_minus = 1.0 - alpha
                        t_i = trans / one_minus
                        wta = t_i * alpha
                        gcol[s, 0] += wta * w0
                        gcol[s, 1] += wta * w1
                        gcol[s, 2] += wta * w2
                        d_alpha = (w0 * (t_i * colors[s, 0] - b0 / one_minus)
                                   + w1 * (t_i * colors[s, 1] - b1 / one_minus)
                                   + w2 * (t_i * colors[s, 2] - b2 / one_minus))
                        if alpha_raw <= ALPHA_CLAMP:
                            ga[s] += d_alpha * gval
                            d_power = d_alpha * alpha
                            gc[s, 0] += d_power * (-0.5 * dx * dx)
                            gc[s, 1] += d_power * (-dx * dy)
                            gc[s, 2] += d_power * (-0.5 * dy * dy)
                            gm[s, 0] += d_power * (ca * dx + cb * dy)
                            gm[s, 1] += d_power * (cb * dx + cc * dy)
                        b0 = b0 + wta * colors[s, 0]
                        b1 = b1 + wta * colors[s, 1]
                        b2 = b2 + wta * colors[s, 2]
                        trans = t_i
                    # earlier splats in the range were either skipped by the
                    # alpha threshold or never reached; no gradient flows.
    return g_means2d, g_conics, g_colors, g_alphas
