"""Pure-numpy implementations of the hot numeric kernels.

These are the fallback twins of the numba kernels; the public ops layer
picks one set via the ADVARENA_BACKEND environment flag.  All arrays are
float64 and C-contiguous.  Shape validation happens in the ops layer, not
here.
"""

from __future__ import annotations

import numpy as np


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, stride: int, pad: int) -> np.ndarray:
    c_in, h, w = x.shape
    c_out, _, k, _ = kernels.shape
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(c_in, k, k, h_out, w_out),
        strides=(sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    # (O,C,k,k) x (C,k,k,H',W') contracted over C,k,k
    return np.tensordot(kernels, windows, axes=([1, 2, 3], [0, 1, 2]))


def conv2d_backward_input(kernels: np.ndarray, upstream: np.ndarray,
                          c_in: int, h: int, w: int, stride: int, pad: int) -> np.ndarray:
    c_out, _, k, _ = kernels.shape
    _, h_out, w_out = upstream.shape
    gpad = np.zeros((c_in, h + 2 * pad, w + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            # (O,C) . (O,H',W') -> (C,H',W') scattered onto the window anchors
            contrib = np.tensordot(kernels[:, :, ki, kj], upstream, axes=([0], [0]))
            gpad[:, ki:ki + stride * h_out:stride, kj:kj + stride * w_out:stride] += contrib
    if pad:
        return np.ascontiguousarray(gpad[:, pad:pad + h, pad:pad + w])
    return gpad


def conv2d_backward_kernels(x: np.ndarray, upstream: np.ndarray,
                            k: int, stride: int, pad: int) -> np.ndarray:
    c_in, h, w = x.shape
    c_out, h_out, w_out = upstream.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(c_in, k, k, h_out, w_out),
        strides=(sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    # (O,H',W') x (C,k,k,H',W') contracted over H',W'
    return np.tensordot(upstream, windows, axes=([1, 2], [3, 4]))


def _axis_coords(n_out: int, n_in: int):
    # Corner-aligned sample positions; (i*(n_in-1))/(n_out-1) keeps the
    # endpoints exact in floating point.
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = (np.arange(n_out) * float(n_in - 1)) / float(n_out - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), max(n_in - 2, 0))
    frac = np.clip(pos - lo, 0.0, 1.0)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, frac


def resize_forward(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    c, h, w = x.shape
    ylo, yhi, fy = _axis_coords(out_h, h)
    xlo, xhi, fx = _axis_coords(out_w, w)
    fy = fy[:, None]
    fx = fx[None, :]
    tl = x[:, ylo][:, :, xlo]
    tr = x[:, ylo][:, :, xhi]
    bl = x[:, yhi][:, :, xlo]
    br = x[:, yhi][:, :, xhi]
    top = tl * (1.0 - fx) + tr * fx
    bot = bl * (1.0 - fx) + br * fx
    return top * (1.0 - fy) + bot * fy


def resize_backward(upstream: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    c, out_h, out_w = upstream.shape
    ylo, yhi, fy = _axis_coords(out_h, in_h)
    xlo, xhi, fx = _axis_coords(out_w, in_w)
    grad = np.zeros((c, in_h, in_w))
    wy = np.stack([1.0 - fy, fy])          # (2, out_h)
    wx = np.stack([1.0 - fx, fx])          # (2, out_w)
    ys = np.stack([ylo, yhi])
    xs = np.stack([xlo, xhi])
    for a in range(2):
        for b in range(2):
            wgt = upstream * (wy[a][None, :, None] * wx[b][None, None, :])
            np.add.at(grad, (slice(None), ys[a][:, None], xs[b][None, :]), wgt)
    return grad


def _warp_sources(theta: np.ndarray, h: int, w: int):
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    den = theta[6] * gx + theta[7] * gy + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (theta[0] * gx + theta[1] * gy + theta[2]) / den
        sy = (theta[3] * gx + theta[4] * gy + theta[5]) / den
    return sx, sy


def warp_forward(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    sx, sy = _warp_sources(theta, h, w)
    ok = np.isfinite(sx) & np.isfinite(sy)
    sx = np.where(ok, sx, -2.0)
    sy = np.where(ok, sy, -2.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros((c, h, w))
    for dy in range(2):
        for dx in range(2):
            ix = x0 + dx
            iy = y0 + dy
            valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
            wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            ixc = np.clip(ix, 0, w - 1)
            iyc = np.clip(iy, 0, h - 1)
            out += np.where(valid, wgt, 0.0)[None] * x[:, iyc, ixc]
    return out


def warp_backward(upstream: np.ndarray, theta: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    c, h, w = upstream.shape
    sx, sy = _warp_sources(theta, h, w)
    ok = np.isfinite(sx) & np.isfinite(sy)
    sx = np.where(ok, sx, -2.0)
    sy = np.where(ok, sy, -2.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    grad = np.zeros((c, in_h, in_w))
    for dy in range(2):
        for dx in range(2):
            ix = x0 + dx
            iy = y0 + dy
            valid = (ix >= 0) & (ix < in_w) & (iy >= 0) & (iy < in_h)
            wgt = np.where(valid, (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy), 0.0)
            ixc = np.clip(ix, 0, in_w - 1)
            iyc = np.clip(iy, 0, in_h - 1)
            np.add.at(grad, (slice(None), iyc, ixc), upstream * wgt[None])
    return grad


def median_filter_2x2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    # Replicate the last row/column so every 2x2 window stays in range.
    xp = np.pad(x, ((0, 0), (0, 1), (0, 1)), mode="edge")
    a = xp[:, :h, :w]
    b = xp[:, :h, 1:w + 1]
    d = xp[:, 1:h + 1, :w]
    e = xp[:, 1:h + 1, 1:w + 1]
    stack = np.sort(np.stack([a, b, d, e]), axis=0)
    # Median of four values: mean of the two central order statistics.
    # Averaging the sorted middles (not sum-min-max) keeps constant
    # windows exact and the result inside [window min, window max].
    return (stack[1] + stack[2]) / 2.0
