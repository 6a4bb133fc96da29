"""Pure-numpy kernel implementations (the fallback path).

Every function here has a numba twin in ``befd._kernels_nb`` with the same
name and signature. Convolutions go through BLAS via tensordot/einsum on
strided window views; the rest is vectorized indexing.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


# ---------------------------------------------------------------------------
# convolution (cross-correlation, stride 1)

def conv2d_fwd(x: np.ndarray, w: np.ndarray, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (w.shape[2], w.shape[3]), axis=(2, 3))
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_bwd_weight(dy: np.ndarray, x: np.ndarray, pad: int, kh: int, kw: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    # dw[co,ci,p,q] = sum_{n,i,j} dy[n,co,i,j] * x_pad[n,ci,i+p,j+q]
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))
    return np.ascontiguousarray(dw)


# ---------------------------------------------------------------------------
# transposed convolution, kernel 2x2, stride 2 (non-overlapping scatter)

def convt2d_fwd(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    n, _, h, ww = x.shape
    co = w.shape[1]
    out = np.tensordot(x, w, axes=([1], [0]))  # (n, h, w, co, 2, 2)
    out = out.transpose(0, 3, 1, 4, 2, 5)
    return np.ascontiguousarray(out.reshape(n, co, 2 * h, 2 * ww))


def convt2d_bwd_input(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    n, co, h2, w2 = dy.shape
    dyv = dy.reshape(n, co, h2 // 2, 2, w2 // 2, 2)
    dx = np.einsum("nohkwl,cokl->nchw", dyv, w)
    return np.ascontiguousarray(dx)


def convt2d_bwd_weight(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    n, co, h2, w2 = dy.shape
    dyv = dy.reshape(n, co, h2 // 2, 2, w2 // 2, 2)
    dw = np.einsum("nchw,nohkwl->cokl", x, dyv)
    return np.ascontiguousarray(dw)


# ---------------------------------------------------------------------------
# 2x2/stride-2 max pooling

def maxpool2d_fwd(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = np.ascontiguousarray(win).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)  # first max in row-major window order
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool2d_bwd(dy: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, c, ho, wo = dy.shape
    dwin = np.zeros((n, c, ho, wo, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dx = dwin.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx).reshape(n, c, ho * 2, wo * 2)


# ---------------------------------------------------------------------------
# bilinear resize, half-pixel centers, edge clamp

def _source_coords(out_len: int, in_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = np.arange(out_len, dtype=np.float64)
    s = np.clip((d + 0.5) * (in_len / out_len) - 0.5, 0.0, in_len - 1.0)
    i0 = np.floor(s).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_len - 1)
    return i0, i1, s - i0


def bilinear_resize(x: np.ndarray, th: int, tw: int) -> np.ndarray:
    h, w = x.shape[2], x.shape[3]
    r0, r1, wy = _source_coords(th, h)
    c0, c1, wx = _source_coords(tw, w)
    wy = wy.astype(x.dtype).reshape(1, 1, th, 1)
    wx = wx.astype(x.dtype).reshape(1, 1, 1, tw)
    rows = x[:, :, r0, :] * (1 - wy) + x[:, :, r1, :] * wy
    out = rows[:, :, :, c0] * (1 - wx) + rows[:, :, :, c1] * wx
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# Sobel gradients with edge replication.
#
# Each gradient is a difference of two [1, 2, 1]-weighted line sums. Both
# line sums follow the same add order, so constant regions cancel exactly.

def _trisum(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (a + 2.0 * b) + c


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = img.shape
    xp = np.pad(img, 1, mode="edge")
    col = [xp[0:h, :], xp[1:h + 1, :], xp[2:h + 2, :]]
    right = _trisum(col[0][:, 2:], col[1][:, 2:], col[2][:, 2:])
    left = _trisum(col[0][:, :w], col[1][:, :w], col[2][:, :w])
    gx = right - left
    row = [xp[:, 0:w], xp[:, 1:w + 1], xp[:, 2:w + 2]]
    bottom = _trisum(row[0][2:, :], row[1][2:, :], row[2][2:, :])
    top = _trisum(row[0][:h, :], row[1][:h, :], row[2][:h, :])
    gy = bottom - top
    return gx, gy


# ---------------------------------------------------------------------------
# CLAHE tile-mapping blend
#
# r0/r1/wy per output row and c0/c1/wx per output column are precomputed by
# the caller (befd.clahe); this kernel only gathers and mixes the four
# surrounding tile lookup tables.

def clahe_blend(img: np.ndarray, luts: np.ndarray,
                r0: np.ndarray, r1: np.ndarray, wy: np.ndarray,
                c0: np.ndarray, c1: np.ndarray, wx: np.ndarray) -> np.ndarray:
    v = img
    a00 = luts[r0[:, None], c0[None, :], v].astype(np.float64)
    a01 = luts[r0[:, None], c1[None, :], v].astype(np.float64)
    a10 = luts[r1[:, None], c0[None, :], v].astype(np.float64)
    a11 = luts[r1[:, None], c1[None, :], v].astype(np.float64)
    wy = wy[:, None]
    wx = wx[None, :]
    mixed = (a00 * (1 - wy) * (1 - wx) + a01 * (1 - wy) * wx
             + a10 * wy * (1 - wx) + a11 * wy * wx)
    return np.clip(np.floor(mixed + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# exact squared Euclidean distance transform (distance to nearest zero)
#
# Two passes: per-column nearest-background counts, then per-row lower
# envelope of parabolas. The row pass loops in Python; acceptable as the
# fallback path.

def edt_sq(fg: np.ndarray) -> np.ndarray:
    h, w = fg.shape
    big = h + w
    g = np.where(fg, np.int64(big), np.int64(0))
    for i in range(1, h):
        np.minimum(g[i], g[i - 1] + 1, out=g[i])
    for i in range(h - 2, -1, -1):
        np.minimum(g[i], g[i + 1] + 1, out=g[i])

    f = (g.astype(np.float64)) ** 2
    out = np.empty((h, w), dtype=np.float64)
    v = np.empty(w, dtype=np.int64)
    z = np.empty(w + 1, dtype=np.float64)
    for i in range(h):
        fi = f[i]
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, w):
            s = ((fi[q] + q * q) - (fi[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
            while s <= z[k]:
                k -= 1
                s = ((fi[q] + q * q) - (fi[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            dq = q - v[k]
            out[i, q] = dq * dq + fi[v[k]]
    return out
