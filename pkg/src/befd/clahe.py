"""Contrast-limited adaptive histogram equalization on 8-bit grayscale.

Per-tile clipped histograms become 256-entry lookup tables; each output pixel
bilinearly blends the four surrounding tile tables (edge tiles replicate).
Excess mass above the clip limit is redistributed in a single pass: the even
share goes to every bin, the remainder one count each to the lowest bins.
"""

from __future__ import annotations

import math

import numpy as np

from . import backend
from .pnm import ImageU8, from_array


def _tile_bounds(extent: int, tiles: int) -> np.ndarray:
    return np.array([(i * extent) // tiles for i in range(tiles + 1)], dtype=np.int64)


def _tile_lut(hist: np.ndarray, tile_px: int, clip_limit: float) -> np.ndarray:
    h = hist.astype(np.int64).copy()
    if math.isfinite(clip_limit):
        limit = max(1, int(clip_limit * tile_px / 256.0))
        if limit < tile_px:
            excess = int((h - limit).clip(min=0).sum())
            np.minimum(h, limit, out=h)
            h += excess // 256
            rem = excess % 256
            if rem:
                h[:rem] += 1
    cdf = np.cumsum(h)
    occupied = np.nonzero(h)[0]
    cdf_min = int(cdf[occupied[0]]) if occupied.size else 0
    denom = tile_px - cdf_min
    if denom <= 0:
        return np.arange(256, dtype=np.uint8)
    lut = np.floor(255.0 * (cdf - cdf_min) / denom + 0.5)
    return lut.clip(0, 255).astype(np.uint8)


def _blend_coords(extent: int, bounds: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel pair of bracketing tile indices plus the mix fraction."""
    centers = (bounds[:-1] + bounds[1:] - 1) / 2.0
    pos = np.arange(extent, dtype=np.float64)
    hi = np.searchsorted(centers, pos, side="right")
    i1 = np.clip(hi, 0, len(centers) - 1)
    i0 = np.clip(hi - 1, 0, len(centers) - 1)
    span = centers[i1] - centers[i0]
    frac = np.where(span > 0, (pos - centers[i0]) / np.where(span > 0, span, 1.0), 0.0)
    return i0.astype(np.int64), i1.astype(np.int64), np.clip(frac, 0.0, 1.0)


def clahe(image: ImageU8, tiles: tuple[int, int] = (8, 8), clip_limit: float = 2.0) -> ImageU8:
    """Equalize a single-channel image over a tiles=(tx, ty) grid."""
    if image.channels != 1:
        raise ValueError(f"clahe expects a single-channel image, got {image.channels} channels")
    tx, ty = tiles
    if tx < 1 or ty < 1:
        raise ValueError(f"tile grid must be positive, got {tiles}")
    h, w = image.height, image.width
    if h < ty or w < tx:
        raise ValueError(f"image {w}x{h} is smaller than the {tx}x{ty} tile grid")

    ybounds = _tile_bounds(h, ty)
    xbounds = _tile_bounds(w, tx)
    luts = np.empty((ty, tx, 256), dtype=np.uint8)
    px = image.pixels
    for i in range(ty):
        for j in range(tx):
            tile = px[ybounds[i]:ybounds[i + 1], xbounds[j]:xbounds[j + 1]]
            hist = np.bincount(tile.reshape(-1), minlength=256)
            luts[i, j] = _tile_lut(hist, tile.size, clip_limit)

    r0, r1, wy = _blend_coords(h, ybounds)
    c0, c1, wx = _blend_coords(w, xbounds)
    out = backend.kernels().clahe_blend(px, luts, r0, r1, wy, c0, c1, wx)
    return from_array(out)


def tile_mappings(image: ImageU8, tiles: tuple[int, int] = (8, 8),
                  clip_limit: float = 2.0) -> np.ndarray:
    """The per-tile lookup tables, shaped (ty, tx, 256); exposed for tests."""
    if image.channels != 1:
        raise ValueError(f"clahe expects a single-channel image, got {image.channels} channels")
    tx, ty = tiles
    h, w = image.height, image.width
    ybounds = _tile_bounds(h, ty)
    xbounds = _tile_bounds(w, tx)
    luts = np.empty((ty, tx, 256), dtype=np.uint8)
    for i in range(ty):
        for j in range(tx):
            tile = image.pixels[ybounds[i]:ybounds[i + 1], xbounds[j]:xbounds[j + 1]]
            hist = np.bincount(tile.reshape(-1), minlength=256)
            luts[i, j] = _tile_lut(hist, tile.size, clip_limit)
    return luts
