"""Contrast-limited tile equalization."""

import numpy as np
import pytest

from befd.clahe import clahe, tile_mappings
from befd.pnm import from_array


def _img(arr):
    return from_array(np.asarray(arr, dtype=np.uint8))


def test_rejects_rgb_and_tiny_grids():
    with pytest.raises(ValueError):
        clahe(_img(np.zeros((16, 16, 3))))
    with pytest.raises(ValueError):
        clahe(_img(np.zeros((4, 16))), tiles=(8, 8))


def test_output_type_and_range():
    rng = np.random.default_rng(0)
    img = _img(rng.integers(0, 256, (64, 48), dtype=np.uint8))
    out = clahe(img, tiles=(4, 4), clip_limit=2.0)
    assert out.pixels.dtype == np.uint8
    assert out.pixels.shape == (64, 48)


def test_constant_image_stays_constant():
    out = clahe(_img(np.full((32, 32), 91)), tiles=(4, 4))
    assert np.all(out.pixels == out.pixels[0, 0])


def test_tile_luts_monotone():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    luts = tile_mappings(_img(img), tiles=(8, 8), clip_limit=2.0)
    assert luts.shape == (8, 8, 256)
    assert np.all(np.diff(luts.astype(np.int32), axis=-1) >= 0)
    assert np.all(luts <= 255)


def test_single_tile_matches_manual_equalization():
    """One tile, huge clip limit: plain histogram equalization."""
    rng = np.random.default_rng(2)
    img = rng.integers(0, 200, (16, 16), dtype=np.uint8)
    out = clahe(_img(img), tiles=(1, 1), clip_limit=1e9).pixels
    hist = np.bincount(img.reshape(-1), minlength=256)
    cdf = np.cumsum(hist)
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    denom = img.size - cdf_min
    lut = np.floor(255.0 * (cdf - cdf_min) / denom + 0.5).clip(0, 255).astype(np.uint8)
    assert np.array_equal(out, lut[img])


def test_clipping_flattens_peaks():
    """A histogram spike should be boosted less with a small clip limit."""
    img = np.full((64, 64), 100, dtype=np.uint8)
    img[:8, :] = np.linspace(0, 255, 8 * 64, dtype=np.uint8).reshape(8, 64)
    clipped = clahe(_img(img), tiles=(2, 2), clip_limit=2.0).pixels
    unclipped = clahe(_img(img), tiles=(2, 2), clip_limit=1e9).pixels
    spread_c = np.ptp(clipped[img == 100].astype(np.int32))
    spread_u = np.ptp(unclipped[img == 100].astype(np.int32))
    assert spread_c <= spread_u


def test_deterministic():
    rng = np.random.default_rng(3)
    img = _img(rng.integers(0, 256, (40, 56), dtype=np.uint8))
    a = clahe(img).pixels
    b = clahe(img).pixels
    assert np.array_equal(a, b)


def test_backend_parity():
    from befd import backend
    rng = np.random.default_rng(4)
    img = _img(rng.integers(0, 256, (48, 40), dtype=np.uint8))
    with backend.use_backend("numpy"):
        a = clahe(img).pixels
    with backend.use_backend("numba"):
        b = clahe(img).pixels
    assert np.array_equal(a, b)
