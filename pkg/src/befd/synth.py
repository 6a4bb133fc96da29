"""Synthetic vessel-tree dataset generator.

Draws curvature-bounded random-walk polylines with tapering stroke widths over
a smooth background, so every dataset contains both thick trunks and the
width-1/2 tips the thin-structure evaluation needs.  Fully deterministic per
seed: image i draws from ``default_rng([seed, i])``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from . import backend
from .data import DatasetManifest, read_manifest
from .pnm import from_array, write_pnm

# Generator constants, frozen after calibrating the foreground fraction of
# 64x64 images into [2%, 25%] (see tests).
TREES_MIN, TREES_MAX = 3, 8
LENGTH_RANGE = (0.45, 0.85)  # fraction of min(H, W)
WIDTH_CHOICES = np.arange(1, 7)
WIDTH_WEIGHTS = np.array([0.30, 0.26, 0.18, 0.12, 0.08, 0.06])
CURVATURE_SD = 0.16  # radians per unit step
BRANCH_PROB = 0.6
CONTRAST_RANGE = (0.15, 0.5)
NOISE_SD = 0.05
BACKGROUND_RANGE = (0.5, 0.8)
FG_FRACTION_RANGE = (0.02, 0.25)


def _stamp(mask: np.ndarray, y: float, x: float, radius: float) -> None:
    h, w = mask.shape
    lo_y = max(0, int(np.floor(y - radius)))
    hi_y = min(h - 1, int(np.ceil(y + radius)))
    lo_x = max(0, int(np.floor(x - radius)))
    hi_x = min(w - 1, int(np.ceil(x + radius)))
    if lo_y > hi_y or lo_x > hi_x:
        return
    yy = np.arange(lo_y, hi_y + 1, dtype=np.float64)[:, None]
    xx = np.arange(lo_x, hi_x + 1, dtype=np.float64)[None, :]
    mask[lo_y:hi_y + 1, lo_x:hi_x + 1] |= ((yy - y) ** 2 + (xx - x) ** 2) <= radius * radius


def _draw_branch(mask: np.ndarray, rng: np.random.Generator, start: tuple[float, float],
                 heading: float, length: float, width0: float) -> list[tuple[float, float, float]]:
    """Walk one polyline, stamping tapered disks; returns (y, x, width) way-points."""
    h, w = mask.shape
    y, x = start
    steps = max(4, int(round(length)))
    points = []
    for t in range(steps):
        width = max(1.0, width0 * (1.0 - t / steps))
        _stamp(mask, y, x, width / 2.0)
        points.append((y, x, width))
        heading += rng.normal(0.0, CURVATURE_SD)
        y += np.sin(heading)
        x += np.cos(heading)
        if not (1.0 <= y <= h - 2.0 and 1.0 <= x <= w - 2.0):
            break
    return points


def _draw_tree(mask: np.ndarray, rng: np.random.Generator) -> None:
    h, w = mask.shape
    start = (rng.uniform(2, h - 3), rng.uniform(2, w - 3))
    heading = rng.uniform(0, 2 * np.pi)
    length = rng.uniform(*LENGTH_RANGE) * min(h, w)
    width0 = float(rng.choice(WIDTH_CHOICES, p=WIDTH_WEIGHTS))
    trunk = _draw_branch(mask, rng, start, heading, length, width0)
    if len(trunk) >= 8 and rng.random() < BRANCH_PROB:
        for _ in range(int(rng.integers(1, 3))):
            py, px, pw = trunk[int(rng.integers(len(trunk) // 4, len(trunk)))]
            side = 1.0 if rng.random() < 0.5 else -1.0
            _draw_branch(mask, rng, (py, px), heading + side * rng.uniform(0.4, 1.0),
                         length * rng.uniform(0.3, 0.6), max(1.0, pw - 1.0))


def _smooth_background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    coarse = rng.uniform(*BACKGROUND_RANGE, size=(5, 5))
    up = backend.kernels().bilinear_resize(coarse[None, None], h, w)[0, 0]
    return up


def _render(rng: np.random.Generator, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    for _attempt in range(20):
        label = np.zeros((h, w), dtype=bool)
        img = _smooth_background(rng, h, w)
        n_trees = int(rng.integers(TREES_MIN, TREES_MAX + 1))
        for _ in range(n_trees):
            tree = np.zeros((h, w), dtype=bool)
            _draw_tree(tree, rng)
            contrast = rng.uniform(*CONTRAST_RANGE)
            img = img - contrast * tree
            label |= tree
        img = img + rng.normal(0.0, NOISE_SD, size=(h, w))
        frac = label.mean()
        if FG_FRACTION_RANGE[0] <= frac <= FG_FRACTION_RANGE[1]:
            u8 = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
            return u8, label.astype(np.uint8)
    raise RuntimeError("could not draw an image within the foreground-fraction bounds "
                       "after 20 attempts (generator constants are off)")


def synth_generate(count: int, height: int, width: int, seed: int,
                   out_dir: Union[str, Path]) -> DatasetManifest:
    """Write ``count`` image/label PGM pairs plus ``manifest.txt``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if height < 32 or width < 32:
        raise ValueError(f"extents must be >= 32, got {height}x{width}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        img, label = _render(rng, height, width)
        img_name = f"img_{i:04d}.pgm"
        lbl_name = f"lbl_{i:04d}.pgm"
        write_pnm(from_array(img), out / img_name)
        write_pnm(from_array(label * np.uint8(255)), out / lbl_name)
        lines.append(f"{img_name}\t{lbl_name}")
    manifest_path = out / "manifest.txt"
    manifest_path.write_text("\n".join(lines) + "\n")
    return read_manifest(manifest_path)
