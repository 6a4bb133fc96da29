"""Timing comparison of the two kernel backends on training-shaped inputs."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import backend


@dataclass
class BenchRow:
    kernel: str
    shape: str
    numpy_ms: float
    numba_ms: float

    @property
    def speedup(self) -> float:
        return self.numpy_ms / self.numba_ms if self.numba_ms > 0 else float("inf")


def _time_best(fn: Callable[[], object], repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def _cases():
    rng = np.random.default_rng(0)
    f32 = np.float32
    # conv shapes follow the scaled experiment (base 16, 64x64, batch 8)
    for (ci, co, hw) in [(16, 16, 64), (32, 32, 32), (64, 64, 16), (128, 128, 8)]:
        x = rng.standard_normal((8, ci, hw, hw)).astype(f32)
        w = rng.standard_normal((co, ci, 3, 3)).astype(f32)
        yield (f"conv2d_fwd", f"8x{ci}x{hw}x{hw} -> {co}",
               lambda K, x=x, w=w: K.conv2d_fwd(x, w, 1))
        dy = rng.standard_normal((8, co, hw, hw)).astype(f32)
        yield (f"conv2d_bwd_weight", f"8x{ci}x{hw}x{hw} -> {co}",
               lambda K, dy=dy, x=x: K.conv2d_bwd_weight(dy, x, 1, 3, 3))
    x = rng.standard_normal((8, 32, 32, 32)).astype(f32)
    w = rng.standard_normal((32, 16, 2, 2)).astype(f32)
    yield ("convt2d_fwd", "8x32x32x32 -> 16", lambda K: K.convt2d_fwd(x, w))
    xp = rng.standard_normal((8, 16, 64, 64)).astype(f32)
    yield ("maxpool2d_fwd", "8x16x64x64", lambda K: K.maxpool2d_fwd(xp))
    img = rng.random((584, 565))
    yield ("sobel_gradients", "584x565", lambda K: K.sobel_gradients(img))
    fg = rng.random((584, 565)) < 0.1
    yield ("edt_sq", "584x565", lambda K: K.edt_sq(fg))
    xb = rng.standard_normal((1, 8, 64, 64)).astype(f32)
    yield ("bilinear_resize", "1x8x64x64 -> 37x53", lambda K: K.bilinear_resize(xb, 37, 53))


def run_bench(repeats: int = 3) -> list[BenchRow]:
    if not backend.numba_available():
        raise RuntimeError("numba backend unavailable; nothing to compare")
    rows = []
    for name, shape, fn in _cases():
        with backend.use_backend("numpy"):
            k_np = backend.kernels()
            t_np = _time_best(lambda: fn(k_np), repeats)
        with backend.use_backend("numba"):
            k_nb = backend.kernels()
            fn(k_nb)  # compile outside the timed region
            t_nb = _time_best(lambda: fn(k_nb), repeats)
        rows.append(BenchRow(name, shape, t_np, t_nb))
    return rows


def format_bench(rows: list[BenchRow]) -> str:
    head = f"{'kernel':<20} {'shape':<24} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.kernel:<20} {r.shape:<24} {r.numpy_ms:>10.2f} {r.numba_ms:>10.2f} "
                     f"{r.speedup:>7.2f}x")
    return "\n".join(lines)
