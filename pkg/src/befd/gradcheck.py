"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    """Worst-case deviations between analytic and numeric gradients."""

    max_abs: float = 0.0
    max_rel: float = 0.0
    score: float = 0.0  # max over coordinates of min(abs dev, rel dev)
    tolerance: float = 0.0
    coords_checked: int = 0
    worst: tuple = ()  # (input index, flat coordinate, analytic, numeric)
    passed: bool = True

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        return (f"grad_check {state}: score {self.score:.3e} (tol {self.tolerance:.1e}), "
                f"max abs {self.max_abs:.3e}, max rel {self.max_rel:.3e}, "
                f"{self.coords_checked} coordinates")


def _eval_scalar(f: Callable[..., Tensor], inputs: Sequence[Tensor]) -> float:
    out = f(*inputs)
    if out.data.size != 1:
        raise ValueError(f"grad_check: program must return a scalar, got shape {out.data.shape}")
    val = float(out.data)
    if not np.isfinite(val):
        raise FloatingPointError("grad_check: program returned a non-finite value")
    return val


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], step: float = 1e-4,
               tolerance: float = 1e-5, max_coords_per_input: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """Compare analytic gradients of ``f(*inputs)`` against central differences.

    Every input must be a 64-bit tensor with ``requires_grad``.  A coordinate
    passes when either its absolute or its relative deviation is within
    ``tolerance``; the report aggregates the worst coordinate.
    """
    for i, t in enumerate(inputs):
        if t.data.dtype != np.float64:
            raise TypeError(f"grad_check: input {i} must be float64, got {t.data.dtype.name}")
        if not t.requires_grad:
            raise ValueError(f"grad_check: input {i} does not require gradients")
        t.zero_grad()

    out = f(*inputs)
    if out.data.size != 1:
        raise ValueError(f"grad_check: program must return a scalar, got shape {out.data.shape}")
    if not np.isfinite(out.data).all():
        raise FloatingPointError("grad_check: program returned a non-finite value")
    backward(out)

    rep = GradCheckReport(tolerance=tolerance)
    for i, t in enumerate(inputs):
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords_per_input is not None and n > max_coords_per_input:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(n, size=max_coords_per_input, replace=False)
        else:
            coords = np.arange(n)
        with no_grad():
            for c in coords:
                saved = flat[c]
                flat[c] = saved + step
                hi = _eval_scalar(f, inputs)
                flat[c] = saved - step
                lo = _eval_scalar(f, inputs)
                flat[c] = saved
                numeric = (hi - lo) / (2.0 * step)
                a = float(analytic.reshape(-1)[c])
                dev = abs(a - numeric)
                rel = dev / max(abs(a), abs(numeric), 1e-12)
                score = min(dev, rel)
                rep.coords_checked += 1
                if dev > rep.max_abs:
                    rep.max_abs = dev
                if rel > rep.max_rel:
                    rep.max_rel = rel
                if score > rep.score:
                    rep.score = score
                    rep.worst = (i, int(c), a, numeric)
    rep.passed = rep.score <= tolerance
    return rep
