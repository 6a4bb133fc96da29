"""Self-contained correctness suites, runnable from the CLI.

Two groups: "grad" re-derives every analytic gradient against central finite
differences; "oracle" checks closed-form hand values and independent
brute-force implementations.  Each check prints one pass/fail line.

Setting BEFD_VERIFY_SABOTAGE=conv2d deliberately corrupts the conv2d backward
used by this module — a fixture proving the harness actually detects wrong
gradients.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import tensor
from .denoise import DenoiseBlock, denoise_forward, nonlocal_bruteforce, nonlocal_means_dot
from .edge import AttentionMap, AttentionParams, attention_transform, sobel, SobelGradients
from .gradcheck import grad_check
from .metrics import ConfusionCounts, auc, basic_metrics
from .network import NetworkVariant, UNetConfig, build, forward, param_count
from .tensor import (BNState, Tensor, add, batchnorm2d, concat_channels, conv2d,
                     conv_transpose2d, maxpool2d, mul, reduce_mean, relu, sigmoid)
from .trainer import bce_loss


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _sabotaged_conv2d(x, w, b=None, padding=0):
    out = conv2d(x, w, b, padding)
    return tensor.record(out.data, (out,),
                         lambda g: tensor.accumulate(out, g * 1.01), "conv2d")


def _conv_op():
    if os.environ.get("BEFD_VERIFY_SABOTAGE") == "conv2d":
        return _sabotaged_conv2d
    return conv2d


def _rand(rng, shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


def _gc(f, inputs, tol=1e-5, cap=None):
    rep = grad_check(f, inputs, tolerance=tol, max_coords_per_input=cap,
                     rng=np.random.default_rng(0))
    return rep.passed, f"score {rep.score:.2e} over {rep.coords_checked} coords"


# --- gradient checks ---------------------------------------------------------

def check_conv2d(seeds=range(3)):
    op = _conv_op()
    for s in seeds:
        rng = np.random.default_rng(s)
        x = _rand(rng, (2, 3, 6, 6))
        w = _rand(rng, (4, 3, 3, 3), 0.4)
        b = _rand(rng, (4,), 0.1)
        ok, d = _gc(lambda x, w, b: reduce_mean(mul(op(x, w, b, padding=1),
                                                    op(x, w, b, padding=1))), [x, w, b])
        if not ok:
            return False, d
    return True, d


def check_conv_transpose2d(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        x = _rand(rng, (2, 3, 4, 4))
        w = _rand(rng, (3, 2, 2, 2), 0.5)
        b = _rand(rng, (2,), 0.1)
        ok, d = _gc(lambda x, w, b: reduce_mean(mul(conv_transpose2d(x, w, b),
                                                    conv_transpose2d(x, w, b))), [x, w, b])
        if not ok:
            return False, d
    return True, d


def _pool_safe_input(rng, shape):
    base = np.round(rng.random(shape) * 40) / 40 * 8
    off = np.zeros(shape[-2:])
    off[0::2, 0::2], off[0::2, 1::2], off[1::2, 0::2], off[1::2, 1::2] = 0.0, 0.005, 0.010, 0.015
    return Tensor(base + off, requires_grad=True, dtype=np.float64)


def check_maxpool2d(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        x = _pool_safe_input(rng, (2, 2, 6, 6))
        ok, d = _gc(lambda x: reduce_mean(mul(maxpool2d(x), maxpool2d(x))), [x])
        if not ok:
            return False, d
    return True, d


def check_batchnorm2d(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        x = _rand(rng, (2, 3, 4, 4))
        gm = Tensor(1 + 0.3 * rng.standard_normal(3), requires_grad=True, dtype=np.float64)
        bt = _rand(rng, (3,), 0.2)

        def f(x, gm, bt):
            out = batchnorm2d(x, gm, bt, BNState(3, np.float64), "train")
            return reduce_mean(mul(out, out))

        ok, d = _gc(f, [x, gm, bt])
        if not ok:
            return False, d
    return True, d


def check_elementwise(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        a = _rand(rng, (2, 3, 4, 4))
        b = _rand(rng, (2, 3, 4, 4))
        m = _rand(rng, (2, 1, 4, 4))
        # Keep the relu argument a*m clear of the kink: a central difference
        # is only a valid oracle where the function is smooth, and |a|,|m|
        # >= 0.1 means no +-1e-4 perturbation can flip the product's sign.
        a.data += np.where(a.data >= 0, 0.1, -0.1)
        m.data += np.where(m.data >= 0, 0.1, -0.1)
        ok, d = _gc(lambda a, b, m: reduce_mean(mul(sigmoid(add(relu(mul(a, m)), b)),
                                                    add(a, b))), [a, b, m])
        if not ok:
            return False, d
    return True, d


def check_concat(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        a = _rand(rng, (2, 2, 4, 4))
        b = _rand(rng, (2, 3, 4, 4))
        ok, d = _gc(lambda a, b: reduce_mean(mul(concat_channels(a, b), concat_channels(a, b))),
                    [a, b])
        if not ok:
            return False, d
    return True, d


def check_reduce_mean(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        x = _rand(rng, (3, 5))
        ok, d = _gc(lambda x: reduce_mean(mul(x, x)), [x])
        if not ok:
            return False, d
    return True, d


def check_bce_loss(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        z = _rand(rng, (2, 1, 4, 4), 2.0)
        y = (rng.random((2, 1, 4, 4)) < 0.5).astype(np.float64)
        m = (rng.random((2, 1, 4, 4)) < 0.8).astype(np.float64)
        m.reshape(-1)[0] = 1.0
        ok, d = _gc(lambda z: bce_loss(z, y, m), [z])
        if not ok:
            return False, d
    return True, d


def check_nonlocal(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        x = _rand(rng, (1, 3, 3, 3), 0.7)
        ok, d = _gc(lambda x: reduce_mean(mul(nonlocal_means_dot(x), nonlocal_means_dot(x))), [x])
        if not ok:
            return False, d
    return True, d


def check_denoise(seeds=range(3)):
    for s in seeds:
        rng = np.random.default_rng(s)
        x = _rand(rng, (1, 3, 3, 3), 0.7)
        w = _rand(rng, (3, 3, 1, 1), 0.4)
        b = _rand(rng, (3,), 0.1)

        def f(x, w, b):
            blk = DenoiseBlock(3, np.float64)
            blk.conv_weight, blk.conv_bias = w, b
            out = denoise_forward(blk, x)
            return reduce_mean(mul(out, out))

        ok, d = _gc(f, [x, w, b])
        if not ok:
            return False, d
    return True, d


def check_micro_network(seeds=(0,)):
    cfg = UNetConfig(depth=3, base_channels=4, be_levels=(2, 3), fd_skips=(1, 2))
    for s in seeds:
        rng = np.random.default_rng(s)
        net = build(cfg, NetworkVariant.BEFD_UNET, seed=s, dtype=np.float64)
        for blk in net.denoise_blocks.values():
            blk.conv_weight.data[:] = 0.3 * rng.standard_normal(blk.conv_weight.data.shape)
            blk.conv_bias.data[:] = 0.1 * rng.standard_normal(blk.conv_bias.data.shape)
        x = rng.random((1, 1, 8, 8))
        amap = AttentionMap(1.0 + rng.random((8, 8)), (8, 8))
        y = (rng.random((1, 1, 8, 8)) < 0.4).astype(np.float64)
        names = list(net.params)
        picked = [names[i] for i in np.random.default_rng(123).choice(len(names), 12, replace=False)]
        params = [net.params[n] for n in picked]

        def f(*ps):
            logits = forward(net, Tensor(x, dtype=np.float64), [amap], mode="train")
            return bce_loss(logits, y)

        # The composite network crosses many relu/maxpool kinks; a 1e-4 step
        # occasionally straddles one, which invalidates the central difference
        # itself (the mismatch vanishes as the step shrinks, unlike a wrong
        # gradient). 1e-6 keeps clear of kinks while float64 roundoff stays
        # near 1e-10, five orders below the tolerance.
        rep = grad_check(f, params, step=1e-6, tolerance=1e-5, max_coords_per_input=8,
                         rng=np.random.default_rng(7))
        if not rep.passed:
            return False, f"score {rep.score:.2e} at {picked[rep.worst[0]]}"
    return True, f"score {rep.score:.2e}, {len(picked)} params sampled"


# --- oracle checks -----------------------------------------------------------

def check_attention_hand_cases():
    mags = np.array([[0.5, 0.8, 2.9, 5.0, 7.3]])
    want = np.array([[1.0, 3.0, 2.0, 1.0, 1.0]])
    got = attention_transform(SobelGradients(mags * 0, mags * 0, mags), AttentionParams()).weights
    dev = np.abs(got - want).max()
    return dev <= 1e-12, f"max deviation {dev:.1e}"


def check_sobel_step_edge():
    img = np.zeros((4, 4))
    img[:, 2:] = 10.0
    g = sobel(img)
    ok = (abs(g.gx[1, 1] - 40.0) < 1e-12 and abs(g.gy[1, 1]) < 1e-12
          and abs(g.magnitude[1, 1] - 40.0) < 1e-12)
    flat = sobel(np.full((5, 5), 3.3))
    ok &= (flat.magnitude == 0).all()
    return ok, f"gx={g.gx[1, 1]}, gy={g.gy[1, 1]}"


def check_nonlocal_oracle(n_shapes=10):
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(n_shapes):
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 64 // h + 1))
        c = int(rng.integers(1, 6))
        x = Tensor(rng.standard_normal((2, c, h, w)), dtype=np.float64)
        a = nonlocal_means_dot(x).data
        b = nonlocal_bruteforce(x).data
        worst = max(worst, float(np.abs(a - b).max()))
    return worst <= 1e-10, f"worst |gram - brute| = {worst:.2e}"


def check_nonlocal_symmetry():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 4, 4))
    base = nonlocal_means_dot(Tensor(x, dtype=np.float64)).data
    perm = rng.permutation(16)
    xp = x.reshape(2, 3, 16)[:, :, perm].reshape(2, 3, 4, 4)
    dev_p = np.abs(nonlocal_means_dot(Tensor(xp, dtype=np.float64)).data
                   - base.reshape(2, 3, 16)[:, :, perm].reshape(2, 3, 4, 4)).max()
    s = 1.37
    dev_h = np.abs(nonlocal_means_dot(Tensor(s * x, dtype=np.float64)).data - s ** 3 * base).max()
    ok = dev_p <= 1e-9 and dev_h <= 1e-9
    return ok, f"permutation dev {dev_p:.1e}, homogeneity dev {dev_h:.1e}"


def auc_pairwise(scores: np.ndarray, truth: np.ndarray) -> Optional[float]:
    """O(P*N) oracle: wins + half-ties over all positive-negative pairs."""
    truth = truth.astype(bool)
    pos, neg = scores[truth], scores[~truth]
    if len(pos) == 0 or len(neg) == 0:
        return None
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float(wins + 0.5 * ties) / (len(pos) * len(neg))


def check_auc_oracle(instances=100):
    rng = np.random.default_rng(11)
    worst = 0.0
    done = 0
    while done < instances:
        n = int(rng.integers(4, 120))
        scores = np.round(rng.random(n), 2)
        truth = rng.random(n) < rng.uniform(0.2, 0.8)
        ref = auc_pairwise(scores, truth)
        if ref is None:
            continue
        worst = max(worst, abs(auc(scores, truth.astype(np.uint8)) - ref))
        done += 1
    return worst <= 1e-12, f"worst |fast - pairwise| = {worst:.2e} on {instances} instances"


def check_auc_monotone(instances=20):
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(8, 60))
        scores = rng.random(n)
        truth = rng.random(n) < 0.5
        if truth.all() or not truth.any():
            continue
        a = auc(scores, truth.astype(np.uint8))
        b = auc(np.exp(3.0 * scores) + 1.0, truth.astype(np.uint8))
        worst = max(worst, abs(a - b))
    return worst <= 1e-12, f"worst transform drift {worst:.2e}"


def check_metric_identities():
    from fractions import Fraction
    rng = np.random.default_rng(5)
    for _ in range(50):
        tp, tn, fp, fn = (int(v) for v in rng.integers(0, 40, 4))
        if tp + tn + fp + fn == 0:
            continue
        r = basic_metrics(ConfusionCounts(tp, tn, fp, fn))
        pairs = [(r.sen, tp, tp + fn), (r.spe, tn, tn + fp),
                 (r.acc, tp + tn, tp + tn + fp + fn), (r.f1, 2 * tp, 2 * tp + fp + fn)]
        for got, num, den in pairs:
            if den == 0:
                if got is not None:
                    return False, f"expected undefined metric at {(tp, tn, fp, fn)}"
            elif got != float(Fraction(num, den)):
                return False, f"metric != exact ratio at {(tp, tn, fp, fn)}"
    return True, "all four metrics equal their exact rational values on 50 count vectors"


def check_neutral_extension():
    cfg = UNetConfig(depth=3, base_channels=4, be_levels=(2, 3), fd_skips=(1, 2))
    rng = np.random.default_rng(2)
    x = rng.random((2, 1, 16, 16)).astype(np.float32)
    ones = [AttentionMap(np.ones((16, 16)), (16, 16))] * 2
    with tensor.no_grad():
        a = forward(build(cfg, NetworkVariant.UNET, 9), Tensor(x), mode="train")
        b = forward(build(cfg, NetworkVariant.BEFD_UNET, 9), Tensor(x), ones, mode="train")
    ok = np.array_equal(a.data, b.data)
    return ok, "bit-identical logits" if ok else f"max dev {np.abs(a.data - b.data).max():.2e}"


def check_param_accounting():
    cfg = UNetConfig()
    counts = {v: param_count(build(cfg, v, 0)) for v in NetworkVariant}
    fd_delta = counts[NetworkVariant.FD_UNET] - counts[NetworkVariant.UNET]
    be_delta = counts[NetworkVariant.BE_UNET] - counts[NetworkVariant.UNET]
    ok = fd_delta == 86_464 and be_delta == 0
    return ok, f"fd delta {fd_delta} (want 86464), be delta {be_delta} (want 0)"


GRAD_CHECKS: list[tuple[str, Callable]] = [
    ("conv2d gradient", check_conv2d),
    ("conv_transpose2d gradient", check_conv_transpose2d),
    ("maxpool2d gradient", check_maxpool2d),
    ("batchnorm2d gradient", check_batchnorm2d),
    ("elementwise gradient", check_elementwise),
    ("concat_channels gradient", check_concat),
    ("reduce_mean gradient", check_reduce_mean),
    ("bce_loss gradient", check_bce_loss),
    ("nonlocal_means_dot gradient", check_nonlocal),
    ("denoise_forward gradient", check_denoise),
    ("micro network gradient", check_micro_network),
]

ORACLE_CHECKS: list[tuple[str, Callable]] = [
    ("attention hand cases", check_attention_hand_cases),
    ("sobel step edge", check_sobel_step_edge),
    ("nonlocal gram vs brute force", check_nonlocal_oracle),
    ("nonlocal symmetry/homogeneity", check_nonlocal_symmetry),
    ("auc fast vs pairwise", check_auc_oracle),
    ("auc monotone invariance", check_auc_monotone),
    ("metric identities", check_metric_identities),
    ("neutral extension equivalence", check_neutral_extension),
    ("parameter accounting", check_param_accounting),
]


def run_suite(suite: str) -> tuple[bool, list[CheckResult]]:
    if suite == "grad":
        checks = GRAD_CHECKS
    elif suite == "oracle":
        checks = ORACLE_CHECKS
    elif suite == "all":
        checks = GRAD_CHECKS + ORACLE_CHECKS
    else:
        raise ValueError(f"unknown suite {suite!r}; choose grad, oracle, or all")
    results = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as e:  # a crash is a failure, not an abort
            passed, detail = False, f"raised {type(e).__name__}: {e}"
        results.append(CheckResult(name, passed, detail, time.perf_counter() - t0))
    return all(r.passed for r in results), results


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results) + 2
    lines = []
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}} {status}  [{r.seconds:6.2f}s]  {r.detail}")
    n_bad = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_bad}/{len(results)} checks passed")
    return "\n".join(lines)
