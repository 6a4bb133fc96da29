"""Segmentation metrics: confusion counts, Acc/Sen/Spe/F1, rank AUC,
thin-structure masks, and CSV reporting.

A metric whose denominator is zero is reported as ``None`` (``NA`` in CSV),
never coerced to 0 — silent zeros corrupt pooled tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import backend


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class MetricsReport:
    acc: Optional[float]
    sen: Optional[float]
    spe: Optional[float]
    f1: Optional[float]
    auc: Optional[float]
    counts: ConfusionCounts


def _check_extents(pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray]) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"prediction extents {pred.shape} do not match ground truth {gt.shape}")
    if mask is not None and mask.shape != gt.shape:
        raise ValueError(f"mask extents {mask.shape} do not match ground truth {gt.shape}")


def confusion(pred_prob: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None,
              threshold: float = 0.5) -> ConfusionCounts:
    """Counts at `prob > threshold`; only mask-true pixels participate."""
    _check_extents(pred_prob, gt, mask)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    pos = pred_prob > threshold
    truth = np.asarray(gt, dtype=bool)
    if mask is not None:
        keep = np.asarray(mask, dtype=bool)
        pos, truth = pos[keep], truth[keep]
    return ConfusionCounts(tp=int(np.count_nonzero(pos & truth)),
                           tn=int(np.count_nonzero(~pos & ~truth)),
                           fp=int(np.count_nonzero(pos & ~truth)),
                           fn=int(np.count_nonzero(~pos & truth)))


def basic_metrics(counts: ConfusionCounts) -> MetricsReport:
    if counts.total == 0:
        raise ValueError("no evaluated pixels")
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn

    def ratio(num: int, den: int) -> Optional[float]:
        return num / den if den else None

    return MetricsReport(acc=ratio(tp + tn, counts.total),
                         sen=ratio(tp, tp + fn),
                         spe=ratio(tn, tn + fp),
                         f1=ratio(2 * tp, 2 * tp + fp + fn),
                         auc=None,
                         counts=counts)


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(x)
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[i:j + 1] = (i + j) / 2.0 + 1.0
        i = j + 1
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def auc(pred_prob: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None) -> Optional[float]:
    """Mann-Whitney AUC with midrank tie handling; None on single-class truth."""
    _check_extents(pred_prob, gt, mask)
    scores = np.asarray(pred_prob, dtype=np.float64).reshape(-1)
    truth = np.asarray(gt, dtype=bool).reshape(-1)
    if mask is not None:
        keep = np.asarray(mask, dtype=bool).reshape(-1)
        scores, truth = scores[keep], truth[keep]
    p = int(truth.sum())
    n = truth.size - p
    if p == 0 or n == 0:
        return None
    ranks = _midranks(scores)
    return (float(ranks[truth].sum()) - p * (p + 1) / 2.0) / (p * n)


def thin_vessel_mask(gt: np.ndarray) -> np.ndarray:
    """Foreground pixels within Euclidean distance 1.5 of the background."""
    fg = np.asarray(gt, dtype=bool)
    if fg.ndim != 2:
        raise ValueError(f"expected a 2-d binary field, got shape {fg.shape}")
    if not fg.any():
        return np.zeros_like(fg)
    dist_sq = backend.kernels().edt_sq(fg)
    return fg & (dist_sq <= 1.5 * 1.5)


def evaluate_image(pred_prob: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None,
                   threshold: float = 0.5) -> MetricsReport:
    counts = confusion(pred_prob, gt, mask, threshold)
    rep = basic_metrics(counts)
    return MetricsReport(acc=rep.acc, sen=rep.sen, spe=rep.spe, f1=rep.f1,
                         auc=auc(pred_prob, gt, mask), counts=counts)


def evaluate_set(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray],
                 masks: Optional[Sequence[Optional[np.ndarray]]] = None,
                 threshold: float = 0.5) -> tuple[list[MetricsReport], MetricsReport]:
    """Per-image reports plus a pooled-over-all-pixels report."""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if masks is None:
        masks = [None] * len(preds)
    reports = [evaluate_image(p, g, m, threshold) for p, g, m in zip(preds, gts, masks)]
    pooled_counts = reports[0].counts
    for r in reports[1:]:
        pooled_counts = pooled_counts + r.counts
    pooled = basic_metrics(pooled_counts)

    def flat(a, m):
        v = np.asarray(a).reshape(-1)
        return v if m is None else v[np.asarray(m, dtype=bool).reshape(-1)]

    all_scores = np.concatenate([flat(p, m) for p, m in zip(preds, masks)])
    all_truth = np.concatenate([flat(g, m).astype(bool) for g, m in zip(gts, masks)])
    pooled_auc = auc(all_scores, all_truth)
    pooled = MetricsReport(acc=pooled.acc, sen=pooled.sen, spe=pooled.spe, f1=pooled.f1,
                           auc=pooled_auc, counts=pooled_counts)
    return reports, pooled


def _fmt(v: Optional[float]) -> str:
    return "NA" if v is None else f"{v:.6f}"


def metrics_csv(rows: Sequence[tuple[str, MetricsReport]], pooled: MetricsReport) -> str:
    lines = ["id,acc,sen,spe,f1,auc,tp,tn,fp,fn"]
    for ident, r in list(rows) + [("POOLED", pooled)]:
        c = r.counts
        lines.append(f"{ident},{_fmt(r.acc)},{_fmt(r.sen)},{_fmt(r.spe)},{_fmt(r.f1)},"
                     f"{_fmt(r.auc)},{c.tp},{c.tn},{c.fp},{c.fn}")
    return "\n".join(lines) + "\n"


def write_metrics_csv(path: Union[str, Path], rows: Sequence[tuple[str, MetricsReport]],
                      pooled: MetricsReport) -> None:
    Path(path).write_text(metrics_csv(rows, pooled))
