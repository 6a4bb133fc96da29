"""Confusion-based scores, rank AUC, thin-structure masking, CSV."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from befd.metrics import (
    ConfusionCounts,
    auc,
    basic_metrics,
    confusion,
    evaluate_image,
    evaluate_set,
    metrics_csv,
    thin_vessel_mask,
)
from befd.verify import auc_pairwise


def test_confusion_hand_case():
    pred = np.array([[0.9, 0.4], [0.6, 0.1]])
    gt = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    c = confusion(pred, gt, threshold=0.5)
    assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 1)


def test_threshold_is_strictly_greater():
    pred = np.array([[0.5]])
    gt = np.array([[1]], dtype=np.uint8)
    c = confusion(pred, gt, threshold=0.5)
    assert c.tp == 0 and c.fn == 1  # exactly at threshold counts negative


def test_threshold_domain_enforced():
    pred = np.zeros((2, 2))
    gt = np.zeros((2, 2), dtype=np.uint8)
    for bad in (0.0, 1.0, -1.0, 2.0):
        with pytest.raises(ValueError):
            confusion(pred, gt, threshold=bad)


def test_mask_restricts_counting():
    pred = np.array([[0.9, 0.9], [0.1, 0.9]])
    gt = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    mask = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    c = confusion(pred, gt, mask)
    assert c.total == 2
    assert (c.tp, c.tn) == (1, 1)


def test_metrics_match_hand_fractions():
    c = ConfusionCounts(tp=8, tn=5, fp=2, fn=1)
    r = basic_metrics(c)
    assert r.acc == float(Fraction(13, 16))
    assert r.sen == float(Fraction(8, 9))
    assert r.spe == float(Fraction(5, 7))
    assert r.f1 == float(Fraction(16, 19))


def test_undefined_metrics_are_none():
    r = basic_metrics(ConfusionCounts(tp=0, tn=4, fp=0, fn=0))
    assert r.sen is None  # no positives in ground truth
    assert r.f1 is None
    assert r.spe == 1.0
    with pytest.raises(ValueError):
        basic_metrics(ConfusionCounts(tp=0, tn=0, fp=0, fn=0))


def test_auc_hand_values():
    gt = np.array([0, 0, 1, 1], dtype=np.uint8)
    assert auc(np.array([0.1, 0.2, 0.8, 0.9]), gt) == 1.0
    assert auc(np.array([0.9, 0.8, 0.2, 0.1]), gt) == 0.0
    assert auc(np.array([0.5, 0.5, 0.5, 0.5]), gt) == 0.5


def test_auc_single_class_is_none():
    assert auc(np.array([0.1, 0.9]), np.array([1, 1], dtype=np.uint8)) is None
    assert auc(np.array([0.1, 0.9]), np.array([0, 0], dtype=np.uint8)) is None


def test_auc_matches_pairwise_oracle_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        scores = rng.choice([0.1, 0.3, 0.5, 0.7], size=n)
        truth = rng.integers(0, 2, n).astype(np.uint8)
        want = auc_pairwise(scores, truth)
        got = auc(scores.reshape(1, -1), truth.reshape(1, -1))
        if want is None:
            assert got is None
        else:
            assert abs(got - want) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=30),
       st.lists(st.booleans(), min_size=2, max_size=30))
def test_auc_probability_interpretation(score_levels, labels):
    n = min(len(score_levels), len(labels))
    scores = np.array(score_levels[:n], dtype=np.float64) / 5.0
    truth = np.array(labels[:n], dtype=np.uint8)
    got = auc(scores, truth)
    want = auc_pairwise(scores, truth)
    if want is None:
        assert got is None
    else:
        assert abs(got - want) <= 1e-12
        assert 0.0 <= got <= 1.0


def test_thin_mask_width_rule():
    gt = np.zeros((16, 16), dtype=np.uint8)
    gt[4, 2:14] = 1                # width-1 stroke: thin
    gt[8:14, 2:14] = 1             # 6-wide slab: interior is not thin
    thin = thin_vessel_mask(gt)
    assert thin[4, 5]
    assert not thin[11, 8]         # deep interior of the slab
    assert thin[8, 5] and thin[13, 5]  # slab boundary rows stay within 1.5px of background
    assert not thin[0, 0]          # background never counts


def test_evaluate_image_bundles_all_fields():
    rng = np.random.default_rng(1)
    gt = (rng.random((10, 10)) < 0.3).astype(np.uint8)
    pred = np.where(gt, 0.8, 0.2) + rng.normal(0, 0.05, (10, 10))
    rep = evaluate_image(np.clip(pred, 0, 1), gt)
    assert rep.acc is not None and rep.auc is not None
    assert rep.counts.total == 100


def test_evaluate_set_pools_counts_and_auc():
    rng = np.random.default_rng(2)
    gts = [(rng.random((8, 8)) < 0.4).astype(np.uint8) for _ in range(3)]
    preds = [np.clip(np.where(g, 0.7, 0.3) + rng.normal(0, 0.1, g.shape), 0, 1) for g in gts]
    reports, pooled = evaluate_set(preds, gts, [None, None, None])
    assert len(reports) == 3
    total = sum(r.counts.total for r in reports)
    assert pooled.counts.total == total == 3 * 64
    flat_scores = np.concatenate([p.reshape(-1) for p in preds])
    flat_truth = np.concatenate([g.reshape(-1) for g in gts])
    assert abs(pooled.auc - auc_pairwise(flat_scores, flat_truth)) <= 1e-12


def test_extent_mismatch_raises():
    with pytest.raises(ValueError, match="extent"):
        confusion(np.zeros((4, 4)), np.zeros((4, 5), dtype=np.uint8))


def test_csv_format_golden():
    rows = [("img1", evaluate_image(np.array([[0.9, 0.1]]), np.array([[1, 0]], dtype=np.uint8)))]
    pooled = rows[0][1]
    text = metrics_csv(rows, pooled)
    lines = text.strip().split("\n")
    assert lines[0] == "id,acc,sen,spe,f1,auc,tp,tn,fp,fn"
    assert lines[1].startswith("img1,1.0")
    assert lines[-1].startswith("POOLED,")


def test_csv_uses_na_for_undefined():
    rep = evaluate_image(np.array([[0.1, 0.2]]), np.array([[0, 0]], dtype=np.uint8))
    text = metrics_csv([("empty", rep)], rep)
    assert ",NA," in text.split("\n")[1]
