"""The finite-difference harness itself must catch wrong gradients."""

import numpy as np
import pytest

from befd.gradcheck import grad_check
from befd.tensor import Tensor, accumulate, mul, record, reduce_mean


def test_accepts_correct_gradient():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((3, 4)), dtype=np.float64, requires_grad=True)
    report = grad_check(lambda x: reduce_mean(mul(x, x)), [x], rng=rng)
    assert report.passed
    assert report.score <= 1e-5


def test_rejects_scaled_gradient():
    """An op whose backward is off by 1% must fail the 1e-5 gate."""

    def leaky(x: Tensor) -> Tensor:
        def push(g):
            accumulate(x, g * 1.01)
        return record(x.data.copy(), (x,), push, "leaky-identity")

    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((3, 4)), dtype=np.float64, requires_grad=True)
    report = grad_check(lambda x: reduce_mean(mul(leaky(x), x)), [x], rng=rng)
    assert not report.passed
    assert report.score > 1e-3


def test_rejects_dropped_dependency():
    def forgetful_square(x: Tensor) -> Tensor:
        def push(g):
            accumulate(x, g * x.data)  # should be 2x
        return record(x.data ** 2, (x,), push, "square")

    rng = np.random.default_rng(2)
    x = Tensor(rng.uniform(0.5, 1.5, (2, 2)), dtype=np.float64, requires_grad=True)
    report = grad_check(lambda x: reduce_mean(forgetful_square(x)), [x], rng=rng)
    assert not report.passed


def test_requires_float64_inputs():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    with pytest.raises(TypeError, match="float64"):
        grad_check(lambda x: reduce_mean(mul(x, x)), [x])


def test_requires_grad_flag():
    x = Tensor(np.ones(3), dtype=np.float64)
    with pytest.raises(ValueError, match="require"):
        grad_check(lambda x: reduce_mean(mul(x, x)), [x])


def test_coordinate_sampling_cap():
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal(1000), dtype=np.float64, requires_grad=True)
    report = grad_check(lambda x: reduce_mean(mul(x, x)), [x],
                        max_coords_per_input=8, rng=rng)
    assert report.passed
    assert report.coords_checked == 8
