"""Non-local feature denoising: Gram path vs brute force, block semantics."""

import numpy as np
import pytest

from befd.denoise import DenoiseBlock, denoise_forward, nonlocal_bruteforce, nonlocal_means_dot
from befd.gradcheck import grad_check
from befd.tensor import Tensor, backward, mul, reduce_mean


def test_gram_path_equals_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(25):
        c = int(rng.integers(1, 7))
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 64 // h + 1))
        x = Tensor(rng.standard_normal((2, c, h, w)), dtype=np.float64)
        fast = nonlocal_means_dot(x).data
        slow = nonlocal_bruteforce(x).data
        assert np.abs(fast - slow).max() <= 1e-10


def test_bruteforce_guards_position_count():
    x = Tensor(np.zeros((1, 2, 9, 8)), dtype=np.float64)
    with pytest.raises(ValueError, match="64"):
        nonlocal_bruteforce(x)


def test_permutation_equivariance():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 4, 4, 4))
    perm = rng.permutation(16)
    flat = x.reshape(1, 4, 16)
    out = nonlocal_means_dot(Tensor(x, dtype=np.float64)).data.reshape(1, 4, 16)
    out_perm = nonlocal_means_dot(
        Tensor(flat[:, :, perm].reshape(1, 4, 4, 4), dtype=np.float64)).data.reshape(1, 4, 16)
    assert np.abs(out[:, :, perm] - out_perm).max() <= 1e-9


def test_cubic_homogeneity():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 5, 5))
    s = 1.7
    a = nonlocal_means_dot(Tensor(s * x, dtype=np.float64)).data
    b = (s ** 3) * nonlocal_means_dot(Tensor(x, dtype=np.float64)).data
    assert np.abs(a - b).max() <= 1e-9


def test_batch_items_are_independent():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 2, 4, 4))
    full = nonlocal_means_dot(Tensor(x, dtype=np.float64)).data
    for n in range(3):
        single = nonlocal_means_dot(Tensor(x[n:n + 1], dtype=np.float64)).data
        assert np.allclose(full[n], single[0], atol=1e-12)


def test_nonlocal_gradient():
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((2, 3, 3, 4)), dtype=np.float64, requires_grad=True)
    report = grad_check(lambda x: reduce_mean(mul(nonlocal_means_dot(x), x)), [x], rng=rng)
    assert report.passed, report


def test_block_initializes_to_identity():
    block = DenoiseBlock(channels=5, dtype=np.float64)
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((2, 5, 4, 4)), dtype=np.float64)
    out = denoise_forward(block, x)
    assert np.array_equal(out.data, x.data)  # zero conv weight and bias: exact residual identity


def test_block_gradient_with_random_weights():
    rng = np.random.default_rng(6)
    block = DenoiseBlock(channels=3, dtype=np.float64)
    block.conv_weight.data[:] = rng.standard_normal(block.conv_weight.data.shape) * 0.3
    block.conv_bias.data[:] = rng.standard_normal(block.conv_bias.data.shape) * 0.1
    block.conv_weight.requires_grad = True
    block.conv_bias.requires_grad = True
    x = Tensor(rng.standard_normal((1, 3, 4, 4)), dtype=np.float64, requires_grad=True)
    report = grad_check(lambda x, w, b: reduce_mean(mul(denoise_forward(block, x), x)),
                        [x, block.conv_weight, block.conv_bias], rng=rng)
    assert report.passed, report


def test_block_parameters_listed():
    block = DenoiseBlock(channels=4)
    params = block.parameters()
    assert block.conv_weight in params and block.conv_bias in params
    assert block.conv_weight.shape == (4, 4, 1, 1)
    assert block.conv_bias.shape == (4,)
