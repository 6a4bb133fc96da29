"""Feature denoising: dot-product non-local means, 1x1 conv, residual add.

The non-local mean over N = H*W locations is evaluated through the C x C Gram
matrix, so cost is O(N*C^2) rather than the quadratic literal sum; the literal
sum survives only as a small-input oracle.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, accumulate, add, conv2d, record


def nonlocal_means_dot(features: Tensor) -> Tensor:
    """y_i = (1/N) * sum_j (x_i . x_j) x_j per batch item, N = H*W."""
    if features.data.ndim != 4:
        raise ValueError(f"nonlocal_means_dot expects NCHW, got shape {features.data.shape}")
    nb, c, h, w = features.data.shape
    n = h * w
    x = features.data.reshape(nb, c, n)
    out = np.empty_like(x)
    for b in range(nb):
        xb = x[b]
        out[b] = (xb @ xb.T) @ xb
    out /= n
    out = out.reshape(nb, c, h, w)

    def push(g: np.ndarray) -> None:
        if not features.requires_grad:
            return
        gm = g.reshape(nb, c, n)
        dx = np.empty_like(x)
        for b in range(nb):
            xb = x[b]
            gb = gm[b]
            gxt = gb @ xb.T  # C x C
            dx[b] = gxt @ xb + gxt.T @ xb + (xb @ xb.T) @ gb
        dx /= n
        accumulate(features, dx.reshape(nb, c, h, w))

    return record(out, (features,), push, "nonlocal_means_dot")


def nonlocal_bruteforce(features: Tensor) -> Tensor:
    """Literal double loop over location pairs; test oracle, small inputs only."""
    if features.data.ndim != 4:
        raise ValueError(f"nonlocal_bruteforce expects NCHW, got shape {features.data.shape}")
    nb, c, h, w = features.data.shape
    n = h * w
    if n > 64:
        raise ValueError(f"nonlocal_bruteforce is limited to 64 locations, got {n}")
    x = features.data.reshape(nb, c, n)
    out = np.zeros_like(x)
    for b in range(nb):
        for i in range(n):
            for j in range(n):
                out[b, :, i] += np.dot(x[b, :, i], x[b, :, j]) * x[b, :, j]
    out /= n
    return Tensor(out.reshape(nb, c, h, w))


class DenoiseBlock:
    """1x1 conv over the non-local mean, added back onto the input.

    Zero initialization makes the block the exact identity at the start of
    training.
    """

    def __init__(self, channels: int, dtype=np.float32):
        self.channels = channels
        self.conv_weight = Tensor(np.zeros((channels, channels, 1, 1), dtype=dtype), requires_grad=True)
        self.conv_bias = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.conv_weight, self.conv_bias]


def denoise_forward(block: DenoiseBlock, features: Tensor) -> Tensor:
    if features.data.shape[1] != block.channels:
        raise ValueError(f"denoise block has {block.channels} channels but features have "
                         f"{features.data.shape[1]}")
    smoothed = nonlocal_means_dot(features)
    fused = conv2d(smoothed, block.conv_weight, block.conv_bias, padding=0)
    return add(features, fused)
