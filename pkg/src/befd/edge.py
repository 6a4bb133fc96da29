"""Boundary prior: Sobel gradients turned into multiplicative attention maps.

The map is computed once per image from the preprocessed intensity field,
resized to each encoder resolution, and multiplied into the features;
weak edges receive the largest weights so the network is pushed to keep them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import backend
from .tensor import Tensor, bilinear_resize, mul


@dataclass(frozen=True)
class SobelGradients:
    """Directional derivative responses and their magnitude."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray


@dataclass(frozen=True)
class AttentionParams:
    """Thresholds and the linear ramp of the edge-weight transform."""

    lambda_min: float = 0.8
    lambda_max: float = 5.0
    alpha: float = 2.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.lambda_min < self.lambda_max:
            raise ValueError(f"lambda_min ({self.lambda_min}) must be < lambda_max ({self.lambda_max})")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class AttentionMap:
    """Pixel-wise feature weights plus the extents they were derived at."""

    weights: np.ndarray
    source_dims: tuple[int, int]


def sobel(image: np.ndarray) -> SobelGradients:
    """3x3 Sobel cross-correlation with edge replication at the borders."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"sobel expects a non-empty 2-d field, got shape {img.shape}")
    gx, gy = backend.kernels().sobel_gradients(np.ascontiguousarray(img))
    return SobelGradients(gx=gx, gy=gy, magnitude=np.sqrt(gx * gx + gy * gy))


def attention_transform(grad: SobelGradients, params: AttentionParams = AttentionParams()) -> AttentionMap:
    """Map gradient magnitude to weights: 1 outside (lambda_min, lambda_max),
    a decreasing ramp from alpha+beta down to beta inside it."""
    g = grad.magnitude
    ramp = (1.0 - (g - params.lambda_min) / (params.lambda_max - params.lambda_min)) * params.alpha + params.beta
    w = np.where((g > params.lambda_max) | (g < params.lambda_min), 1.0, ramp)
    return AttentionMap(weights=w, source_dims=(g.shape[0], g.shape[1]))


def attention_pyramid(amap: AttentionMap, levels: Sequence[tuple[int, int]]) -> list[AttentionMap]:
    """Bilinear copies of the map at each requested resolution."""
    src = Tensor(amap.weights[None, None].astype(np.float64))
    out = []
    for (h, w) in levels:
        resized = bilinear_resize(src, h, w)
        out.append(AttentionMap(weights=resized.data[0, 0], source_dims=amap.source_dims))
    return out


def apply_attention(features: Tensor, level_map: AttentionMap) -> Tensor:
    """Multiply a constant weight map across every channel of the features."""
    n, _, h, w = features.data.shape
    mh, mw = level_map.weights.shape
    if (mh, mw) != (h, w):
        raise ValueError(f"attention map is {mh}x{mw} but features are {h}x{w}")
    stack = np.broadcast_to(level_map.weights.astype(features.data.dtype), (n, 1, h, w))
    return mul(features, Tensor(np.ascontiguousarray(stack)))


def image_attention(image: np.ndarray, params: AttentionParams = AttentionParams()) -> AttentionMap:
    """Sobel magnitude + weight transform in one call."""
    return attention_transform(sobel(image), params)
