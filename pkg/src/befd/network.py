"""UNet encoder-decoder with optional boundary attention and skip denoising.

Four variants share one wiring: the attention multiply and the denoising
blocks are strict extensions that reduce to the identity at neutral settings
(all-ones maps, zero-initialized denoise convs), which the tests exploit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .denoise import DenoiseBlock, denoise_forward
from .edge import AttentionMap, attention_pyramid
from .tensor import (BNState, Tensor, batchnorm2d, concat_channels, conv2d,
                     conv_transpose2d, maxpool2d, mul, relu)


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 5
    base_channels: int = 64
    in_channels: int = 1
    out_channels: int = 1
    be_levels: tuple[int, ...] = (3, 4, 5)
    fd_skips: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.base_channels < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        bad = [l for l in self.be_levels if not 1 <= l <= self.depth]
        if bad:
            raise ValueError(f"be_levels {bad} outside 1..{self.depth}")
        bad = [l for l in self.fd_skips if not 1 <= l <= self.depth - 1]
        if bad:
            raise ValueError(f"fd_skips {bad} outside 1..{self.depth - 1}")

    def channels_at(self, level: int) -> int:
        return self.base_channels * (2 ** (level - 1))


class NetworkVariant(enum.Enum):
    UNET = "unet"
    BE_UNET = "be-unet"
    FD_UNET = "fd-unet"
    BEFD_UNET = "befd-unet"

    @property
    def be_active(self) -> bool:
        return self in (NetworkVariant.BE_UNET, NetworkVariant.BEFD_UNET)

    @property
    def fd_active(self) -> bool:
        return self in (NetworkVariant.FD_UNET, NetworkVariant.BEFD_UNET)

    @classmethod
    def parse(cls, name: str) -> "NetworkVariant":
        key = name.strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ValueError(f"unknown variant {name!r}; choose from "
                         + ", ".join(v.value for v in cls))


class Network:
    """Parameter registry + batch-norm state for one built variant."""

    def __init__(self, config: UNetConfig, variant: NetworkVariant, dtype):
        self.config = config
        self.variant = variant
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BNState] = {}
        self.denoise_blocks: dict[int, DenoiseBlock] = {}

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()


def _kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def build(config: UNetConfig, variant: NetworkVariant, seed: int, dtype=np.float32) -> Network:
    """Construct a variant; identical seeds give bit-identical parameters.

    Only conv/deconv weights draw from the generator (biases, BN affines and
    denoise convs have fixed initial values), so the shared backbone is
    identical across variants built from the same seed.
    """
    net = Network(config, variant, dtype)
    rng = np.random.default_rng(seed)
    dt = np.dtype(dtype)

    def add_param(name: str, data: np.ndarray) -> None:
        net.params[name] = Tensor(data, requires_grad=True)

    def add_conv(prefix: str, cin: int, cout: int, k: int) -> None:
        add_param(f"{prefix}.weight", _kaiming_uniform(rng, (cout, cin, k, k), cin * k * k, dt))

    def add_bn(prefix: str, c: int) -> None:
        add_param(f"{prefix}.gamma", np.ones(c, dtype=dt))
        add_param(f"{prefix}.beta", np.zeros(c, dtype=dt))
        net.bn_states[prefix] = BNState(c, dtype=dt)

    for l in range(1, config.depth + 1):
        cin = config.in_channels if l == 1 else config.channels_at(l - 1)
        c = config.channels_at(l)
        add_conv(f"enc{l}.conv1", cin, c, 3)
        add_bn(f"enc{l}.bn1", c)
        add_conv(f"enc{l}.conv2", c, c, 3)
        add_bn(f"enc{l}.bn2", c)

    for l in range(config.depth - 1, 0, -1):
        c = config.channels_at(l)
        cup = config.channels_at(l + 1)
        add_param(f"dec{l}.up.weight", _kaiming_uniform(rng, (cup, c, 2, 2), cup * 4, dt))
        add_param(f"dec{l}.up.bias", np.zeros(c, dtype=dt))
        add_conv(f"dec{l}.conv1", 2 * c, c, 3)
        add_bn(f"dec{l}.bn1", c)
        add_conv(f"dec{l}.conv2", c, c, 3)
        add_bn(f"dec{l}.bn2", c)

    c1 = config.channels_at(1)
    add_param("head.weight", _kaiming_uniform(rng, (config.out_channels, c1, 1, 1), c1, dt))
    add_param("head.bias", np.zeros(config.out_channels, dtype=dt))

    if variant.fd_active:
        for l in sorted(config.fd_skips):
            blk = DenoiseBlock(config.channels_at(l), dtype=dt)
            net.denoise_blocks[l] = blk
            net.params[f"denoise{l}.conv.weight"] = blk.conv_weight
            net.params[f"denoise{l}.conv.bias"] = blk.conv_bias

    return net


def param_count(net: Network) -> int:
    return sum(int(t.data.size) for t in net.params.values())


def _double_conv(net: Network, prefix: str, x: Tensor, mode: str) -> Tensor:
    p = net.params
    x = conv2d(x, p[f"{prefix}.conv1.weight"], padding=1)
    x = relu(batchnorm2d(x, p[f"{prefix}.bn1.gamma"], p[f"{prefix}.bn1.beta"],
                         net.bn_states[f"{prefix}.bn1"], mode))
    x = conv2d(x, p[f"{prefix}.conv2.weight"], padding=1)
    x = relu(batchnorm2d(x, p[f"{prefix}.bn2.gamma"], p[f"{prefix}.bn2.beta"],
                         net.bn_states[f"{prefix}.bn2"], mode))
    return x


AttentionArg = Union[AttentionMap, Sequence[AttentionMap], None]


def _attention_stacks(net: Network, attention: AttentionArg, n: int,
                      hw: tuple[int, int], dtype) -> dict[int, Tensor]:
    if attention is None:
        raise ValueError(f"variant {net.variant.value} needs attention maps, none were given")
    maps = [attention] if isinstance(attention, AttentionMap) else list(attention)
    if len(maps) == 1 and n > 1:
        maps = maps * n
    if len(maps) != n:
        raise ValueError(f"got {len(maps)} attention maps for a batch of {n}")
    for m in maps:
        if m.weights.shape != hw:
            raise ValueError(f"attention map extents {m.weights.shape} do not match input {hw}")
    levels = sorted(l for l in net.config.be_levels)
    dims = [(hw[0] >> (l - 1), hw[1] >> (l - 1)) for l in levels]
    stacks: dict[int, Tensor] = {}
    per_map = [attention_pyramid(m, dims) for m in maps]
    for li, l in enumerate(levels):
        arr = np.stack([pm[li].weights for pm in per_map])[:, None].astype(dtype)
        stacks[l] = Tensor(arr)
    return stacks


def forward(net: Network, batch: Tensor, attention: AttentionArg = None,
            mode: str = "train") -> Tensor:
    """Run the network; returns logits with the input's spatial extents."""
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=net.dtype))
    if x.data.ndim != 4:
        raise ValueError(f"forward expects an NCHW batch, got shape {x.data.shape}")
    n, c, h, w = x.data.shape
    if c != net.config.in_channels:
        raise ValueError(f"batch has {c} channels, network expects {net.config.in_channels}")
    div = 2 ** (net.config.depth - 1)
    if h % div or w % div:
        raise ValueError(f"input extents {h}x{w} must be divisible by {div} "
                         f"(depth {net.config.depth})")

    stacks = (_attention_stacks(net, attention, n, (h, w), x.data.dtype)
              if net.variant.be_active else {})

    skips: dict[int, Tensor] = {}
    cur = x
    for l in range(1, net.config.depth + 1):
        cur = _double_conv(net, f"enc{l}", cur, mode)
        if l in stacks:
            cur = mul(cur, stacks[l])
        if l < net.config.depth:
            skips[l] = cur
            cur = maxpool2d(cur)

    for l in range(net.config.depth - 1, 0, -1):
        cur = conv_transpose2d(cur, net.params[f"dec{l}.up.weight"], net.params[f"dec{l}.up.bias"])
        skip = skips[l]
        if net.variant.fd_active and l in net.denoise_blocks:
            skip = denoise_forward(net.denoise_blocks[l], skip)
        cur = concat_channels(skip, cur)
        cur = _double_conv(net, f"dec{l}", cur, mode)

    return conv2d(cur, net.params["head.weight"], net.params["head.bias"], padding=0)
