"""Loss, Adam, the training loop, and single-image inference."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .checkpoint import checkpoint_from_network, save_checkpoint
from .data import DatasetManifest, Sample, augment_flip, crop_back, load_sample, pad_to_divisible
from .edge import AttentionParams, image_attention
from .network import Network, NetworkVariant, UNetConfig, build, forward
from .tensor import Tensor, accumulate, backward, no_grad, record, sigmoid


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 30_000
    batch_size: int = 8
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # 0 = only the final checkpoint
    variant: NetworkVariant = NetworkVariant.BEFD_UNET
    unet: UNetConfig = field(default_factory=UNetConfig)
    attention: AttentionParams = field(default_factory=AttentionParams)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


def bce_loss(logits: Tensor, targets: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean binary cross-entropy on logits, numerically stable at any magnitude."""
    z = logits.data
    y = np.asarray(targets, dtype=z.dtype)
    if y.shape != z.shape:
        raise ValueError(f"targets shape {y.shape} does not match logits {z.shape}")
    if mask is not None:
        m = np.asarray(mask, dtype=z.dtype)
        if m.shape != z.shape:
            raise ValueError(f"mask shape {m.shape} does not match logits {z.shape}")
        n_eval = float(m.sum())
        if n_eval == 0:
            raise ValueError("bce_loss: every pixel is masked out")
    else:
        m = None
        n_eval = float(z.size)

    per_pixel = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    if m is not None:
        per_pixel = per_pixel * m
    loss = np.asarray(per_pixel.sum(dtype=np.float64) / n_eval, dtype=z.dtype)

    def push(g: np.ndarray) -> None:
        if not logits.requires_grad:
            return
        sig = np.empty_like(z)
        pos = z >= 0
        sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        sig[~pos] = ez / (1.0 + ez)
        dz = (sig - y) * (g.item() / n_eval)
        if m is not None:
            dz *= m
        accumulate(logits, dz)

    return record(loss, (logits,), push, "bce_loss")


class AdamState:
    """First/second-moment buffers keyed by parameter name, plus step count."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0


def adam_step(params: dict[str, Tensor], state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update over every parameter; consumes gradients."""
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr, eps = config.learning_rate, config.adam_epsilon
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        if p.grad is None:
            raise RuntimeError(f"adam_step: parameter {name!r} has no gradient")
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class TrainResult:
    losses: np.ndarray  # one entry per iteration
    final_checkpoint: Path
    log_path: Path
    net: Network
    seconds: float


def _batch_arrays(samples: Sequence[Sample], dtype) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    x = np.concatenate([s.image.data.astype(dtype) for s in samples])
    y = np.stack([s.label for s in samples]).astype(dtype)[:, None]
    if any(s.mask is not None for s in samples):
        ms = [s.mask if s.mask is not None else np.ones_like(s.label) for s in samples]
        mask = np.stack(ms).astype(dtype)[:, None]
    else:
        mask = None
    return x, y, mask


def train_loop(config: TrainConfig, manifest: DatasetManifest, out_dir: Union[str, Path]) -> TrainResult:
    """Sample batches with replacement, flip, descend; log every 50 iterations."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    attention_params = config.attention if config.variant.be_active else None
    samples = [load_sample(r, attention_params=attention_params) for r in manifest.records]

    net = build(config.unet, config.variant, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    adam = AdamState()
    losses = np.zeros(config.iterations, dtype=np.float64)
    log_lines: list[str] = []
    log_path = out / "train_log.txt"
    t0 = time.perf_counter()

    for it in range(1, config.iterations + 1):
        idxs = rng.integers(0, len(samples), size=config.batch_size)
        batch = [augment_flip(samples[i], rng) for i in idxs]
        x, y, mask = _batch_arrays(batch, net.dtype)
        attn = [s.attention for s in batch] if config.variant.be_active else None
        logits = forward(net, Tensor(x), attn, mode="train")
        loss = bce_loss(logits, y, mask)
        value = float(loss.data)
        if not np.isfinite(value):
            raise RuntimeError(f"non-finite loss {value} at iteration {it}; "
                               f"batch indices {idxs.tolist()}")
        losses[it - 1] = value
        backward(loss)
        adam_step(net.params, adam, config)
        net.zero_grad()
        if it % 50 == 0:
            line = f"{it}\t{value:.6f}\t{time.perf_counter() - t0:.2f}"
            log_lines.append(line)
        if config.checkpoint_every and it % config.checkpoint_every == 0:
            moments = {n: (adam.m[n], adam.v[n]) for n in net.params}
            save_checkpoint(checkpoint_from_network(net, config.attention, it, moments, adam.t),
                            out / f"ckpt_{it:06d}.bin")

    seconds = time.perf_counter() - t0
    log_path.write_text("\n".join(log_lines) + ("\n" if log_lines else ""))
    moments = {n: (adam.m[n], adam.v[n]) for n in net.params} if adam.t else None
    final = out / "ckpt_final.bin"
    save_checkpoint(checkpoint_from_network(net, config.attention, config.iterations, moments, adam.t),
                    final)
    return TrainResult(losses=losses, final_checkpoint=final, log_path=log_path,
                       net=net, seconds=seconds)


def predict_sample(net: Network, sample: Sample, attention_params: Optional[AttentionParams] = None) -> np.ndarray:
    """Probability field at the sample's original extents (pads, infers, crops)."""
    div = 2 ** (net.config.depth - 1)
    padded = pad_to_divisible(sample, div)
    attn = None
    if net.variant.be_active:
        params = attention_params if attention_params is not None else AttentionParams()
        attn = [image_attention(padded.image.data[0, 0].astype(np.float64), params)]
    with no_grad():
        logits = forward(net, padded.image, attn, mode="infer")
        probs = sigmoid(logits).data[0, 0]
    return crop_back(probs, padded.pad_record)
