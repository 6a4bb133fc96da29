"""Dense NCHW tensors with reverse-mode automatic differentiation.

The graph is a plain tape: every operation returns a new ``Tensor`` holding a
closure that knows how to push a gradient into its parents.  ``backward`` runs
the closures in reverse topological order, accumulating additively on fan-out.
A tape can be walked once; the second attempt raises.

Heavy inner loops (convolutions, pooling, resize) are delegated to the active
kernel backend, see ``befd.backend``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import backend

_FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True
_nan_checks = False


def set_nan_checks(enabled: bool) -> None:
    """Toggle the debug check that every op output is finite."""
    global _nan_checks
    _nan_checks = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Context that disables tape recording (inference / statistics updates)."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


class Tensor:
    """A contiguous float array plus optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # keeps 0-d scalars 0-d
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._consumed = False
        self._op = "leaf"

    # -- conveniences -------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


def record(data: np.ndarray, parents: Sequence[Tensor],
           backward: Callable[[np.ndarray], None], op: str = "custom") -> Tensor:
    """Create an op-output tensor.

    ``backward(grad_out)`` must push gradients into the parents via
    ``accumulate``.  This is the extension point for ops defined outside this
    module (losses, the denoising transform).
    """
    if _nan_checks and not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values in output of {op!r}")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad`` (allocating on first touch)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar.  Consumes the tape."""
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar, got shape {loss.data.shape}")
    if loss._consumed:
        raise RuntimeError("tape already consumed; build a fresh forward pass before calling backward again")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._parents:  # leaves are reusable across graphs
            if node._consumed:
                raise RuntimeError("tape already consumed; build a fresh forward pass before calling backward again")
            node._consumed = True
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            node._backward = None


# ---------------------------------------------------------------------------
# shape / validation helpers

def _require_nchw(x: Tensor, op: str) -> None:
    if x.data.ndim != 4:
        raise ValueError(f"{op}: expected NCHW input, got {x.data.ndim}-d shape {x.data.shape}")


def _broadcast_kind(a: Tensor, b: Tensor, op: str) -> str:
    """'same' for equal shapes, 'map' when b is a 1-channel NCHW broadcast."""
    if a.data.shape == b.data.shape:
        return "same"
    if (a.data.ndim == 4 and b.data.ndim == 4
            and b.data.shape[1] == 1
            and b.data.shape[0] == a.data.shape[0]
            and b.data.shape[2:] == a.data.shape[2:]):
        return "map"
    raise ValueError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not broadcast "
                     "(equal shapes or a 1-channel NCHW map are supported)")


def _same_dtype(op: str, *ts: Tensor) -> None:
    dts = {t.data.dtype for t in ts}
    if len(dts) > 1:
        raise TypeError(f"{op}: mixed element widths {sorted(d.name for d in dts)}")


# ---------------------------------------------------------------------------
# convolution family

def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, padding: int = 0) -> Tensor:
    _require_nchw(x, "conv2d")
    if w.data.ndim != 4:
        raise ValueError(f"conv2d: weight must be [Cout,Cin,kh,kw], got shape {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(f"conv2d: input has {x.data.shape[1]} channels but weight expects {w.data.shape[1]}")
    _same_dtype("conv2d", *( (x, w, b) if b is not None else (x, w) ))
    kh, kw = w.data.shape[2], w.data.shape[3]
    ho = x.data.shape[2] + 2 * padding - kh + 1
    wo = x.data.shape[3] + 2 * padding - kw + 1
    if ho <= 0 or wo <= 0:
        raise ValueError(f"conv2d: output spatial size {ho}x{wo} is empty for input "
                         f"{x.data.shape[2]}x{x.data.shape[3]}, kernel {kh}x{kw}, padding {padding}")
    if b is not None and b.data.shape != (w.data.shape[0],):
        raise ValueError(f"conv2d: bias shape {b.data.shape} does not match {w.data.shape[0]} output channels")
    K = backend.kernels()
    out = K.conv2d_fwd(x.data, w.data, padding)
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)

    parents = (x, w) if b is None else (x, w, b)

    def push(g: np.ndarray) -> None:
        Kb = backend.kernels()
        if x.requires_grad:
            wt = np.ascontiguousarray(w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
            accumulate(x, Kb.conv2d_fwd(np.ascontiguousarray(g), wt, kh - 1 - padding))
        if w.requires_grad:
            accumulate(w, Kb.conv2d_bwd_weight(np.ascontiguousarray(g), x.data, padding, kh, kw))
        if b is not None and b.requires_grad:
            accumulate(b, g.sum(axis=(0, 2, 3)))

    return record(out, parents, push, "conv2d")


def conv_transpose2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    _require_nchw(x, "conv_transpose2d")
    if w.data.ndim != 4 or w.data.shape[2:] != (2, 2):
        raise ValueError(f"conv_transpose2d: weight must be [Cin,Cout,2,2], got shape {w.data.shape}")
    if x.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"conv_transpose2d: input has {x.data.shape[1]} channels but weight expects {w.data.shape[0]}")
    _same_dtype("conv_transpose2d", *( (x, w, b) if b is not None else (x, w) ))
    if b is not None and b.data.shape != (w.data.shape[1],):
        raise ValueError(f"conv_transpose2d: bias shape {b.data.shape} does not match "
                         f"{w.data.shape[1]} output channels")
    K = backend.kernels()
    out = K.convt2d_fwd(x.data, w.data)
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)

    parents = (x, w) if b is None else (x, w, b)

    def push(g: np.ndarray) -> None:
        Kb = backend.kernels()
        gc = np.ascontiguousarray(g)
        if x.requires_grad:
            accumulate(x, Kb.convt2d_bwd_input(gc, w.data))
        if w.requires_grad:
            accumulate(w, Kb.convt2d_bwd_weight(gc, x.data))
        if b is not None and b.requires_grad:
            accumulate(b, g.sum(axis=(0, 2, 3)))

    return record(out, parents, push, "conv_transpose2d")


def maxpool2d(x: Tensor) -> Tensor:
    _require_nchw(x, "maxpool2d")
    n, c, h, w = x.data.shape
    if h % 2:
        raise ValueError(f"maxpool2d: height {h} is odd")
    if w % 2:
        raise ValueError(f"maxpool2d: width {w} is odd")
    K = backend.kernels()
    out, idx = K.maxpool2d_fwd(x.data)

    def push(g: np.ndarray) -> None:
        accumulate(x, backend.kernels().maxpool2d_bwd(np.ascontiguousarray(g), idx))

    return record(out, (x,), push, "maxpool2d")


# ---------------------------------------------------------------------------
# batch normalization

class BNState:
    """Running statistics for one batch-norm layer."""

    __slots__ = ("mean", "var", "initialized")

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.initialized = False


BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BNState, mode: str) -> Tensor:
    _require_nchw(x, "batchnorm2d")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError(f"batchnorm2d: gamma/beta must have shape ({c},), got "
                         f"{gamma.data.shape} and {beta.data.shape}")
    _same_dtype("batchnorm2d", x, gamma, beta)
    if mode not in ("train", "infer"):
        raise ValueError(f"batchnorm2d: mode must be 'train' or 'infer', got {mode!r}")
    n, _, h, w = x.data.shape
    count = n * h * w
    dt = x.data.dtype

    if mode == "train":
        if count < 2:
            raise ValueError(f"batchnorm2d: train mode needs at least 2 values per channel, got {count}")
        m = x.data.mean(axis=(0, 2, 3))
        v = x.data.var(axis=(0, 2, 3))
        state.mean = (BN_MOMENTUM * state.mean + (1.0 - BN_MOMENTUM) * m).astype(state.mean.dtype)
        state.var = (BN_MOMENTUM * state.var + (1.0 - BN_MOMENTUM) * v).astype(state.var.dtype)
        state.initialized = True
    else:
        if not state.initialized:
            raise RuntimeError("batchnorm2d: infer mode requested before any running statistics exist")
        m = state.mean.astype(dt)
        v = state.var.astype(dt)

    invstd = 1.0 / np.sqrt(v + dt.type(BN_EPS))
    xhat = (x.data - m.reshape(1, -1, 1, 1)) * invstd.reshape(1, -1, 1, 1)
    out = gamma.data.reshape(1, -1, 1, 1) * xhat + beta.data.reshape(1, -1, 1, 1)

    def push(g: np.ndarray) -> None:
        if gamma.requires_grad:
            accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            accumulate(beta, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gs = gamma.data.reshape(1, -1, 1, 1) * invstd.reshape(1, -1, 1, 1)
            if mode == "train":
                gm = g.mean(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
                gxm = (g * xhat).mean(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
                accumulate(x, gs * (g - gm - xhat * gxm))
            else:
                accumulate(x, gs * g)

    return record(out, (x, gamma, beta), push, "batchnorm2d")


# ---------------------------------------------------------------------------
# resize (constant maps only; no gradient)

def bilinear_resize(x: Tensor, target_h: int, target_w: int) -> Tensor:
    _require_nchw(x, "bilinear_resize")
    if target_h < 1 or target_w < 1:
        raise ValueError(f"bilinear_resize: target extents must be >= 1, got {target_h}x{target_w}")
    if x.requires_grad:
        raise ValueError("bilinear_resize is not differentiable; it only accepts constant inputs")
    out = backend.kernels().bilinear_resize(x.data, target_h, target_w)
    return record(out, (), lambda g: None, "bilinear_resize")


# ---------------------------------------------------------------------------
# elementwise ops

def add(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b, "add")
    _same_dtype("add", a, b)
    out = a.data + b.data

    def push(g: np.ndarray) -> None:
        accumulate(a, g)
        if b.requires_grad:
            accumulate(b, g if kind == "same" else g.sum(axis=1, keepdims=True))

    return record(out, (a, b), push, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b, "mul")
    _same_dtype("mul", a, b)
    out = a.data * b.data

    def push(g: np.ndarray) -> None:
        if a.requires_grad:
            accumulate(a, g * b.data)
        if b.requires_grad:
            gb = g * a.data
            accumulate(b, gb if kind == "same" else gb.sum(axis=1, keepdims=True))

    return record(out, (a, b), push, "mul")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def push(g: np.ndarray) -> None:
        accumulate(x, g * (x.data > 0))

    return record(out, (x,), push, "relu")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def push(g: np.ndarray) -> None:
        accumulate(x, g * out * (1.0 - out))

    return record(out, (x,), push, "sigmoid")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _require_nchw(a, "concat_channels")
    _require_nchw(b, "concat_channels")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ValueError(f"concat_channels: shapes {a.data.shape} and {b.data.shape} "
                         "differ outside the channel axis")
    _same_dtype("concat_channels", a, b)
    ca = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def push(g: np.ndarray) -> None:
        accumulate(a, g[:, :ca])
        accumulate(b, g[:, ca:])

    return record(out, (a, b), push, "concat_channels")


def reduce_mean(x: Tensor) -> Tensor:
    if x.data.size == 0:
        raise ValueError("reduce_mean: empty tensor")
    out = x.data.mean(dtype=x.data.dtype)
    n = x.data.size

    def push(g: np.ndarray) -> None:
        accumulate(x, np.full_like(x.data, g.item() / n))

    return record(np.asarray(out), (x,), push, "reduce_mean")
