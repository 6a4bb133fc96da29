"""Kernel backend selection.

Hot numeric kernels exist twice: a numba @njit implementation
(``befd._kernels_nb``) and a vectorized pure-numpy fallback
(``befd._kernels_np``). Both expose the same function surface and produce
the same results up to floating-point reduction order.

Selection, in order of precedence:
  1. an explicit ``use_backend(...)`` context / ``set_backend(...)`` call,
  2. the ``BEFD_BACKEND`` environment variable ("numba" or "numpy"),
  3. default: numba when importable, numpy otherwise.
"""

from __future__ import annotations

import contextlib
import os

_FORCED: str | None = None
_CACHED: dict[str, object] = {}


def _env_choice() -> str | None:
    val = os.environ.get("BEFD_BACKEND", "").strip().lower()
    if not val:
        return None
    if val not in ("numba", "numpy"):
        raise ValueError(f"BEFD_BACKEND must be 'numba' or 'numpy', got {val!r}")
    return val


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def active_backend() -> str:
    """Name of the kernel backend that kernels() will return."""
    if _FORCED is not None:
        return _FORCED
    env = _env_choice()
    if env is not None:
        return env
    return "numba" if numba_available() else "numpy"


def set_backend(name: str) -> None:
    """Force a backend for the rest of the process (None-like reset via 'auto')."""
    global _FORCED
    if name == "auto":
        _FORCED = None
        return
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _FORCED = name


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily force a backend (used by the benchmark and parity tests)."""
    global _FORCED
    prev = _FORCED
    set_backend(name)
    try:
        yield
    finally:
        _FORCED = prev


def kernels():
    """The module implementing the active kernel set."""
    name = active_backend()
    mod = _CACHED.get(name)
    if mod is None:
        if name == "numba":
            from befd import _kernels_nb as mod
        else:
            from befd import _kernels_np as mod
        _CACHED[name] = mod
    return mod


def set_threads(n: int) -> None:
    """Set the numba thread count for parallelized kernels.

    No effect on the numpy path (BLAS threading is controlled by the BLAS
    library's own environment variables).
    """
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if numba_available():
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def threads_from_env(default: int = 1) -> int:
    val = os.environ.get("BEFD_THREADS", "").strip()
    if not val:
        return default
    try:
        n = int(val)
    except ValueError as exc:
        raise ValueError(f"BEFD_THREADS must be an integer, got {val!r}") from exc
    if n < 1:
        raise ValueError(f"BEFD_THREADS must be >= 1, got {n}")
    return n
