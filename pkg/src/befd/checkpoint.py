"""Binary checkpoints: network parameters, BN stats, optional Adam moments.

Layout (all integers little-endian):
  magic "BEFD" | u32 record type 2 | u32 format version 1
  u32 header length | header bytes ("key=value\\n" lines echoing the config)
  u32 entry count
  per entry: u16 name length | name | u8 ndim | u32 dims... | u8 dtype code
             (0 = float32, 1 = float64) | raw payload
  u32 CRC-32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .edge import AttentionParams
from .network import Network, NetworkVariant, UNetConfig, build

MAGIC = b"BEFD"
RECORD_CHECKPOINT = 2
FORMAT_VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES_BY_KIND = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


@dataclass
class Checkpoint:
    config: UNetConfig
    variant: NetworkVariant
    attention: AttentionParams
    iteration: int
    entries: dict[str, np.ndarray]
    bn_initialized: bool = False
    adam_t: int = 0


class CheckpointError(ValueError):
    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.offset = offset


def _header_text(ckpt: Checkpoint) -> str:
    cfg = ckpt.config
    att = ckpt.attention
    pairs = [
        ("depth", cfg.depth),
        ("base_channels", cfg.base_channels),
        ("in_channels", cfg.in_channels),
        ("out_channels", cfg.out_channels),
        ("be_levels", ",".join(map(str, cfg.be_levels))),
        ("fd_skips", ",".join(map(str, cfg.fd_skips))),
        ("variant", ckpt.variant.value),
        ("lambda_min", repr(att.lambda_min)),
        ("lambda_max", repr(att.lambda_max)),
        ("alpha", repr(att.alpha)),
        ("beta", repr(att.beta)),
        ("iteration", ckpt.iteration),
        ("bn_initialized", int(ckpt.bn_initialized)),
        ("adam_t", ckpt.adam_t),
    ]
    return "".join(f"{k}={v}\n" for k, v in pairs)


def _parse_header(text: str, path) -> dict[str, str]:
    kv = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise CheckpointError(path, 0, f"malformed header line {line!r}")
        k, _, v = line.partition("=")
        kv[k] = v
    return kv


def _intlist(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",")) if s else ()


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", RECORD_CHECKPOINT, FORMAT_VERSION)
    header = _header_text(ckpt).encode()
    out += struct.pack("<I", len(header))
    out += header
    out += struct.pack("<I", len(ckpt.entries))
    for name, arr in ckpt.entries.items():
        nb = name.encode()
        a = np.ascontiguousarray(arr)
        if a.dtype not in _CODES_BY_KIND:
            raise ValueError(f"entry {name}: unsupported dtype {a.dtype}")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", a.ndim)
        for d in a.shape:
            out += struct.pack("<I", d)
        code = _CODES_BY_KIND[a.dtype]
        out += struct.pack("<B", code)
        out += a.astype(_DTYPE_CODES[code]).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    buf = Path(path).read_bytes()
    if len(buf) < 16:
        raise CheckpointError(path, len(buf), "file too short for a checkpoint header")
    stored_crc = struct.unpack("<I", buf[-4:])[0]
    actual_crc = zlib.crc32(buf[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CheckpointError(path, len(buf) - 4,
                              f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}")
    if buf[:4] != MAGIC:
        raise CheckpointError(path, 0, f"bad magic {buf[:4]!r}")
    rtype, version = struct.unpack("<II", buf[4:12])
    if rtype != RECORD_CHECKPOINT:
        raise CheckpointError(path, 4, f"record type {rtype} is not a checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointError(path, 8, f"unsupported format version {version}")
    pos = 12
    (hlen,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if pos + hlen > len(buf) - 4:
        raise CheckpointError(path, pos, "header extends past end of file")
    kv = _parse_header(buf[pos:pos + hlen].decode(), path)
    pos += hlen
    try:
        config = UNetConfig(depth=int(kv["depth"]), base_channels=int(kv["base_channels"]),
                            in_channels=int(kv["in_channels"]), out_channels=int(kv["out_channels"]),
                            be_levels=_intlist(kv["be_levels"]), fd_skips=_intlist(kv["fd_skips"]))
        variant = NetworkVariant.parse(kv["variant"])
        attention = AttentionParams(lambda_min=float(kv["lambda_min"]), lambda_max=float(kv["lambda_max"]),
                                    alpha=float(kv["alpha"]), beta=float(kv["beta"]))
        iteration = int(kv["iteration"])
        bn_init = bool(int(kv.get("bn_initialized", "0")))
        adam_t = int(kv.get("adam_t", "0"))
    except KeyError as e:
        raise CheckpointError(path, 16, f"header is missing key {e.args[0]!r}") from None

    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 2 > len(buf) - 4:
            raise CheckpointError(path, pos, "truncated entry name length")
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        if name in entries:
            raise CheckpointError(path, pos, f"duplicate entry name {name!r}")
        if pos + 1 > len(buf) - 4:
            raise CheckpointError(path, pos, f"truncated entry {name!r}")
        ndim = buf[pos]
        pos += 1
        if pos + 4 * ndim + 1 > len(buf) - 4:
            raise CheckpointError(path, pos, f"truncated dims of entry {name!r}")
        dims = struct.unpack_from(f"<{ndim}I", buf, pos) if ndim else ()
        pos += 4 * ndim
        code = buf[pos]
        pos += 1
        if code not in _DTYPE_CODES:
            raise CheckpointError(path, pos - 1, f"entry {name!r}: unknown dtype code {code}")
        dt = _DTYPE_CODES[code]
        n_items = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        nbytes = n_items * dt.itemsize
        if pos + nbytes > len(buf) - 4:
            raise CheckpointError(path, pos, f"truncated payload of entry {name!r}")
        arr = np.frombuffer(buf, dtype=dt, count=n_items, offset=pos).reshape(dims)
        entries[name] = arr.astype(arr.dtype.newbyteorder("="))
        pos += nbytes
    if pos != len(buf) - 4:
        raise CheckpointError(path, pos, f"{len(buf) - 4 - pos} unexpected trailing bytes before checksum")
    return Checkpoint(config=config, variant=variant, attention=attention, iteration=iteration,
                      entries=entries, bn_initialized=bn_init, adam_t=adam_t)


def checkpoint_from_network(net: Network, attention: AttentionParams, iteration: int,
                            adam_moments: Optional[dict[str, tuple[np.ndarray, np.ndarray]]] = None,
                            adam_t: int = 0) -> Checkpoint:
    entries: dict[str, np.ndarray] = {}
    for name, t in net.params.items():
        entries[name] = t.data
    bn_init = False
    for name, st in net.bn_states.items():
        entries[f"{name}.running_mean"] = st.mean
        entries[f"{name}.running_var"] = st.var
        bn_init = bn_init or st.initialized
    if adam_moments:
        for name, (m, v) in adam_moments.items():
            entries[f"adam.m.{name}"] = m
            entries[f"adam.v.{name}"] = v
    return Checkpoint(config=net.config, variant=net.variant, attention=attention,
                      iteration=iteration, entries=entries, bn_initialized=bn_init,
                      adam_t=adam_t)


def network_from_checkpoint(ckpt: Checkpoint, dtype=np.float32) -> Network:
    """Rebuild the architecture in the header and load its state."""
    net = build(ckpt.config, ckpt.variant, seed=0, dtype=dtype)
    restore_network(net, ckpt)
    return net


def restore_network(net: Network, ckpt: Checkpoint) -> None:
    """Load checkpoint state into an already-built compatible network."""
    if net.config != ckpt.config or net.variant != ckpt.variant:
        raise ValueError(f"checkpoint architecture ({ckpt.variant.value}, {ckpt.config}) does not "
                         f"match the requested network ({net.variant.value}, {net.config})")
    for name, t in net.params.items():
        if name not in ckpt.entries:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        arr = ckpt.entries[name]
        if arr.shape != t.data.shape:
            raise ValueError(f"parameter {name!r}: checkpoint shape {arr.shape} != {t.data.shape}")
        t.data = np.ascontiguousarray(arr.astype(t.data.dtype))
    for name, st in net.bn_states.items():
        for suffix, attr in ((".running_mean", "mean"), (".running_var", "var")):
            key = name + suffix
            if key not in ckpt.entries:
                raise ValueError(f"checkpoint is missing BN statistic {key!r}")
            setattr(st, attr, np.ascontiguousarray(ckpt.entries[key].astype(getattr(st, attr).dtype)))
        st.initialized = ckpt.bn_initialized
