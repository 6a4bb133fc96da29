"""Float raster files: 16-byte header + little-endian float32 payload.

Header: magic "BEFD", record type 1, then H and W, each a little-endian u32.
Used for edge-attention maps and probability maps, where 8-bit quantization
would destroy the values being inspected.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"BEFD"
RECORD_FLOAT_RASTER = 1


def write_float_raster(field: np.ndarray, path: Union[str, Path]) -> None:
    a = np.ascontiguousarray(field, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError(f"float raster must be 2-d, got shape {a.shape}")
    header = MAGIC + struct.pack("<III", RECORD_FLOAT_RASTER, a.shape[0], a.shape[1])
    payload = a.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_float_raster(path: Union[str, Path]) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 16:
        raise ValueError(f"{path}: too short for a raster header ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {buf[:4]!r}")
    rtype, h, w = struct.unpack("<III", buf[4:16])
    if rtype != RECORD_FLOAT_RASTER:
        raise ValueError(f"{path}: record type {rtype} is not a float raster")
    need = h * w * 4
    if len(buf) - 16 != need:
        raise ValueError(f"{path}: payload is {len(buf) - 16} bytes, expected {need}")
    return np.frombuffer(buf, dtype="<f4", count=h * w, offset=16).reshape(h, w).astype(np.float32)


def to_u8_visualization(field: np.ndarray) -> np.ndarray:
    """Min-max scale a float field into displayable uint8."""
    lo = float(field.min())
    hi = float(field.max())
    if hi <= lo:
        return np.zeros(field.shape, dtype=np.uint8)
    scaled = (field - lo) * (255.0 / (hi - lo))
    return np.floor(scaled + 0.5).clip(0, 255).astype(np.uint8)
