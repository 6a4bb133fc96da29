"""Binary netpbm I/O: 8-bit PGM (P5) and PPM (P6) only.

Parse failures report the byte offset where the reader gave up, which makes
truncation and header typos diagnosable without a hex dump.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


@dataclass(frozen=True)
class ImageU8:
    """8-bit image; pixels shaped (H, W) for grayscale or (H, W, 3) for RGB."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self):
        expect = (self.height, self.width) if self.channels == 1 else (self.height, self.width, self.channels)
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")
        if self.pixels.shape != expect:
            raise ValueError(f"pixel array shape {self.pixels.shape} does not match "
                             f"{self.width}x{self.height}x{self.channels}")


class PnmParseError(ValueError):
    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.offset = offset


def _next_token(buf: bytes, pos: int, path) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PnmParseError(path, pos, "unexpected end of header")
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def _next_int(buf: bytes, pos: int, path, what: str) -> tuple[int, int]:
    tok, pos = _next_token(buf, pos, path)
    try:
        val = int(tok)
    except ValueError:
        raise PnmParseError(path, pos - len(tok), f"expected integer {what}, got {tok!r}") from None
    if val <= 0:
        raise PnmParseError(path, pos - len(tok), f"{what} must be positive, got {val}")
    return val, pos


def read_pnm(path: Union[str, Path]) -> ImageU8:
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise PnmParseError(path, 0, "file too short for a netpbm header")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmParseError(path, 0, f"unsupported magic {magic!r} (binary P5/P6 only)")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    width, pos = _next_int(buf, pos, path, "width")
    height, pos = _next_int(buf, pos, path, "height")
    maxval, pos = _next_int(buf, pos, path, "maxval")
    if maxval != 255:
        raise PnmParseError(path, pos, f"maxval must be 255, got {maxval}")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PnmParseError(path, pos, "expected single whitespace after maxval")
    pos += 1
    need = width * height * channels
    if len(buf) - pos < need:
        raise PnmParseError(path, len(buf), f"payload truncated: need {need} bytes, have {len(buf) - pos}")
    flat = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    pixels = flat.reshape((height, width) if channels == 1 else (height, width, 3)).copy()
    return ImageU8(width=width, height=height, channels=channels, pixels=pixels)


def write_pnm(image: ImageU8, path: Union[str, Path]) -> None:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    Path(path).write_bytes(header + image.pixels.tobytes())


def from_array(arr: np.ndarray) -> ImageU8:
    """Wrap a uint8 (H,W) or (H,W,3) array."""
    if np.asarray(arr).dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {np.asarray(arr).dtype.name} "
                         "(scale and quantize explicitly first)")
    a = np.ascontiguousarray(arr, dtype=np.uint8)
    if a.ndim == 2:
        return ImageU8(width=a.shape[1], height=a.shape[0], channels=1, pixels=a)
    if a.ndim == 3 and a.shape[2] == 3:
        return ImageU8(width=a.shape[1], height=a.shape[0], channels=3, pixels=a)
    raise ValueError(f"expected (H,W) or (H,W,3) array, got shape {a.shape}")
