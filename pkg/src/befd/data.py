"""Dataset plumbing: manifests, preprocessing, augmentation, pad/crop.

Preprocessing order for a raw image: green channel (if RGB), CLAHE, scale to
[0,1].  The attention map is computed once from the preprocessed field and
rides along with the sample so augmentation can flip it together with the
pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .clahe import clahe
from .edge import AttentionMap, AttentionParams, image_attention
from .pnm import ImageU8, from_array, read_pnm
from .tensor import Tensor


@dataclass(frozen=True)
class PadRecord:
    orig_h: int
    orig_w: int
    pad_bottom: int
    pad_right: int


@dataclass
class Sample:
    """One image with its label, optional field-of-view mask, and extras."""

    image: Tensor  # 1 x C x H x W in [0,1]
    label: np.ndarray  # uint8 {0,1}, H x W
    mask: Optional[np.ndarray] = None  # uint8 {0,1}, H x W
    pad_record: Optional[PadRecord] = None
    attention: Optional[AttentionMap] = None
    ident: str = ""

    def __post_init__(self):
        hw = self.image.data.shape[2:]
        if self.label.shape != hw:
            raise ValueError(f"label extents {self.label.shape} do not match image {hw}")
        if self.mask is not None and self.mask.shape != hw:
            raise ValueError(f"mask extents {self.mask.shape} do not match image {hw}")
        bad = np.setdiff1d(np.unique(self.label), [0, 1])
        if bad.size:
            raise ValueError(f"label contains values other than 0/1: {bad[:4]}")


@dataclass(frozen=True)
class ManifestRecord:
    image_path: Path
    label_path: Path
    mask_path: Optional[Path] = None


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]
    split: str = "train"

    def __post_init__(self):
        if not self.records:
            raise ValueError("manifest is empty")

    def __len__(self):
        return len(self.records)


def write_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> None:
    lines = []
    for r in manifest.records:
        parts = [str(r.image_path), str(r.label_path)]
        if r.mask_path is not None:
            parts.append(str(r.mask_path))
        lines.append("\t".join(parts))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: Union[str, Path], split: str = "train") -> DatasetManifest:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"manifest not found: {p}")
    base = p.parent
    records = []
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ValueError(f"{p}:{lineno}: expected 2 or 3 tab-separated paths, got {len(parts)}")
        paths = [base / q if not Path(q).is_absolute() else Path(q) for q in parts]
        records.append(ManifestRecord(paths[0], paths[1], paths[2] if len(parts) == 3 else None))
    return DatasetManifest(records=tuple(records), split=split)


def normalize(image: ImageU8) -> Tensor:
    """Green channel (for RGB) scaled to [0,1], as a 1x1xHxW tensor."""
    if image.channels == 3:
        chan = image.pixels[:, :, 1]
    elif image.channels == 1:
        chan = image.pixels
    else:
        raise ValueError(f"expected 1 or 3 channels, got {image.channels}")
    return Tensor((chan.astype(np.float32) / 255.0)[None, None])


def preprocess(image: ImageU8, tiles: tuple[int, int] = (8, 8), clip_limit: float = 2.0) -> Tensor:
    """Green channel -> CLAHE -> [0,1]."""
    if image.channels == 3:
        gray = from_array(image.pixels[:, :, 1])
    else:
        gray = image
    return normalize(clahe(gray, tiles=tiles, clip_limit=clip_limit))


def load_sample(record: ManifestRecord, attention_params: Optional[AttentionParams] = None,
                apply_clahe: bool = True) -> Sample:
    img = read_pnm(record.image_path)
    lbl_img = read_pnm(record.label_path)
    if lbl_img.channels != 1:
        raise ValueError(f"{record.label_path}: labels must be single-channel")
    label = (lbl_img.pixels >= 128).astype(np.uint8)
    mask = None
    if record.mask_path is not None:
        m = read_pnm(record.mask_path)
        if m.channels != 1:
            raise ValueError(f"{record.mask_path}: masks must be single-channel")
        mask = (m.pixels >= 128).astype(np.uint8)
    tens = preprocess(img) if apply_clahe else normalize(img)
    attn = None
    if attention_params is not None:
        attn = image_attention(tens.data[0, 0].astype(np.float64), attention_params)
    return Sample(image=tens, label=label, mask=mask, attention=attn,
                  ident=Path(record.image_path).stem)


def augment_flip(sample: Sample, rng: np.random.Generator) -> Sample:
    """Flip horizontally then vertically, each with independent probability 0.5."""
    do_h = rng.random() < 0.5
    do_v = rng.random() < 0.5
    if not do_h and not do_v:
        return sample
    axes = []
    if do_h:
        axes.append(-1)
    if do_v:
        axes.append(-2)

    def flip2d(a):
        return np.ascontiguousarray(np.flip(a, axis=axes))

    attn = sample.attention
    if attn is not None:
        attn = AttentionMap(weights=flip2d(attn.weights), source_dims=attn.source_dims)
    return Sample(image=Tensor(np.flip(sample.image.data, axis=axes).copy()),
                  label=flip2d(sample.label),
                  mask=None if sample.mask is None else flip2d(sample.mask),
                  pad_record=sample.pad_record,
                  attention=attn,
                  ident=sample.ident)


def pad_to_divisible(sample: Sample, divisor: int) -> Sample:
    """Reflection-pad right/bottom to the next multiple of divisor.

    Labels and masks pad with zeros; a previously absent mask becomes all-ones
    over the original region so padded pixels stay out of evaluation.
    """
    if divisor < 1 or divisor & (divisor - 1):
        raise ValueError(f"divisor must be a power of two, got {divisor}")
    h, w = sample.label.shape
    pad_b = (-h) % divisor
    pad_r = (-w) % divisor
    rec = PadRecord(orig_h=h, orig_w=w, pad_bottom=pad_b, pad_right=pad_r)
    if pad_b == 0 and pad_r == 0:
        return replace(sample, pad_record=rec) if sample.pad_record is None else sample

    mode = "reflect" if h > 1 and w > 1 else "edge"
    img = np.pad(sample.image.data, ((0, 0), (0, 0), (0, pad_b), (0, pad_r)), mode=mode)
    label = np.pad(sample.label, ((0, pad_b), (0, pad_r)))
    mask = sample.mask if sample.mask is not None else np.ones((h, w), dtype=np.uint8)
    mask = np.pad(mask, ((0, pad_b), (0, pad_r)))
    attn = sample.attention
    if attn is not None:
        aw = np.pad(attn.weights, ((0, pad_b), (0, pad_r)), mode=mode)
        attn = AttentionMap(weights=aw, source_dims=(img.shape[2], img.shape[3]))
    return Sample(image=Tensor(img), label=label, mask=mask, pad_record=rec,
                  attention=attn, ident=sample.ident)


def crop_back(field: np.ndarray, rec: PadRecord) -> np.ndarray:
    """Undo pad_to_divisible on a 2-d field."""
    return field[:rec.orig_h, :rec.orig_w]
