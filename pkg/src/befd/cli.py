"""Command-line interface: one executable, subcommand per pipeline stage.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import backend, tensor
from .bench import format_bench, run_bench
from .checkpoint import CheckpointError, load_checkpoint, network_from_checkpoint
from .clahe import clahe
from .data import Sample, normalize, preprocess, read_manifest
from .edge import AttentionParams, attention_transform, sobel
from .metrics import evaluate_set, metrics_csv, thin_vessel_mask, write_metrics_csv
from .network import NetworkVariant, UNetConfig
from .pnm import ImageU8, PnmParseError, from_array, read_pnm, write_pnm
from .rasters import read_float_raster, to_u8_visualization, write_float_raster
from .synth import synth_generate
from .tensor import Tensor
from .trainer import TrainConfig, predict_sample, train_loop
from .verify import format_results, run_suite


class UsageError(ValueError):
    """Bad flag/config values: exit code 2."""


# ---------------------------------------------------------------------------
# config file parsing (plain key=value with dotted keys)

_CONFIG_KEYS = {
    "train.iterations": int,
    "train.batch_size": int,
    "train.learning_rate": float,
    "train.adam_beta1": float,
    "train.adam_beta2": float,
    "train.adam_epsilon": float,
    "train.seed": int,
    "train.checkpoint_every": int,
    "train.variant": str,
    "unet.depth": int,
    "unet.base_channels": int,
    "unet.in_channels": int,
    "unet.out_channels": int,
    "unet.be_levels": str,
    "unet.fd_skips": str,
    "attention.lambda_min": float,
    "attention.lambda_max": float,
    "attention.alpha": float,
    "attention.beta": float,
}


def parse_config_file(path: Path) -> dict[str, object]:
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](val)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value {val!r} for {key}") from None
    return values


def _intlist(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(s).split(",") if x != "")
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {s!r}") from None


def _build_train_config(args) -> TrainConfig:
    cfg = parse_config_file(Path(args.config)) if args.config else {}

    def pick(key, flag_value, default):
        if flag_value is not None:
            return flag_value
        return cfg.get(key, default)

    try:
        variant = NetworkVariant.parse(str(pick("train.variant", args.variant, "befd-unet")))
    except ValueError as e:
        raise UsageError(str(e)) from None
    unet = UNetConfig(
        depth=int(pick("unet.depth", args.depth, 5)),
        base_channels=int(pick("unet.base_channels", args.base_channels, 64)),
        in_channels=int(cfg.get("unet.in_channels", 1)),
        out_channels=int(cfg.get("unet.out_channels", 1)),
        be_levels=_intlist(cfg.get("unet.be_levels", "3,4,5")),
        fd_skips=_intlist(cfg.get("unet.fd_skips", "1,2,3")),
    )
    attention = AttentionParams(
        lambda_min=float(cfg.get("attention.lambda_min", 0.8)),
        lambda_max=float(cfg.get("attention.lambda_max", 5.0)),
        alpha=float(cfg.get("attention.alpha", 2.0)),
        beta=float(cfg.get("attention.beta", 1.0)),
    )
    return TrainConfig(
        iterations=int(pick("train.iterations", args.iterations, 30_000)),
        batch_size=int(pick("train.batch_size", args.batch_size, 8)),
        learning_rate=float(pick("train.learning_rate", args.learning_rate, 1e-4)),
        adam_beta1=float(cfg.get("train.adam_beta1", 0.9)),
        adam_beta2=float(cfg.get("train.adam_beta2", 0.999)),
        adam_epsilon=float(cfg.get("train.adam_epsilon", 1e-8)),
        seed=int(pick("train.seed", args.seed, 0)),
        checkpoint_every=int(pick("train.checkpoint_every", args.checkpoint_every, 0)),
        variant=variant,
        unet=unet,
        attention=attention,
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    if args.count < 1:
        raise UsageError(f"--count must be >= 1, got {args.count}")
    if args.height < 32 or args.width < 32:
        raise UsageError(f"extents must be >= 32, got {args.height}x{args.width}")
    synth_generate(args.count, args.height, args.width, args.seed, args.out)
    manifest = Path(args.out) / "manifest.txt"
    print(f"wrote {args.count} image/label pairs; manifest: {manifest}")
    return 0


def _preprocess_u8(img: ImageU8) -> np.ndarray:
    """Green channel -> CLAHE -> [0,1] float64 field."""
    gray = from_array(img.pixels[:, :, 1]) if img.channels == 3 else img
    eq = clahe(gray)
    return eq.pixels.astype(np.float64) / 255.0


def cmd_edgemap(args) -> int:
    if not args.out_raw and not args.out_vis:
        raise UsageError("nothing to do: give --out-raw and/or --out-vis")
    params = AttentionParams(lambda_min=args.lambda_min, lambda_max=args.lambda_max,
                             alpha=args.alpha, beta=args.beta)
    field = _preprocess_u8(read_pnm(args.input))
    amap = attention_transform(sobel(field), params)
    print(f"attention params: lambda_min={params.lambda_min} lambda_max={params.lambda_max} "
          f"alpha={params.alpha} beta={params.beta}")
    print(f"weights: min {amap.weights.min():.4f}, max {amap.weights.max():.4f}")
    if args.out_raw:
        write_float_raster(amap.weights, args.out_raw)
        print(f"raw map: {args.out_raw}")
    if args.out_vis:
        write_pnm(from_array(to_u8_visualization(amap.weights)), args.out_vis)
        print(f"visualization: {args.out_vis}")
    return 0


def cmd_train(args) -> int:
    config = _build_train_config(args)
    manifest = read_manifest(args.data)
    print(f"variant {config.variant.value}: depth {config.unet.depth}, "
          f"base channels {config.unet.base_channels}, "
          f"BE levels {config.unet.be_levels if config.variant.be_active else 'off'}, "
          f"FD skips {config.unet.fd_skips if config.variant.fd_active else 'off'}")
    print(f"{len(manifest)} training images; {config.iterations} iterations, "
          f"batch {config.batch_size}, lr {config.learning_rate}, seed {config.seed}")
    result = train_loop(config, manifest, args.out)
    if config.iterations:
        print(f"first loss {result.losses[0]:.6f}, last loss {result.losses[-1]:.6f}, "
              f"{result.seconds:.1f}s")
    print(f"final checkpoint: {result.final_checkpoint}")
    return 0


def cmd_predict(args) -> int:
    if not args.out_prob and not args.out_bin:
        raise UsageError("nothing to do: give --out-prob and/or --out-bin")
    ckpt = load_checkpoint(args.ckpt)
    net = network_from_checkpoint(ckpt)
    img = read_pnm(args.input)
    image = normalize(img) if args.no_clahe else preprocess(img)
    h, w = image.data.shape[2:]
    sample = Sample(image=image, label=np.zeros((h, w), dtype=np.uint8))
    probs = predict_sample(net, sample, ckpt.attention)
    print(f"probabilities in [{probs.min():.4f}, {probs.max():.4f}] over {probs.shape[0]}x{probs.shape[1]}")
    if args.out_prob:
        write_float_raster(probs, args.out_prob)
        print(f"probability raster: {args.out_prob}")
    if args.out_bin:
        binary = (probs > args.threshold).astype(np.uint8) * np.uint8(255)
        write_pnm(from_array(binary), args.out_bin)
        print(f"binary map: {args.out_bin}")
    return 0


def _read_prob_field(path: str) -> np.ndarray:
    head = Path(path).read_bytes()[:2]
    if head == b"BE":
        return read_float_raster(path).astype(np.float64)
    img = read_pnm(path)
    if img.channels != 1:
        raise ValueError(f"{path}: prediction images must be single-channel")
    return img.pixels.astype(np.float64) / 255.0


def cmd_eval(args) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError(f"{len(args.pred)} predictions vs {len(args.gt)} ground truths")
    if args.mask and len(args.mask) != len(args.pred):
        raise UsageError(f"{len(args.mask)} masks vs {len(args.pred)} predictions")
    preds, gts, masks, ids = [], [], [], []
    for i, (pp, gp) in enumerate(zip(args.pred, args.gt)):
        pred = _read_prob_field(pp)
        gt = (read_pnm(gp).pixels >= 128).astype(np.uint8)
        if pred.shape != gt.shape:
            raise ValueError(f"extent mismatch between {pp} {pred.shape} and {gp} {gt.shape}")
        mask = None
        if args.mask:
            mask = (read_pnm(args.mask[i]).pixels >= 128).astype(np.uint8)
            if mask.shape != gt.shape:
                raise ValueError(f"extent mismatch between {args.mask[i]} {mask.shape} "
                                 f"and {gp} {gt.shape}")
        if args.thin_only:
            thin = thin_vessel_mask(gt)
            mask = thin.astype(np.uint8) if mask is None else (mask.astype(bool) & thin).astype(np.uint8)
        preds.append(pred)
        gts.append(gt)
        masks.append(mask)
        ids.append(Path(pp).stem)
    reports, pooled = evaluate_set(preds, gts, masks, threshold=args.threshold)
    rows = list(zip(ids, reports))
    if args.out_csv:
        write_metrics_csv(args.out_csv, rows, pooled)
        print(f"metrics: {args.out_csv}")
    else:
        print(metrics_csv(rows, pooled), end="")
    return 0


def cmd_verify(args) -> int:
    ok, results = run_suite(args.suite)
    print(format_results(results))
    return 0 if ok else 1


def cmd_bench(args) -> int:
    rows = run_bench(repeats=args.repeats)
    print(format_bench(rows))
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="befd",
                                description="vessel segmentation with boundary attention "
                                            "and feature denoising")
    p.add_argument("--threads", type=int, default=None,
                   help="numba thread count (default: BEFD_THREADS or 1)")
    p.add_argument("--backend", choices=["auto", "numba", "numpy"], default=None,
                   help="kernel backend (default: BEFD_BACKEND or auto)")
    p.add_argument("--debug-nan", action="store_true",
                   help="raise on non-finite op outputs")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic vessel dataset")
    s.add_argument("--count", type=int, required=True, help="number of images")
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("edgemap", help="compute the edge-attention map of one image")
    s.add_argument("--in", dest="input", required=True, help="input PGM/PPM")
    s.add_argument("--lambda-min", type=float, default=0.8)
    s.add_argument("--lambda-max", type=float, default=5.0)
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--out-raw", help="float raster output path")
    s.add_argument("--out-vis", help="PGM visualization output path")
    s.set_defaults(func=cmd_edgemap)

    s = sub.add_parser("train", help="train a network variant")
    s.add_argument("--config", help="key=value config file")
    s.add_argument("--data", required=True, help="training manifest path")
    s.add_argument("--variant", choices=[v.value for v in NetworkVariant], default=None)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--iterations", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--batch-size", type=int, default=None)
    s.add_argument("--learning-rate", type=float, default=None)
    s.add_argument("--base-channels", type=int, default=None)
    s.add_argument("--depth", type=int, default=None)
    s.add_argument("--checkpoint-every", type=int, default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="segment one image with a trained checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out-prob", help="float raster of probabilities")
    s.add_argument("--out-bin", help="thresholded PGM")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--no-clahe", action="store_true",
                   help="skip contrast equalization (for pre-equalized inputs)")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", help="score predictions against ground truth")
    s.add_argument("--pred", nargs="+", required=True, help="float rasters or PGMs")
    s.add_argument("--gt", nargs="+", required=True, help="label PGMs")
    s.add_argument("--mask", nargs="*", default=None, help="field-of-view PGMs")
    s.add_argument("--thin-only", action="store_true",
                   help="restrict evaluation to thin foreground structures")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out-csv", help="write CSV here instead of stdout")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("verify", help="run the correctness suites")
    s.add_argument("--suite", choices=["grad", "oracle", "all"], default="all")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bench", help="compare kernel backends")
    s.add_argument("--repeats", type=int, default=3)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    if args.backend:
        backend.set_backend(args.backend)
    if backend.numba_available():
        backend.set_threads(args.threads if args.threads else backend.threads_from_env(1))
    if args.debug_nan:
        tensor.set_nan_checks(True)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (PnmParseError, CheckpointError, FileNotFoundError, ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
