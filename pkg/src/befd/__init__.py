"""Retinal/vessel segmentation with boundary attention and feature denoising.

A self-contained numpy implementation: reverse-mode autodiff over the handful
of ops an encoder-decoder segmenter needs, gradient-based edge attention,
non-local feature denoising on skip connections, a CLAHE preprocessing
pipeline, a synthetic dataset generator, and training/evaluation tooling.
Hot kernels run through numba when available (see ``befd.backend``).
"""

from .backend import active_backend, set_backend, set_threads, use_backend
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    checkpoint_from_network,
    load_checkpoint,
    network_from_checkpoint,
    restore_network,
    save_checkpoint,
)
from .clahe import clahe
from .data import (
    DatasetManifest,
    ManifestRecord,
    Sample,
    augment_flip,
    crop_back,
    load_sample,
    normalize,
    pad_to_divisible,
    preprocess,
    read_manifest,
    write_manifest,
)
from .denoise import DenoiseBlock, denoise_forward, nonlocal_bruteforce, nonlocal_means_dot
from .edge import (
    AttentionMap,
    AttentionParams,
    SobelGradients,
    apply_attention,
    attention_pyramid,
    attention_transform,
    image_attention,
    sobel,
)
from .gradcheck import GradCheckReport, grad_check
from .metrics import (
    ConfusionCounts,
    MetricsReport,
    auc,
    basic_metrics,
    confusion,
    evaluate_image,
    evaluate_set,
    metrics_csv,
    thin_vessel_mask,
    write_metrics_csv,
)
from .network import Network, NetworkVariant, UNetConfig, build, forward, param_count
from .pnm import ImageU8, PnmParseError, from_array, read_pnm, write_pnm
from .rasters import read_float_raster, to_u8_visualization, write_float_raster
from .synth import synth_generate
from .tensor import (
    BNState,
    Tensor,
    add,
    backward,
    batchnorm2d,
    bilinear_resize,
    concat_channels,
    conv2d,
    conv_transpose2d,
    maxpool2d,
    mul,
    no_grad,
    reduce_mean,
    relu,
    set_nan_checks,
    sigmoid,
)
from .trainer import AdamState, TrainConfig, TrainResult, adam_step, bce_loss, predict_sample, train_loop
from .verify import format_results, run_suite

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "adam_step",
    "AdamState",
    "add",
    "apply_attention",
    "attention_pyramid",
    "attention_transform",
    "AttentionMap",
    "AttentionParams",
    "auc",
    "augment_flip",
    "backward",
    "basic_metrics",
    "batchnorm2d",
    "bce_loss",
    "bilinear_resize",
    "BNState",
    "build",
    "Checkpoint",
    "checkpoint_from_network",
    "CheckpointError",
    "clahe",
    "concat_channels",
    "confusion",
    "ConfusionCounts",
    "conv2d",
    "conv_transpose2d",
    "crop_back",
    "DatasetManifest",
    "denoise_forward",
    "DenoiseBlock",
    "evaluate_image",
    "evaluate_set",
    "format_results",
    "forward",
    "from_array",
    "grad_check",
    "GradCheckReport",
    "image_attention",
    "ImageU8",
    "load_checkpoint",
    "load_sample",
    "ManifestRecord",
    "maxpool2d",
    "metrics_csv",
    "MetricsReport",
    "mul",
    "Network",
    "network_from_checkpoint",
    "NetworkVariant",
    "no_grad",
    "nonlocal_bruteforce",
    "nonlocal_means_dot",
    "normalize",
    "pad_to_divisible",
    "param_count",
    "PnmParseError",
    "predict_sample",
    "preprocess",
    "read_float_raster",
    "read_manifest",
    "read_pnm",
    "reduce_mean",
    "relu",
    "restore_network",
    "run_suite",
    "Sample",
    "save_checkpoint",
    "set_backend",
    "set_nan_checks",
    "set_threads",
    "sigmoid",
    "sobel",
    "SobelGradients",
    "synth_generate",
    "Tensor",
    "thin_vessel_mask",
    "to_u8_visualization",
    "train_loop",
    "TrainConfig",
    "TrainResult",
    "UNetConfig",
    "use_backend",
    "write_float_raster",
    "write_manifest",
    "write_metrics_csv",
    "write_pnm",
]
