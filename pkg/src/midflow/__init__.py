"""Video frame interpolation via coarse-to-fine intermediate optical flow.

A pure-NumPy library: differentiable warping/convolution primitives with a
small reverse-mode autodiff, a pyramid-feature + coarse-to-fine flow
cascade network, the three-term training objective with flow distillation,
synthetic scene generation with exact ground-truth flows, quality metrics,
and deterministic training with checkpointing.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    ContractViolation,
    DataError,
    TrainingDiverged,
)
from .evaluate import MetricReport, ablation_suite, evaluate, multiframe
from .losses import (
    LossWeights,
    build_teacher_multiscale,
    flow_loss,
    rec_loss,
    smooth_loss,
    total_loss,
)
from .metrics import epe, interpolation_error, psnr, ssim
from .model import (
    CascadeOutput,
    ModelConfig,
    cascade_forward,
    config_fingerprint,
    init_params,
    parameter_count,
    pyramid_features,
)
from .ops import fuse, rescale_flow, resize_bilinear, spatial_gradient_l1, warp
from .synth import (
    SceneDistribution,
    SceneSpec,
    Sprite,
    Triplet,
    dataset,
    ingest_triplet_dir,
    make_triplet,
    overfit_pack,
    render_scene,
)
from .train import TrainConfig, checkpoint_load, checkpoint_save, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "CascadeOutput",
    "CheckpointError",
    "ConfigError",
    "ContractViolation",
    "DataError",
    "LossWeights",
    "MetricReport",
    "ModelConfig",
    "SceneDistribution",
    "SceneSpec",
    "Sprite",
    "TrainConfig",
    "TrainingDiverged",
    "Triplet",
    "ablation_suite",
    "build_teacher_multiscale",
    "cascade_forward",
    "checkpoint_load",
    "checkpoint_save",
    "config_fingerprint",
    "dataset",
    "epe",
    "evaluate",
    "flow_loss",
    "fuse",
    "ingest_triplet_dir",
    "init_params",
    "interpolation_error",
    "lr_at",
    "make_triplet",
    "multiframe",
    "overfit_pack",
    "parameter_count",
    "psnr",
    "pyramid_features",
    "rec_loss",
    "render_scene",
    "rescale_flow",
    "resize_bilinear",
    "smooth_loss",
    "spatial_gradient_l1",
    "ssim",
    "total_loss",
    "train",
    "warp",
]
