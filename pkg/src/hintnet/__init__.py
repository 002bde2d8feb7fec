"""Pose regression with hint inputs and recurrent inference, on a small numpy autodiff engine."""

from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .geometry import (
    AERIAL,
    LINE,
    TERRESTRIAL,
    Pose6D,
    PosePlanar,
    PoseWhitening,
    Whitener,
    dewhiten,
    fit_whitener,
    heading_error,
    normalize_heading,
    normalize_quaternion,
    quat_angular_error,
    whiten,
)
from .loss import UncertaintyWeights, aerial_pose_loss, layout_loss, pose_loss
from .models import (
    BASELINE,
    HINTED_EMBEDDING,
    HINTED_RESIDUAL,
    EncoderConfig,
    HintConfig,
    HintedModel,
    build_model,
    recurrent_infer,
    recurrent_infer_batch,
    sample_training_hint,
    sample_uninformed_hint,
)
from .training import (
    EvalReport,
    ModeReport,
    TrainConfig,
    evaluate,
    hint_scale_sweep,
    mode_metrics,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AERIAL",
    "BASELINE",
    "HINTED_EMBEDDING",
    "HINTED_RESIDUAL",
    "LINE",
    "TERRESTRIAL",
    "CheckpointError",
    "EncoderConfig",
    "EvalReport",
    "HintConfig",
    "HintedModel",
    "ModeReport",
    "Pose6D",
    "PosePlanar",
    "PoseWhitening",
    "TrainConfig",
    "UncertaintyWeights",
    "Whitener",
    "aerial_pose_loss",
    "build_model",
    "dewhiten",
    "evaluate",
    "fit_whitener",
    "heading_error",
    "hint_scale_sweep",
    "layout_loss",
    "load_checkpoint",
    "mode_metrics",
    "normalize_heading",
    "normalize_quaternion",
    "pose_loss",
    "quat_angular_error",
    "read_checkpoint",
    "recurrent_infer",
    "recurrent_infer_batch",
    "sample_training_hint",
    "sample_uninformed_hint",
    "save_checkpoint",
    "train",
    "whiten",
]
