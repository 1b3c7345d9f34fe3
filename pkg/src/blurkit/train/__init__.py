"""Loss, optimizer, metrics and the training/evaluation loops."""

from .loss import FREQ_WEIGHT, frequency_l1, loss_total, restoration_loss
from .metrics import (
    MetricsRecord,
    angle_diff_deg,
    cka_similarity,
    orientation_degrees,
    psnr,
    ssim,
)
from .optim import AdamState, adam_step, cosine_lr
from .loop import (
    EvalRecord,
    NumericalFailure,
    TrainConfig,
    TrainResult,
    TrainerSession,
    evaluate,
    load_split,
    quick_val,
    train,
)

__all__ = [
    "AdamState",
    "EvalRecord",
    "FREQ_WEIGHT",
    "MetricsRecord",
    "NumericalFailure",
    "TrainConfig",
    "TrainResult",
    "TrainerSession",
    "adam_step",
    "angle_diff_deg",
    "cka_similarity",
    "cosine_lr",
    "evaluate",
    "frequency_l1",
    "load_split",
    "loss_total",
    "orientation_degrees",
    "psnr",
    "quick_val",
    "restoration_loss",
    "ssim",
    "train",
]
