"""Learnable architecture: blocks, kernel estimator, multi-scale UNet,
reversible runtime and checkpoints."""

from .module import Module, Parameter
from .blocks import (
    BLOCK_KINDS,
    BlockStack,
    Conv2d,
    Downsample,
    LayerNorm2d,
    NAFBlock,
    Upsample,
    image_downscale,
    make_block,
    simple_gate,
)
from .fke import (
    ALPHA_FLOOR,
    AlphaUnderflowError,
    FkeConfig,
    FourierKernelEstimator,
    KernelEstimate,
    MODES,
    ResCell,
    extract_kernel_visual,
    fke_ablation_mode,
    spatial_view,
    sub_resnet_forward,
    sub_resnet_inverse,
)
from .unet import Column, ColumnState, DMSUNet, ModelConfig, SubDecoder, SubEncoder
from .reversible import (
    ActivationLedger,
    StepResult,
    format_memory_report,
    memory_report,
    naive_step,
    reversible_step,
    train_step,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "ALPHA_FLOOR",
    "ActivationLedger",
    "AlphaUnderflowError",
    "BLOCK_KINDS",
    "BlockStack",
    "CheckpointError",
    "Column",
    "ColumnState",
    "Conv2d",
    "DMSUNet",
    "Downsample",
    "FkeConfig",
    "FourierKernelEstimator",
    "KernelEstimate",
    "LayerNorm2d",
    "MODES",
    "ModelConfig",
    "Module",
    "NAFBlock",
    "Parameter",
    "ResCell",
    "StepResult",
    "SubDecoder",
    "SubEncoder",
    "Upsample",
    "extract_kernel_visual",
    "fke_ablation_mode",
    "format_memory_report",
    "image_downscale",
    "load_checkpoint",
    "make_block",
    "memory_report",
    "naive_step",
    "reversible_step",
    "save_checkpoint",
    "simple_gate",
    "spatial_view",
    "sub_resnet_forward",
    "sub_resnet_inverse",
    "train_step",
]
