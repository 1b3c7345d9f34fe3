"""Blur synthesis, degradation model, kernel oracle and datasets."""

from .kernels import (
    BlurKernelSpec,
    embed_centered,
    make_delta_kernel,
    make_gaussian_kernel,
    make_motion_kernel,
    pad_to_image,
)
from .degrade import (
    DegradationSpec,
    KernelRecovery,
    apply_blur_fourier,
    apply_blur_spatial,
    estimate_kernel_oracle,
    fft_relu_pattern,
    kernel_correlation,
)
from .dataset import (
    DatasetManifest,
    Sample,
    generate_dataset,
    load_sample,
    make_sample,
    procedural_texture,
    read_manifest,
    sample_degradation,
)

__all__ = [
    "BlurKernelSpec",
    "DatasetManifest",
    "DegradationSpec",
    "KernelRecovery",
    "Sample",
    "apply_blur_fourier",
    "apply_blur_spatial",
    "embed_centered",
    "estimate_kernel_oracle",
    "fft_relu_pattern",
    "generate_dataset",
    "kernel_correlation",
    "load_sample",
    "make_delta_kernel",
    "make_gaussian_kernel",
    "make_motion_kernel",
    "make_sample",
    "pad_to_image",
    "procedural_texture",
    "read_manifest",
    "sample_degradation",
]
