"""Numerical substrate: tensors, autodiff, FFT and serialization."""

from .tensor import (
    ActivationMeter,
    GraphError,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    grad_enabled,
    graph_nodes,
    make_node,
    meter,
    no_grad,
)
from .fft import (
    ImaginaryResidueWarning,
    Spectrum,
    center_shift,
    complex_add,
    complex_hadamard,
    complex_relu,
    fft2,
    fft2_raw,
    ifft2,
    ifft2_raw,
)
from . import ops
from .serialize import DumpFormatError, describe, load_tensor, save_tensor

__all__ = [
    "ActivationMeter",
    "DumpFormatError",
    "GraphError",
    "ImaginaryResidueWarning",
    "ShapeError",
    "Spectrum",
    "Tensor",
    "as_tensor",
    "backward",
    "center_shift",
    "complex_add",
    "complex_hadamard",
    "complex_relu",
    "describe",
    "fft2",
    "fft2_raw",
    "graph_nodes",
    "grad_enabled",
    "ifft2",
    "ifft2_raw",
    "load_tensor",
    "make_node",
    "meter",
    "no_grad",
    "ops",
    "save_tensor",
]
