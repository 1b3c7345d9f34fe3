"""Blur degradation: B = S (*) k + n, in both spatial and Fourier form,
plus the regularized spectral-division kernel oracle and the FFT-ReLU
blur-pattern extractor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import Tensor, as_tensor, center_shift, fft2_raw, ifft2_raw
from .kernels import BlurKernelSpec, embed_centered, pad_to_image


class IllPosedEstimateError(RuntimeError):
    """The source spectrum is too sparse for kernel recovery."""


@dataclass
class DegradationSpec:
    kernel: BlurKernelSpec
    noise_sigma: float = 0.0
    boundary: str = "circular"  # circular | reflect
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.boundary not in ("circular", "reflect"):
            raise ValueError(f"unknown boundary {self.boundary!r}")


def _check_range(arr: np.ndarray):
    if arr.min() < -1e-5 or arr.max() > 1.0 + 1e-5:
        raise ValueError("sharp image must lie in [0, 1]")


def _noise_like(arr: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    if spec.noise_sigma == 0:
        return np.zeros_like(arr)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    return (spec.noise_sigma * rng.standard_normal(arr.shape)).astype(arr.dtype)


def apply_blur_spatial(sharp, spec: DegradationSpec) -> Tensor:
    """B = S (*) k + n with the declared boundary handling.

    Output is not re-clipped after noise, keeping the model linear.
    """
    s = as_tensor(sharp)
    _check_range(s.data)
    grid = spec.kernel.grid
    k = grid.shape[0]
    c = k // 2
    h, w = s.data.shape[-2], s.data.shape[-1]
    out = np.zeros_like(s.data)
    if spec.boundary == "circular":
        for du in range(-c, c + 1):
            for dv in range(-c, c + 1):
                wv = grid[c + du, c + dv]
                if wv == 0:
                    continue
                out += s.dtype.type(wv) * np.roll(s.data, (du, dv), axis=(-2, -1))
    else:
        pads = [(0, 0)] * (s.data.ndim - 2) + [(c, c), (c, c)]
        sp = np.pad(s.data, pads, mode="reflect")
        for du in range(-c, c + 1):
            for dv in range(-c, c + 1):
                wv = grid[c + du, c + dv]
                if wv == 0:
                    continue
                out += s.dtype.type(wv) * sp[..., c - du : c - du + h, c - dv : c - dv + w]
    return Tensor(out + _noise_like(out, spec))


def apply_blur_fourier(sharp, spec: DegradationSpec) -> Tensor:
    """B = ifft2(fft2(S) . fft2(k)) + n; circular boundary only."""
    if spec.boundary != "circular":
        raise ValueError("apply_blur_fourier requires circular boundary")
    s = as_tensor(sharp)
    _check_range(s.data)
    h, w = s.data.shape[-2], s.data.shape[-1]
    kf = fft2_raw(pad_to_image(spec.kernel.grid, h, w))
    blurred = ifft2_raw(fft2_raw(s.data.astype(np.complex128)) * kf).real
    blurred = blurred.astype(s.dtype)
    return Tensor(blurred + _noise_like(blurred, spec))


@dataclass
class KernelRecovery:
    """Kernel recovered from a (blur, sharp) pair by spectral division."""

    grid: np.ndarray  # centered spatial kernel, image sized
    spectrum: np.ndarray  # complex (H, W)
    ill_posed: bool


def estimate_kernel_oracle(blur, sharp, eps: float = 1e-8) -> KernelRecovery:
    """Wiener-style division F(k) = conj(F(S)) F(B) / (|F(S)|^2 + eps).

    Channels share one kernel, so per-bin numerators and denominators
    are pooled over channels before dividing. The estimate is flagged
    ill-posed when more than half of the source power bins sit below
    ``eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    b = as_tensor(blur).data.astype(np.float64)
    s = as_tensor(sharp).data.astype(np.float64)
    if b.shape != s.shape:
        raise ValueError(f"shape mismatch {b.shape} vs {s.shape}")
    if b.ndim == 2:
        b, s = b[None], s[None]
    fb = fft2_raw(b.reshape(-1, *b.shape[-2:]))
    fs = fft2_raw(s.reshape(-1, *s.shape[-2:]))
    num = (np.conj(fs) * fb).sum(axis=0)
    den = (np.conj(fs) * fs).real.sum(axis=0)
    ill_posed = bool((den < eps).mean() > 0.5)
    spectrum = num / (den + eps)
    grid = center_shift(ifft2_raw(spectrum).real)
    return KernelRecovery(grid=grid, spectrum=spectrum, ill_posed=ill_posed)


def kernel_correlation(recovered: np.ndarray, spec: BlurKernelSpec) -> float:
    """Normalized cross-correlation of a recovered image-sized kernel
    against the centered ground-truth grid."""
    h, w = recovered.shape
    truth = embed_centered(spec.grid, h, w)
    num = float((recovered * truth).sum())
    den = float(np.sqrt((recovered**2).sum() * (truth**2).sum()))
    if den == 0:
        return 0.0
    return num / den


def fft_relu_pattern(image) -> Tensor:
    """Cyclic-shifted ReLU-in-frequency blur pattern of a single image.

    Computes shift(ifft2(ReLU(fft2(B))) - B/2) where ReLU acts on real
    and imaginary parts independently and the shift is (H//2, W//2).
    The inverse transform of the rectified spectrum is generally not
    conjugate-symmetric; its real part is the pattern.
    """
    b = as_tensor(image).data
    spec = fft2_raw(b.astype(np.complex128))
    rect = np.maximum(spec.real, 0.0) + 1j * np.maximum(spec.imag, 0.0)
    pat = ifft2_raw(rect).real - b / 2.0
    return Tensor(center_shift(pat).astype(b.dtype))
