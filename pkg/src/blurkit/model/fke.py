"""Fourier-space kernel estimator.

The estimator lifts the decoder feature into frequency space, runs a
lattice of residual cells (depth-major over several reversible columns)
on the (re||im) channel-stacked representation, and applies the
resulting per-channel kernel spectrum back onto the input spectrum by
complex multiplication. Activations on spectra use the package rule:
ReLU on real and imaginary parts independently.

Column chaining is reversible: r[i][j] = R[i][j](...) + alpha * r[i][j-1],
with the virtual column 0 carrying the input spectrum, so
r[i][j-1] = (r[i][j] - R[i][j](...) - skip) / alpha recovers earlier
columns exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine import (
    Spectrum,
    Tensor,
    center_shift,
    complex_add,
    complex_hadamard,
    fft2,
    ifft2,
    ifft2_raw,
    no_grad,
    ops,
)
from .blocks import Conv2d, make_block
from .module import Module, Parameter

MODES = ("fourier-mul", "fourier-add", "spatial", "no-act")

ALPHA_FLOOR = 1e-6


class AlphaUnderflowError(RuntimeError):
    """A reversible coupling scalar collapsed toward zero."""


@dataclass
class FkeConfig:
    sub_resnets: int = 2  # reversible columns
    depth: int = 4  # residual modules per column
    channels: int = 48  # must equal the incoming feature width
    alpha_init: float = 1.0
    skip: bool = True  # lattice skip r[i][j] -> r[i+1][j-2]
    skip_init: float = 1.0
    mode: str = "fourier-mul"
    block_kind: str = "naf"

    def __post_init__(self):
        if self.sub_resnets < 1:
            raise ValueError("sub_resnets must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.channels % 2:
            raise ValueError("channels must be even")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; available: {MODES}")


def fke_ablation_mode(mode: str, base: FkeConfig | None = None) -> FkeConfig:
    """Configure the estimator for one of the ablation variants."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; available: {MODES}")
    base = base or FkeConfig()
    kwargs = {f: getattr(base, f) for f in base.__dataclass_fields__}
    kwargs["mode"] = mode
    return FkeConfig(**kwargs)


@dataclass
class KernelEstimate:
    """Per-channel kernel spectrum plus a centered magnitude view."""

    spectrum: Spectrum
    spatial_view: np.ndarray = field(repr=False)  # (B, H, W)


def spatial_view(spec: Spectrum) -> np.ndarray:
    """Cyclic-shifted |ifft2(spectrum)| averaged over channels."""
    z = ifft2_raw(spec.re.data.astype(np.complex128) + 1j * spec.im.data)
    return center_shift(np.abs(z)).mean(axis=-3)


def extract_kernel_visual(estimate: KernelEstimate, index: int = 0) -> np.ndarray:
    """Min-max normalized centered kernel image in [0, 1]."""
    view = estimate.spatial_view[index]
    lo, hi = float(view.min()), float(view.max())
    if hi - lo <= 0:
        return np.zeros_like(view)
    return ((view - lo) / (hi - lo)).astype(np.float64)


def _check_alpha(alpha: Tensor):
    if abs(float(alpha.data)) < ALPHA_FLOOR:
        raise AlphaUnderflowError(f"alpha={float(alpha.data):.3e} below {ALPHA_FLOOR}")


class ResCell(Module):
    """One lattice cell: optional 1x1 fuse of two inputs, optional
    activation, basic block, zero-init output gate."""

    def __init__(self, width, dual_input, act, rng, block_kind="naf", dtype=np.float32):
        self.fuse = Conv2d(rng, width * 2, width, 1, dtype=dtype) if dual_input else None
        self.block = make_block(block_kind, width, rng, dtype)
        self.out_scale = Parameter(np.zeros(width, dtype=dtype))
        self.act = act

    def __call__(self, primary: Tensor, side: Tensor | None = None) -> Tensor:
        if (side is not None) != (self.fuse is not None):
            raise ops.ShapeError("cell input arity does not match its construction")
        h = self.fuse(ops.concat_channels([primary, side])) if side is not None else primary
        if self.act:
            h = ops.relu(h)
        h = self.block(h)
        return ops.channel_scale(h, self.out_scale)


def sub_resnet_forward(cell: ResCell, r_prev_col: Tensor, r_prev_depth: Tensor,
                       alpha: Tensor, side: Tensor | None = None,
                       skip_feat: Tensor | None = None,
                       skip_scale: Tensor | None = None) -> Tensor:
    """r = R(r_prev_depth[, side]) + alpha * r_prev_col [+ skip]."""
    _check_alpha(alpha)
    r = ops.add(cell(r_prev_depth, side), ops.scale_by(r_prev_col, alpha))
    if skip_feat is not None:
        r = ops.add(r, ops.scale_by(skip_feat, skip_scale))
    return r


def sub_resnet_inverse(cell: ResCell, r: Tensor, r_prev_depth: Tensor,
                       alpha: Tensor, side: Tensor | None = None,
                       skip_feat: Tensor | None = None,
                       skip_scale: Tensor | None = None) -> Tensor:
    """Algebraic inverse of sub_resnet_forward, recovering r_prev_col."""
    _check_alpha(alpha)
    with no_grad():
        res = cell(r_prev_depth, side).data
        out = r.data - res
        if skip_feat is not None:
            out = out - skip_scale.data * skip_feat.data
        return Tensor(out / alpha.data)


class FourierKernelEstimator(Module):
    """Estimate a global per-channel kernel spectrum from a feature map
    and convolve it back in, all in one differentiable module."""

    def __init__(self, cfg: FkeConfig, rng, dtype=np.float32):
        self.cfg = cfg
        c = cfg.channels
        width = c if cfg.mode == "spatial" else 2 * c
        act = cfg.mode != "no-act"
        self.width = width
        self.cells = {}
        self.alphas = {}
        self.skip_scales = {}
        for i in range(1, cfg.depth + 1):
            for j in range(1, cfg.sub_resnets + 1):
                key = f"{i}_{j}"
                dual = i > 1 and j < cfg.sub_resnets
                self.cells[key] = ResCell(width, dual, act, rng, cfg.block_kind, dtype)
                self.alphas[key] = Parameter(np.asarray(cfg.alpha_init, dtype=dtype))
                if cfg.skip and j + 2 <= cfg.sub_resnets:
                    self.skip_scales[key] = Parameter(np.asarray(cfg.skip_init, dtype=dtype))
        self.combine = Conv2d(rng, 2 * c, c, 3, dtype=dtype)

    def activation_count(self) -> int:
        """Number of activation sites between the transform and the
        multiply; zero in no-act mode."""
        return sum(1 for cell in self.cells.values() if cell.act)

    def _lattice(self, base: Tensor):
        """Run the depth-major lattice; returns (last output, per-depth
        taps of the final column)."""
        cfg = self.cfg
        prev = {j: base for j in range(1, cfg.sub_resnets + 1)}
        taps = [base]
        for i in range(1, cfg.depth + 1):
            new = {}
            for j in range(1, cfg.sub_resnets + 1):
                key = f"{i}_{j}"
                cell = self.cells[key]
                side = prev[j + 1] if (i > 1 and j < cfg.sub_resnets) else None
                cross = new[j - 1] if j > 1 else base
                skip_feat = skip_scale = None
                if key in self.skip_scales:
                    skip_feat = prev[j + 2]
                    skip_scale = self.skip_scales[key]
                new[j] = sub_resnet_forward(
                    cell, cross, prev[j], self.alphas[key], side, skip_feat, skip_scale
                )
            prev = new
            taps.append(prev[cfg.sub_resnets])
        return prev[cfg.sub_resnets], taps

    def __call__(self, d1: Tensor, kernel_override: Spectrum | None = None,
                 collect_estimate: bool = True, collect_taps: bool = False):
        """Returns (feature_out, KernelEstimate or None, taps).

        ``taps`` holds the per-depth final-column lattice features
        (index 0 is the transformed input) when requested, else None.
        The lattice sees the input spectrum scaled by 1/(H*W) so its
        features start at pixel magnitude; the multiply itself uses the
        raw spectrum, keeping the convolution-theorem semantics exact.
        """
        cfg = self.cfg
        if d1.shape[1] != cfg.channels:
            raise ops.ShapeError(f"feature width {d1.shape[1]} != configured {cfg.channels}")
        r0 = fft2(d1)
        c = cfg.channels
        h, w = d1.shape[-2], d1.shape[-1]
        inv_hw = 1.0 / (h * w)
        if cfg.mode == "spatial":
            k_spatial, taps = self._lattice(d1)
            k_spec = fft2(ops.scale(k_spatial, inv_hw))
        else:
            stacked = ops.scale(ops.concat_channels([r0.re, r0.im]), inv_hw)
            k_stacked, taps = self._lattice(stacked)
            k_spec = Spectrum(
                ops.narrow_channels(k_stacked, 0, c),
                ops.narrow_channels(k_stacked, c, c),
            )
        if kernel_override is not None:
            k_spec = kernel_override
        if cfg.mode == "fourier-add":
            combined = complex_add(k_spec, r0)
        else:
            combined = complex_hadamard(k_spec, r0)
        y = ifft2(combined, expect_real=False)
        feature_out = self.combine(ops.concat_channels([y, d1]))
        estimate = None
        if collect_estimate:
            estimate = KernelEstimate(
                spectrum=k_spec.detach(), spatial_view=spatial_view(k_spec)
            )
        tap_arrays = [t.data for t in taps] if collect_taps else None
        return feature_out, estimate, tap_arrays
