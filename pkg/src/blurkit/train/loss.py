"""Training objective: pixel L1 plus a frequency-domain L1.

The frequency term is the mean absolute error between the forward
spectra of prediction and target, real and imaginary parts pooled
jointly, weighted 0.01 against the pixel term. Per-output terms are
summed over every (scale, column) head.
"""

from __future__ import annotations

import numpy as np

from ..engine import Spectrum, Tensor, fft2, fft2_raw, no_grad, ops

FREQ_WEIGHT = 0.01


def frequency_l1(pred: Tensor, target: Tensor, target_spec: Spectrum | None = None) -> Tensor:
    """Mean |dRe| and |dIm| over both spectrum parts jointly."""
    fp = fft2(pred)
    ft = target_spec if target_spec is not None else fft2(target)
    re = ops.l1_distance(fp.re, ft.re)
    im = ops.l1_distance(fp.im, ft.im)
    return ops.scale(ops.add(re, im), 0.5)


def restoration_loss(pred: Tensor, target: Tensor, freq_weight: float = FREQ_WEIGHT,
                     target_spec: Spectrum | None = None) -> Tensor:
    """l1 + freq_weight * l_freq for one output head."""
    if pred.shape != target.shape:
        raise ops.ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    pix = ops.l1_distance(pred, target)
    return ops.add(pix, ops.scale(frequency_l1(pred, target, target_spec), freq_weight))


class PreparedTargets:
    """Per-scale targets with spectra precomputed once per step."""

    def __init__(self, gts, freq_weight: float = FREQ_WEIGHT):
        self.gts = list(gts)
        self.freq_weight = freq_weight
        self.specs = []
        with no_grad():
            for gt in self.gts:
                z = fft2_raw(gt.data.astype(np.complex64 if gt.dtype == np.float32 else np.complex128))
                self.specs.append(
                    Spectrum(Tensor(z.real.astype(gt.dtype)), Tensor(z.imag.astype(gt.dtype)))
                )

    def term(self, pred: Tensor, scale: int) -> Tensor:
        return restoration_loss(pred, self.gts[scale], self.freq_weight, self.specs[scale])


def loss_total(preds: dict, gts, freq_weight: float = FREQ_WEIGHT) -> Tensor:
    """Sum of per-head losses; ``gts`` is the per-scale target pyramid."""
    total = None
    for key in sorted(preds):
        term = restoration_loss(preds[key], gts[key[0]], freq_weight)
        total = term if total is None else ops.add(total, term)
    return total
