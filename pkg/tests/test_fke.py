"""Kernel estimator: lattice reversibility, modes, visualization."""

import numpy as np
import pytest

from blurkit.engine import Spectrum, Tensor, backward, fft2, no_grad, ops
from blurkit.model import (
    AlphaUnderflowError,
    FkeConfig,
    FourierKernelEstimator,
    KernelEstimate,
    MODES,
    extract_kernel_visual,
    fke_ablation_mode,
    spatial_view,
    sub_resnet_forward,
    sub_resnet_inverse,
)
from blurkit.model.module import Parameter

from conftest import randomize_gates


def _fke(dtype=np.float32, **kw):
    cfg = FkeConfig(**{**dict(sub_resnets=2, depth=2, channels=8), **kw})
    return FourierKernelEstimator(cfg, np.random.default_rng(0), dtype=dtype)


def _rand_feats(rng, width, n=1, size=8, dtype=np.float32):
    return [Tensor(rng.standard_normal((1, width, size, size)).astype(dtype)) for _ in range(n)]


def test_forward_shapes_and_finiteness(rng):
    fke = _fke()
    d1 = Tensor(rng.standard_normal((2, 8, 8, 8)).astype(np.float32))
    with no_grad():
        out, est, taps = fke(d1, collect_taps=True)
    assert out.shape == d1.shape
    assert est.spectrum.shape == (2, 8, 8, 8)
    assert est.spatial_view.shape == (2, 8, 8)
    assert np.all(np.isfinite(out.data))
    assert len(taps) == fke.cfg.depth + 1


def test_initial_estimate_is_input_derived(rng):
    """Zero-init cells pass the (scaled) input spectrum through every column."""
    fke = _fke()
    d1 = Tensor(rng.standard_normal((1, 8, 8, 8)).astype(np.float32))
    with no_grad():
        _, est, _ = fke(d1)
        r0 = fft2(d1)
    assert np.allclose(est.spectrum.re.data, r0.re.data / 64.0, atol=1e-5)
    assert np.allclose(est.spectrum.im.data, r0.im.data / 64.0, atol=1e-5)


def test_kernel_override_all_ones_multiplicative_identity(rng):
    fke = _fke()
    d1 = Tensor(rng.standard_normal((1, 8, 8, 8)).astype(np.float32))
    ones = Spectrum(Tensor(np.ones((1, 8, 8, 8), np.float32)), Tensor(np.zeros((1, 8, 8, 8), np.float32)))
    with no_grad():
        out, _, _ = fke(d1, kernel_override=ones)
        manual = fke.combine(ops.concat_channels([d1, d1]))
    assert np.abs(out.data - manual.data).max() <= 1e-4


def test_mode_equivalence_mul_one_add_zero(rng):
    d1 = Tensor(rng.standard_normal((1, 8, 8, 8)).astype(np.float32))
    ones = Spectrum(Tensor(np.ones((1, 8, 8, 8), np.float32)), Tensor(np.zeros((1, 8, 8, 8), np.float32)))
    zeros = Spectrum(Tensor(np.zeros((1, 8, 8, 8), np.float32)), Tensor(np.zeros((1, 8, 8, 8), np.float32)))
    mul_fke = _fke()
    add_fke = FourierKernelEstimator(fke_ablation_mode("fourier-add", mul_fke.cfg), np.random.default_rng(0))
    with no_grad():
        out_mul, _, _ = mul_fke(d1, kernel_override=ones)
        out_add, _, _ = add_fke(d1, kernel_override=zeros)
    assert np.abs(out_mul.data - out_add.data).max() <= 1e-5


def test_ablation_modes_shapes_and_act_counts(rng):
    d1 = Tensor(rng.standard_normal((1, 8, 8, 8)).astype(np.float32))
    shapes = set()
    for mode in MODES:
        fke = FourierKernelEstimator(
            fke_ablation_mode(mode, FkeConfig(sub_resnets=2, depth=2, channels=8)),
            np.random.default_rng(0),
        )
        with no_grad():
            out, _, _ = fke(d1)
        shapes.add(out.shape)
        if mode == "no-act":
            assert fke.activation_count() == 0
        else:
            assert fke.activation_count() == len(fke.cells)
    assert shapes == {(1, 8, 8, 8)}


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        fke_ablation_mode("spectral")
    with pytest.raises(ValueError):
        FkeConfig(mode="nope")


def test_sub_resnet_roundtrips_f32_f64(rng):
    for dtype, tol in ((np.float32, 1e-4), (np.float64, 1e-10)):
        fke = randomize_gates(_fke(dtype=dtype, sub_resnets=3, depth=3, skip=True), seed=5)
        width = fke.width
        worst = 0.0
        for trial in range(10):
            pc, pd, side, skip = _rand_feats(np.random.default_rng(trial), width, 4, dtype=dtype)
            cell = fke.cells["2_1"]
            alpha = fke.alphas["2_1"]
            sscale = fke.skip_scales["2_1"]
            r = sub_resnet_forward(cell, pc, pd, alpha, side, skip, sscale)
            rec = sub_resnet_inverse(cell, r, pd, alpha, side, skip, sscale)
            worst = max(worst, float(np.abs(rec.data - pc.data).max()))
        assert worst <= tol, f"{dtype}: {worst}"


def test_sub_resnet_forced_zero_residual(rng):
    """With the cell output forced to zero, r = alpha * prev column."""
    fke = _fke()
    cell = fke.cells["1_1"]  # out_scale is zero-init, so R(x) == 0
    ones = Tensor(np.ones((1, fke.width, 8, 8), np.float32))
    pd = Tensor(np.zeros((1, fke.width, 8, 8), np.float32))
    alpha = Parameter(np.asarray(2.0, dtype=np.float32))
    r = sub_resnet_forward(cell, ones, pd, alpha)
    assert np.allclose(r.data, 2.0, atol=1e-6)


def test_alpha_underflow_rejected(rng):
    fke = _fke()
    cell = fke.cells["1_1"]
    feats = _rand_feats(rng, fke.width, 2)
    bad = Parameter(np.asarray(0.0, dtype=np.float32))
    with pytest.raises(AlphaUnderflowError):
        sub_resnet_forward(cell, feats[0], feats[1], bad)
    with pytest.raises(AlphaUnderflowError):
        sub_resnet_inverse(cell, feats[0], feats[1], bad)


def test_skip_connections_present_and_reversible(rng):
    fke = randomize_gates(_fke(sub_resnets=4, depth=3, skip=True), seed=9)
    assert fke.skip_scales  # j+2 <= 4 has receivers
    d1 = Tensor(rng.standard_normal((1, 8, 8, 8)).astype(np.float32))
    with no_grad():
        out, _, _ = fke(d1)
    assert np.all(np.isfinite(out.data))
    off = FourierKernelEstimator(
        FkeConfig(sub_resnets=4, depth=3, channels=8, skip=False), np.random.default_rng(0)
    )
    assert not off.skip_scales


def test_gradients_reach_all_parameters(rng):
    fke = _fke()
    d1 = Tensor(rng.standard_normal((1, 8, 8, 8)).astype(np.float32), requires_grad=True)
    out, _, _ = fke(d1)
    backward(ops.mean(ops.mul(out, out)))
    missing = [n for n, p in fke.named_parameters() if p.grad is None]
    assert missing == []
    assert d1.grad is not None


def test_fke_gradcheck_f32(rng):
    """Full estimator (fft -> lattice -> multiply -> ifft -> conv) vs
    central differences."""
    fke = randomize_gates(_fke(sub_resnets=2, depth=1), seed=11)
    x = Tensor(rng.standard_normal((1, 8, 8, 8)).astype(np.float32), requires_grad=True)

    def loss():
        out, _, _ = fke(x, collect_estimate=False)
        return ops.mean(ops.mul(out, out))

    backward(loss())
    ana = x.grad.astype(np.float64)
    num = np.zeros_like(ana)
    flat = x.data.reshape(-1)
    nf = num.reshape(-1)
    h = 1e-2
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = np.float32(orig + h)
            fp = loss().item()
            flat[i] = np.float32(orig - h)
            fm = loss().item()
            flat[i] = orig
            nf[i] = (fp - fm) / (2 * h)
    rel = np.abs(ana - num).max() / max(1e-9, np.abs(num).max())
    assert rel <= 1e-3


def test_extract_kernel_visual_contracts(rng):
    ones = Spectrum(Tensor(np.ones((1, 4, 8, 8), np.float32)), Tensor(np.zeros((1, 4, 8, 8), np.float32)))
    est = KernelEstimate(spectrum=ones, spatial_view=spatial_view(ones))
    vis = extract_kernel_visual(est)
    assert vis.shape == (8, 8)
    assert vis[4, 4] == 1.0 and vis.sum() == 1.0  # centered delta
    rnd = Spectrum(
        Tensor(rng.standard_normal((1, 4, 8, 8)).astype(np.float32)),
        Tensor(rng.standard_normal((1, 4, 8, 8)).astype(np.float32)),
    )
    vis2 = extract_kernel_visual(KernelEstimate(spectrum=rnd, spatial_view=spatial_view(rnd)))
    assert vis2.min() >= 0.0 and vis2.max() == 1.0


def _negate_indices(img):
    return np.ascontiguousarray(np.roll(img[..., ::-1, ::-1], (1, 1), axis=(-2, -1)))


def test_visual_rotation_equivariance_oracle(rng):
    """DFT symmetry: spectra related by frequency index-negation produce
    index-negated kernel views."""
    re = rng.standard_normal((1, 4, 8, 8)).astype(np.float64)
    im = rng.standard_normal((1, 4, 8, 8)).astype(np.float64)
    s1 = Spectrum(Tensor(re), Tensor(im))
    s2 = Spectrum(Tensor(_negate_indices(re)), Tensor(_negate_indices(im)))
    v1 = extract_kernel_visual(KernelEstimate(s1, spatial_view(s1)))
    v2 = extract_kernel_visual(KernelEstimate(s2, spatial_view(s2)))
    assert np.abs(_negate_indices(v1) - v2).max() <= 1e-10


def test_visual_rotation_equivariance_at_init(rng):
    """Fresh estimator: the estimate is input-derived, so index-negating
    the feature flips the kernel view exactly."""
    fke = _fke()
    d = rng.standard_normal((1, 8, 8, 8)).astype(np.float32)
    with no_grad():
        _, est1, _ = fke(Tensor(d))
        _, est2, _ = fke(Tensor(_negate_indices(d)))
    v1, v2 = est1.spatial_view[0], est2.spatial_view[0]
    assert np.abs(_negate_indices(v1) - v2).max() <= 1e-5 * max(1.0, float(v1.max()))
