"""Kernel synthesis, degradation model, deconvolution oracle, FFT-ReLU."""

import math

import numpy as np
import pytest

from blurkit.blur import (
    DegradationSpec,
    apply_blur_fourier,
    apply_blur_spatial,
    embed_centered,
    estimate_kernel_oracle,
    fft_relu_pattern,
    kernel_correlation,
    make_delta_kernel,
    make_gaussian_kernel,
    make_motion_kernel,
    pad_to_image,
)
from blurkit.engine import Tensor, center_shift, fft2_raw, ifft2_raw
from blurkit.train.metrics import angle_diff_deg, orientation_degrees


def test_motion_length_one_is_delta():
    k = make_motion_kernel(1, 0.8, 0.3, 7)
    assert k.grid[3, 3] == 1.0 and k.grid.sum() == 1.0


def test_motion_horizontal_five_uniform():
    k = make_motion_kernel(5, 0.0, 0.0, 9)
    row = k.grid[4]
    assert np.allclose(row[2:7], 0.2, atol=1e-12)
    assert np.count_nonzero(k.grid) == 5


@pytest.mark.parametrize("length,angle,curv", [(3, 0.3, 0.0), (7, 1.2, 0.25), (9, 2.7, 0.1)])
def test_motion_normalized_and_nonnegative(length, angle, curv):
    k = make_motion_kernel(length, angle, curv, 15)
    assert abs(k.grid.sum() - 1.0) <= 1e-6
    assert k.grid.min() >= 0


def test_motion_rejects_oversized():
    with pytest.raises(ValueError):
        make_motion_kernel(11, 0.0, 0.0, 9)


def test_motion_orientation_matches_angle():
    for deg in (0, 30, 75, 120, 160):
        k = make_motion_kernel(9, math.radians(deg), 0.0, 15)
        got = orientation_degrees(k.grid)
        assert angle_diff_deg(got, deg) < 3.0


def test_gaussian_ratio_and_symmetry():
    k = make_gaussian_kernel(1.0, 7)
    assert abs(k.grid[3, 3] / k.grid[3, 4] - math.exp(0.5)) <= 1e-6
    assert np.allclose(k.grid, k.grid[::-1, ::-1])
    assert np.allclose(k.grid, k.grid.T)


def test_gaussian_sigma_limit_clamps_to_delta():
    k = make_gaussian_kernel(1e-8, 7)
    assert k.grid[3, 3] == 1.0


def test_blur_delta_is_identity(rng):
    s = Tensor(rng.uniform(0, 1, (3, 16, 16)).astype(np.float32))
    spec = DegradationSpec(kernel=make_delta_kernel(5), noise_sigma=0.0)
    assert np.allclose(apply_blur_spatial(s, spec).data, s.data, atol=1e-7)
    assert np.allclose(apply_blur_fourier(s, spec).data, s.data, atol=1e-6)


def test_blur_constant_preserved(rng):
    s = Tensor(np.full((3, 16, 16), 0.6, np.float32))
    spec = DegradationSpec(kernel=make_motion_kernel(5, 0.4, 0.1, 9), noise_sigma=0.0)
    assert np.allclose(apply_blur_spatial(s, spec).data, 0.6, atol=1e-6)


def test_blur_energy_conservation(rng):
    s = Tensor(rng.uniform(0, 1, (3, 32, 32)).astype(np.float32))
    spec = DegradationSpec(kernel=make_motion_kernel(7, 1.1, 0.2, 13), noise_sigma=0.0)
    b = apply_blur_spatial(s, spec)
    assert abs(float(b.data.mean()) - float(s.data.mean())) <= 1e-6


@pytest.mark.parametrize("kind", ["motion", "gaussian"])
def test_spatial_fourier_equivalence(kind, rng):
    s = Tensor(rng.uniform(0, 1, (3, 32, 32)).astype(np.float32))
    kernel = (
        make_motion_kernel(9, 0.7, 0.15, 15) if kind == "motion" else make_gaussian_kernel(1.4, 11)
    )
    spec = DegradationSpec(kernel=kernel, noise_sigma=0.0)
    diff = np.abs(apply_blur_spatial(s, spec).data - apply_blur_fourier(s, spec).data).max()
    assert diff <= 1e-5


def test_fourier_rejects_reflect_boundary(rng):
    s = Tensor(rng.uniform(0, 1, (3, 16, 16)).astype(np.float32))
    spec = DegradationSpec(kernel=make_delta_kernel(3), boundary="reflect")
    with pytest.raises(ValueError):
        apply_blur_fourier(s, spec)
    # reflect is available on the spatial path
    apply_blur_spatial(s, spec)


def test_noise_is_seeded_and_unclipped():
    s = Tensor(np.full((1, 8, 8), 0.99, np.float32))
    spec = DegradationSpec(kernel=make_delta_kernel(3), noise_sigma=0.1, seed=5)
    b1 = apply_blur_spatial(s, spec)
    b2 = apply_blur_spatial(s, spec)
    assert np.array_equal(b1.data, b2.data)
    assert b1.data.max() > 1.0  # additive noise is not re-clipped


def test_oracle_recovers_kernel(rng):
    s = Tensor(rng.uniform(0, 1, (3, 48, 48)).astype(np.float32))
    kernel = make_motion_kernel(9, 0.6, 0.2, 15)
    b = apply_blur_fourier(s, DegradationSpec(kernel=kernel, noise_sigma=0.0))
    rec = estimate_kernel_oracle(b, s, eps=1e-8)
    assert not rec.ill_posed
    assert kernel_correlation(rec.grid, kernel) >= 0.999


def test_oracle_identity_pair_gives_centered_delta(rng):
    s = rng.uniform(0, 1, (3, 16, 16)).astype(np.float32)
    rec = estimate_kernel_oracle(s, s)
    peak = np.unravel_index(np.argmax(rec.grid), rec.grid.shape)
    assert peak == (8, 8)
    assert rec.grid[8, 8] > 0.99


def test_oracle_flags_constant_source():
    s = np.full((3, 16, 16), 0.5, np.float32)
    rec = estimate_kernel_oracle(s, s)
    assert rec.ill_posed


def test_oracle_noise_monotonic(rng):
    s = Tensor(rng.uniform(0, 1, (3, 48, 48)).astype(np.float32))
    kernel = make_motion_kernel(7, 1.3, 0.1, 13)
    corrs = []
    for sigma in (0.0, 0.01, 0.05):
        b = apply_blur_fourier(s, DegradationSpec(kernel=kernel, noise_sigma=sigma, seed=3))
        corrs.append(kernel_correlation(estimate_kernel_oracle(b, s).grid, kernel))
    assert corrs[0] >= 0.999
    assert corrs[0] >= corrs[1] >= corrs[2]


def test_fft_relu_constant_image():
    c = 0.42
    p = fft_relu_pattern(Tensor(np.full((3, 8, 8), c, np.float32)))
    assert np.allclose(p.data, c / 2, atol=1e-6)


def test_fft_relu_motion_orientation(rng):
    hits = 0
    total = 12
    for i in range(total):
        deg = float(rng.uniform(0, 180))
        kernel = make_motion_kernel(11, math.radians(deg), 0.0, 15)
        from blurkit.blur import procedural_texture, DatasetManifest

        tex = procedural_texture(np.random.default_rng(100 + i), 64, DatasetManifest())
        b = apply_blur_fourier(Tensor(tex), DegradationSpec(kernel=kernel, noise_sigma=0.0))
        pat = fft_relu_pattern(b).data.mean(axis=0)
        got = orientation_degrees(np.maximum(pat, 0.0))
        if angle_diff_deg(got, deg) <= 10.0:
            hits += 1
    assert hits >= int(0.9 * total)


def test_fft_relu_rotation_symmetry(rng):
    """index-negation of the input maps to index-negation of the pattern"""
    b = rng.uniform(0, 1, (1, 8, 8)).astype(np.float64)

    def negate(img):
        return np.roll(img[..., ::-1, ::-1], (1, 1), axis=(-2, -1))

    p1 = fft_relu_pattern(Tensor(negate(b))).data
    p2 = negate(fft_relu_pattern(Tensor(b)).data)
    assert np.abs(p1 - p2).max() <= 1e-10


def test_pad_to_image_center_at_origin():
    k = make_motion_kernel(3, 0.0, 0.0, 3)
    canvas = pad_to_image(k.grid, 8, 8)
    # center weight lands at (0, 0), neighbors wrap
    assert canvas[0, 0] == k.grid[1, 1]
    assert canvas[0, 1] == k.grid[1, 2]
    assert canvas[0, 7] == k.grid[1, 0]


def test_embed_centered_roundtrip():
    k = make_gaussian_kernel(1.0, 5)
    canvas = embed_centered(k.grid, 16, 16)
    assert canvas[8, 8] == k.grid[2, 2]
    assert np.isclose(canvas.sum(), 1.0)
