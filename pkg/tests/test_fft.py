"""DFT kernels: roundtrips, Parseval, direct-summation oracle, Bluestein."""

import numpy as np
import pytest

from blurkit.engine import (
    ImaginaryResidueWarning,
    Spectrum,
    Tensor,
    backward,
    complex_hadamard,
    fft2,
    fft2_raw,
    ifft2,
    ifft2_raw,
    ops,
)
from blurkit.engine.fft import DIRECT_DFT_MAX, _fft_pow2_last, _bluestein_last


def direct_dft2(x):
    h, w = x.shape[-2:]
    wh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    ww = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return wh @ x @ ww.T


def test_delta_spectrum_is_flat():
    x = np.zeros((4, 4), dtype=np.float64)
    x[0, 0] = 1.0
    spec = fft2_raw(x)
    assert np.allclose(spec, 1.0 + 0j, atol=1e-12)


def test_constant_spectrum_is_dc_only():
    c = 0.7
    spec = fft2_raw(np.full((4, 4), c))
    assert np.isclose(spec[0, 0].real, 16 * c)
    spec[0, 0] = 0
    assert np.abs(spec).max() < 1e-12


def test_matches_direct_summation_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 8))
    mine = fft2_raw(x.astype(np.complex128))
    direct = direct_dft2(x)
    assert np.abs(mine - direct).max() < 1e-11


def test_parseval_f64():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 8))
    spec = fft2_raw(x.astype(np.complex128))
    ratio = (x**2).sum() / ((np.abs(spec) ** 2).sum() / 64.0)
    assert abs(ratio - 1.0) <= 1e-6


@pytest.mark.parametrize("shape", [(8, 8), (16, 16), (31, 31), (12, 20), (1, 7), (31, 32), (96, 96), (65, 130)])
def test_roundtrip_all_sizes(shape):
    rng = np.random.default_rng(sum(shape))
    x = rng.standard_normal((2,) + shape).astype(np.float32)
    back = ifft2_raw(fft2_raw(x)).real.astype(np.float32)
    assert np.abs(back - x).max() <= 1e-5 * np.abs(x).max()


@pytest.mark.parametrize("n", [31, 12, 7, 33])
def test_bluestein_agrees_with_direct(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    got = _bluestein_last(x.astype(np.complex128), inverse=False, ckey="c128")
    k = np.arange(n)
    ref = x @ np.exp(-2j * np.pi * np.outer(k, k) / n)
    assert np.abs(got - ref).max() / np.abs(ref).max() < 1e-10


def test_radix2_agrees_with_direct_path():
    # the small-size direct matrix path and the radix-2 butterflies must
    # implement the same transform
    rng = np.random.default_rng(5)
    x = (rng.standard_normal((4, 32)) + 1j * rng.standard_normal((4, 32))).astype(np.complex128)
    assert 32 <= DIRECT_DFT_MAX
    from blurkit.engine.fft import _dft_matrix

    direct = x @ _dft_matrix(32, False, "c128")
    radix = _fft_pow2_last(x, inverse=False)
    assert np.abs(direct - radix).max() / np.abs(direct).max() < 1e-12


def test_ifft2_imaginary_residue_warning():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 8))
    spec = fft2_raw(x.astype(np.complex128))
    spec[1, 2] = 0  # kill one bin but not its conjugate partner
    s = Spectrum(Tensor(spec.real), Tensor(spec.imag))
    with pytest.warns(ImaginaryResidueWarning):
        ifft2(s)


def test_ifft2_all_ones_spectrum_is_delta():
    s = Spectrum(Tensor(np.ones((4, 4))), Tensor(np.zeros((4, 4))))
    out = ifft2(s)
    expect = np.zeros((4, 4))
    expect[0, 0] = 1.0
    assert np.allclose(out.data, expect, atol=1e-12)


def test_hadamard_identities():
    rng = np.random.default_rng(3)
    a = Spectrum(Tensor(rng.standard_normal((4, 4))), Tensor(rng.standard_normal((4, 4))))
    ones = Spectrum(Tensor(np.ones((4, 4))), Tensor(np.zeros((4, 4))))
    prod = complex_hadamard(a, ones)
    assert np.allclose(prod.re.data, a.re.data)
    assert np.allclose(prod.im.data, a.im.data)
    p = complex_hadamard(
        Spectrum(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2)))),
        Spectrum(Tensor(np.ones((2, 2))), Tensor(-np.ones((2, 2)))),
    )
    assert np.allclose(p.re.data, 2.0) and np.allclose(p.im.data, 0.0)


def _num_grad(fn, t, h=1e-6):
    g = np.zeros_like(t.data)
    flat, gf = t.data.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn().item()
        flat[i] = orig - h
        fm = fn().item()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def test_hadamard_gradient_vs_central_differences():
    rng = np.random.default_rng(4)
    a = Tensor(rng.standard_normal((1, 1, 4, 4)), dtype=np.float64, requires_grad=True)
    b = Tensor(rng.standard_normal((1, 1, 4, 4)), dtype=np.float64, requires_grad=True)

    def loss():
        c = complex_hadamard(fft2(a), fft2(b))
        return ops.add(ops.mean(ops.mul(c.re, c.re)), ops.mean(ops.mul(c.im, c.im)))

    backward(loss())
    for t in (a, b):
        num = _num_grad(loss, t)
        rel = np.abs(t.grad - num).max() / max(1e-9, np.abs(num).max())
        assert rel <= 1e-6


def test_fft_ifft_roundtrip_gradient_is_identity():
    # loss = sum(roundtrip(x) * x0)/1 with roundtrip == identity gives grad == x0
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((1, 1, 8, 8)), dtype=np.float64, requires_grad=True)
    y = ifft2(fft2(x))
    loss = ops.scale(ops.mean(ops.mul(y, y)), 0.5 * y.size)
    backward(loss)
    assert np.abs(x.grad - x.data).max() <= 1e-6
