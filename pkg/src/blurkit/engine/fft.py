"""2-D DFT over the trailing axes, plus complex-valued graph ops.

Transform kernels are hand-rolled: iterative radix-2 for power-of-two
extents with a Bluestein chirp fallback for everything else, vectorized
over all leading axes. Convention is fixed package-wide:

    forward  X[k] = sum_n x[n] exp(-2*pi*i*k*n/N)        (unnormalized)
    inverse  x[n] = (1/(H*W)) sum_k X[k] exp(+2*pi*i*k*n/N)

Spectra are carried as (re, im) real tensor pairs so reverse-mode
differentiation stays entirely in real arithmetic.
"""

from __future__ import annotations

import warnings

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_node


class ImaginaryResidueWarning(UserWarning):
    """Discarded imaginary energy of an inverse transform was non-physical."""


# ---------------------------------------------------------------------------
# raw transforms (plain complex ndarrays)
# ---------------------------------------------------------------------------

_bitrev_cache: dict[int, np.ndarray] = {}
_twiddle_cache: dict[tuple[int, bool, str], np.ndarray] = {}
_bluestein_cache: dict[tuple[int, bool, str], tuple] = {}
_dft_matrix_cache: dict[tuple[int, bool, str], np.ndarray] = {}

# below this length the transform is a single BLAS product against the
# cached DFT matrix (a direct codelet, like FFT libraries use for small n);
# longer axes go through the radix-2 / Bluestein machinery
DIRECT_DFT_MAX = 64


def _bitrev(n: int) -> np.ndarray:
    perm = _bitrev_cache.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        rev = np.zeros(n, dtype=np.intp)
        for _ in range(bits):
            rev = (rev << 1) | (idx & 1)
            idx >>= 1
        perm = rev
        _bitrev_cache[n] = perm
    return perm


def _twiddles(size: int, inverse: bool, ckey: str) -> np.ndarray:
    key = (size, inverse, ckey)
    tw = _twiddle_cache.get(key)
    if tw is None:
        sign = 1.0 if inverse else -1.0
        tw = np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)
        tw = tw.astype(np.complex64 if ckey == "c64" else np.complex128)
        _twiddle_cache[key] = tw
    return tw


def _fft_pow2_last(a: np.ndarray, inverse: bool) -> np.ndarray:
    """Iterative Cooley-Tukey along the last axis; N must be a power of two."""
    n = a.shape[-1]
    ckey = "c64" if a.dtype == np.complex64 else "c128"
    a = a[..., _bitrev(n)]
    lead = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = _twiddles(size, inverse, ckey)
        a = a.reshape(lead + (n // size, size))
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate((even + odd, even - odd), axis=-1)
        size *= 2
    return a.reshape(lead + (n,))


def _bluestein_tables(n: int, inverse: bool, ckey: str):
    key = (n, inverse, ckey)
    tabs = _bluestein_cache.get(key)
    if tabs is None:
        sign = 1.0 if inverse else -1.0
        k = np.arange(n)
        # exponent taken modulo 2n keeps the chirp phase exact for large n
        w = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
        m = 1
        while m < 2 * n - 1:
            m *= 2
        v = np.zeros(m, dtype=np.complex128)
        v[:n] = np.conj(w)
        v[m - n + 1:] = np.conj(w[1:][::-1])
        cdtype = np.complex64 if ckey == "c64" else np.complex128
        vf = _fft_pow2_last(v.astype(cdtype), inverse=False)
        tabs = (w.astype(cdtype), vf, m)
        _bluestein_cache[key] = tabs
    return tabs


def _dft_matrix(n: int, inverse: bool, ckey: str) -> np.ndarray:
    key = (n, inverse, ckey)
    mat = _dft_matrix_cache.get(key)
    if mat is None:
        sign = 1.0 if inverse else -1.0
        k = np.arange(n)
        mat = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
        mat = mat.astype(np.complex64 if ckey == "c64" else np.complex128)
        _dft_matrix_cache[key] = mat
    return mat


def _fft_last(a: np.ndarray, inverse: bool) -> np.ndarray:
    """Unnormalized DFT along the last axis for any length."""
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    ckey = "c64" if a.dtype == np.complex64 else "c128"
    if n <= DIRECT_DFT_MAX:
        return a @ _dft_matrix(n, inverse, ckey)
    if n & (n - 1) == 0:
        return _fft_pow2_last(a, inverse)
    return _bluestein_last(a, inverse, ckey)


def _bluestein_last(a: np.ndarray, inverse: bool, ckey: str) -> np.ndarray:
    n = a.shape[-1]
    w, vf, m = _bluestein_tables(n, inverse, ckey)
    y = np.zeros(a.shape[:-1] + (m,), dtype=a.dtype)
    y[..., :n] = a * w
    conv = _fft_pow2_last(_fft_pow2_last(y, False) * vf, True) / m
    return conv[..., :n] * w


def _fft_axis(a: np.ndarray, axis: int, inverse: bool) -> np.ndarray:
    if axis == -1 or axis == a.ndim - 1:
        return _fft_last(a, inverse)
    a = np.moveaxis(a, axis, -1)
    a = _fft_last(a, inverse)
    return np.moveaxis(a, -1, axis)


def fft2_raw(a: np.ndarray) -> np.ndarray:
    """Forward unnormalized 2-D DFT over the two trailing axes."""
    a = np.asarray(a)
    if not np.iscomplexobj(a):
        a = a.astype(np.complex64 if a.dtype == np.float32 else np.complex128)
    return _fft_axis(_fft_axis(a, -1, False), -2, False)


def ifft2_raw(a: np.ndarray) -> np.ndarray:
    """Inverse 2-D DFT with 1/(H*W) normalization."""
    a = np.asarray(a)
    if not np.iscomplexobj(a):
        a = a.astype(np.complex128)
    h, w = a.shape[-2], a.shape[-1]
    return _fft_axis(_fft_axis(a, -1, True), -2, True) / (h * w)


def center_shift(a: np.ndarray) -> np.ndarray:
    """Cyclic shift by (H//2, W//2), moving the origin to the grid center."""
    return np.roll(a, (a.shape[-2] // 2, a.shape[-1] // 2), axis=(-2, -1))


# ---------------------------------------------------------------------------
# Spectrum: complex frequency tensor as a (re, im) pair
# ---------------------------------------------------------------------------


class Spectrum:
    """Complex 2-D frequency representation of a Tensor.

    ``re`` and ``im`` are same-shape real tensors; the normalization
    convention (forward unnormalized, inverse 1/(H*W)) is a package
    constant, recorded here for serialization.
    """

    convention = "forward-unnormalized/inverse-1-over-HW"

    __slots__ = ("re", "im")

    def __init__(self, re: Tensor, im: Tensor):
        if re.shape != im.shape:
            raise ShapeError(f"re/im shape mismatch: {re.shape} vs {im.shape}")
        self.re = re
        self.im = im

    @property
    def shape(self):
        return self.re.shape

    @property
    def dtype(self):
        return self.re.dtype

    def to_complex(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    @staticmethod
    def from_complex(arr: np.ndarray, dtype=np.float32) -> "Spectrum":
        return Spectrum(
            Tensor(arr.real.astype(dtype)), Tensor(arr.imag.astype(dtype))
        )

    def detach(self) -> "Spectrum":
        return Spectrum(self.re.detach(), self.im.detach())

    def __repr__(self):
        return f"Spectrum(shape={self.shape})"


def _cdtype(dtype) -> type:
    return np.complex64 if dtype == np.float32 else np.complex128


# ---------------------------------------------------------------------------
# graph ops
# ---------------------------------------------------------------------------


def fft2(x: Tensor) -> Spectrum:
    """Per-(batch, channel) forward DFT of a real tensor."""
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise ShapeError("fft2 expects at least 2 dimensions")
    spec = fft2_raw(x.data.astype(_cdtype(x.dtype)))
    h, w = x.data.shape[-2], x.data.shape[-1]
    rdtype = x.dtype

    def back_re(g):
        # X is linear in x: d/dx via the adjoint (inverse-conjugate) transform
        gx = ifft2_raw(g.astype(_cdtype(rdtype))) * (h * w)
        return (gx.real.astype(rdtype),)

    def back_im(g):
        gx = ifft2_raw(1j * g.astype(_cdtype(rdtype))) * (h * w)
        return (gx.real.astype(rdtype),)

    re = make_node(spec.real.astype(rdtype), (x,), back_re)
    im = make_node(spec.imag.astype(rdtype), (x,), back_im)
    return Spectrum(re, im)


def ifft2(X: Spectrum, expect_real: bool = True, residue_tol: float = 1e-3) -> Tensor:
    """Inverse DFT returning the real part.

    With ``expect_real`` the discarded imaginary energy is checked
    against ``residue_tol`` of the total and an ImaginaryResidueWarning
    is emitted when a conjugate-asymmetric (non-physical) spectrum
    sneaks in. Learned spectra pass ``expect_real=False``.
    """
    z = ifft2_raw(X.re.data.astype(_cdtype(X.re.dtype)) + 1j * X.im.data)
    if expect_real:
        total = float(np.sum(z.real * z.real + z.imag * z.imag))
        imag = float(np.sum(z.imag * z.imag))
        if total > 0 and imag > residue_tol * total:
            warnings.warn(
                f"ifft2 discarded {imag / total:.3e} of the energy as imaginary "
                "residue; the spectrum is not conjugate-symmetric",
                ImaginaryResidueWarning,
                stacklevel=2,
            )
    h, w = z.shape[-2], z.shape[-1]
    rdtype = X.re.dtype

    def back(g):
        gf = fft2_raw(g.astype(_cdtype(rdtype))) / (h * w)
        return gf.real.astype(rdtype), gf.imag.astype(rdtype)

    return make_node(z.real.astype(rdtype), (X.re, X.im), back)


def complex_hadamard(a: Spectrum, b: Spectrum) -> Spectrum:
    """Elementwise complex product, differentiable in both operands."""
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    ar, ai, br, bi = a.re, a.im, b.re, b.im
    out_re = ar.data * br.data - ai.data * bi.data
    out_im = ar.data * bi.data + ai.data * br.data

    def back_re(g):
        return g * br.data, -g * bi.data, g * ar.data, -g * ai.data

    def back_im(g):
        return g * bi.data, g * br.data, g * ai.data, g * ar.data

    parents = (ar, ai, br, bi)
    return Spectrum(
        make_node(out_re, parents, back_re), make_node(out_im, parents, back_im)
    )


def complex_add(a: Spectrum, b: Spectrum) -> Spectrum:
    from . import ops

    return Spectrum(ops.add(a.re, b.re), ops.add(a.im, b.im))


def complex_relu(a: Spectrum) -> Spectrum:
    """ReLU applied independently to real and imaginary parts.

    This is the package-wide rule for activations on complex spectra.
    """
    from . import ops

    return Spectrum(ops.relu(a.re), ops.relu(a.im))
