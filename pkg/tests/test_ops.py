"""Elementwise suite, convolution oracle, shape plumbing."""

import numpy as np
import pytest

from blurkit.engine import ShapeError, Tensor, backward, ops


def conv2d_loop_oracle(x, w, stride=1, ph=0, pw=0):
    """Direct nested-loop cross-correlation."""
    b, cin, h, wd = x.shape
    out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (wd + 2 * pw - kw) // stride + 1
    y = np.zeros((b, out, ho, wo), dtype=x.dtype)
    for bi in range(b):
        for oi in range(out):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[oi, ci, u, v] * xp[bi, ci, i * stride + u, j * stride + v]
                    y[bi, oi, i, j] = acc
    return y


def test_relu_values_and_subgradient():
    x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    y = ops.relu(x)
    assert np.array_equal(y.data, [0.0, 0.0, 2.0])
    backward(ops.sum_all(y))
    assert np.array_equal(x.grad, [0.0, 0.0, 1.0])  # relu'(0) = 0


def test_l1_distance_zero_on_identical():
    x = Tensor(np.random.default_rng(0).standard_normal((3, 3)))
    assert ops.l1_distance(x, x).item() == 0.0


def test_sigmoid_range():
    x = Tensor(np.linspace(-10, 10, 31))
    y = ops.sigmoid(x)
    assert y.data.min() > 0 and y.data.max() < 1


def test_conv_identity_1x1():
    x = Tensor(np.random.default_rng(1).standard_normal((2, 3, 5, 5)))
    w = np.zeros((3, 3, 1, 1))
    for c in range(3):
        w[c, c, 0, 0] = 1.0
    y = ops.conv2d(x, Tensor(w.astype(np.float32)))
    assert np.allclose(y.data, x.data, atol=1e-7)


def test_conv_zero_weights():
    x = Tensor(np.random.default_rng(2).standard_normal((1, 2, 4, 4)))
    y = ops.conv2d(x, Tensor(np.zeros((5, 2, 3, 3), np.float32)))
    assert np.abs(y.data).max() == 0


@pytest.mark.parametrize(
    "xshape,wshape,stride,pad",
    [
        ((1, 1, 5, 5), (1, 1, 3, 3), 1, "same"),
        ((2, 3, 6, 6), (4, 3, 3, 3), 1, "same"),
        ((1, 2, 8, 8), (3, 2, 2, 2), 2, "valid"),
        ((1, 2, 7, 7), (2, 2, 3, 3), 2, "valid"),
        ((1, 3, 5, 5), (2, 3, 1, 1), 1, "same"),
    ],
)
def test_conv_matches_loop_oracle(xshape, wshape, stride, pad):
    rng = np.random.default_rng(sum(xshape) + sum(wshape))
    x = rng.standard_normal(xshape)
    w = rng.standard_normal(wshape)
    ph, pw = (wshape[2] - 1) // 2 if pad == "same" else 0, (wshape[3] - 1) // 2 if pad == "same" else 0
    got = ops.conv2d(Tensor(x), Tensor(w), stride=stride, pad=pad)
    ref = conv2d_loop_oracle(x, w, stride, ph, pw)
    assert np.abs(got.data - ref).max() <= 1e-6


def test_depthwise_matches_loop_oracle():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 4, 6, 6))
    w = rng.standard_normal((4, 1, 3, 3))
    got = ops.conv2d(Tensor(x), Tensor(w), groups=4).data
    for c in range(4):
        ref = conv2d_loop_oracle(x[:, c : c + 1], w[c : c + 1], 1, 1, 1)
        assert np.abs(got[:, c : c + 1] - ref).max() <= 1e-6


def test_conv_invalid_stride():
    x = Tensor(np.zeros((1, 1, 4, 4)))
    w = Tensor(np.zeros((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        ops.conv2d(x, w, stride=0)


def test_simple_gate_contract():
    x = Tensor(np.ones((1, 8, 2, 2)))
    assert np.allclose(ops.simple_gate(x).data, 1.0)
    z = np.ones((1, 8, 2, 2), np.float32)
    z[:, 4:] = 0
    assert np.abs(ops.simple_gate(Tensor(z)).data).max() == 0
    with pytest.raises(ShapeError):
        ops.simple_gate(Tensor(np.ones((1, 3, 2, 2))))


def test_layer_norm_statistics():
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((2, 8, 4, 4)))
    y = ops.layer_norm(x, Tensor(np.ones(8, np.float32)), Tensor(np.zeros(8, np.float32)))
    mu = y.data.mean(axis=1)
    sd = y.data.std(axis=1)
    assert np.abs(mu).max() < 1e-5
    assert np.abs(sd - 1).max() < 1e-3


def test_pixel_shuffle_roundtrip_shapes():
    x = Tensor(np.random.default_rng(5).standard_normal((1, 8, 3, 3)))
    y = ops.pixel_shuffle(x, 2)
    assert y.shape == (1, 2, 6, 6)


def test_area_downscale_checkerboard():
    cb = np.indices((4, 4)).sum(axis=0) % 2
    x = Tensor(cb[None, None].astype(np.float32))
    y = ops.area_downscale(x, 2)
    assert np.allclose(y.data, 0.5)


def test_narrow_concat_roundtrip():
    rng = np.random.default_rng(6)
    a = Tensor(rng.standard_normal((1, 3, 2, 2)))
    b = Tensor(rng.standard_normal((1, 2, 2, 2)))
    cat = ops.concat_channels([a, b])
    assert np.array_equal(ops.narrow_channels(cat, 0, 3).data, a.data)
    assert np.array_equal(ops.narrow_channels(cat, 3, 2).data, b.data)


def test_upsample_then_downsample_is_identity():
    x = Tensor(np.random.default_rng(7).standard_normal((1, 2, 4, 4)))
    y = ops.area_downscale(ops.upsample_nearest2(x), 2)
    assert np.allclose(y.data, x.data, atol=1e-7)
