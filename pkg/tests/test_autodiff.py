"""Autodiff engine: backward semantics, linearity, determinism."""

import numpy as np
import pytest

from blurkit.engine import (
    GraphError,
    ShapeError,
    Tensor,
    backward,
    graph_nodes,
    no_grad,
    ops,
)


def test_sum_gradient_is_ones():
    x = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True)
    backward(ops.sum_all(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_mean_gradient_is_inverse_count():
    x = Tensor(np.zeros((4, 5)), dtype=np.float64, requires_grad=True)
    backward(ops.mean(x))
    assert np.allclose(x.grad, 1.0 / 20.0)


def test_quadratic_through_fft_roundtrip():
    from blurkit.engine import fft2, ifft2

    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((1, 1, 8, 8)), dtype=np.float64, requires_grad=True)
    y = ifft2(fft2(x))
    loss = ops.scale(ops.sum_all(ops.mul(y, y)), 0.5)
    backward(loss)
    assert np.abs(x.grad - x.data).max() <= 1e-6


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ops.mul(x, 2.0)
    with pytest.raises(ShapeError):
        backward(y)


def test_backward_rejects_detached():
    x = Tensor(np.ones(3))
    y = ops.mean(ops.mul(x, 2.0))
    with pytest.raises(GraphError):
        backward(y)


def test_no_grad_suppresses_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ops.mean(ops.mul(x, x))
    assert y.is_leaf() and not y.requires_grad


def test_gradient_accumulates_once_per_backward():
    x = Tensor(np.ones(4), requires_grad=True)
    y = ops.add(x, x)  # two graph paths into the same leaf
    backward(ops.sum_all(y))
    assert np.allclose(x.grad, 2.0)


def test_linearity_of_backward():
    rng = np.random.default_rng(1)
    a, b = 2.5, -1.25

    def grads(scale_one, scale_two):
        x = Tensor(rng_state.copy(), dtype=np.float64, requires_grad=True)
        l1 = ops.mean(ops.mul(x, x))
        l2 = ops.mean(ops.relu(x))
        backward(ops.add(ops.scale(l1, scale_one), ops.scale(l2, scale_two)))
        return x.grad

    rng_state = rng.standard_normal((3, 3))
    g_combo = grads(a, b)
    g1 = grads(1.0, 0.0)
    g2 = grads(0.0, 1.0)
    assert np.allclose(g_combo, a * g1 + b * g2, atol=1e-12)


def test_forward_determinism_bitwise():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((2, 4, 8, 8)).astype(np.float32))
    w = Tensor(rng.standard_normal((4, 4, 3, 3)).astype(np.float32))
    y1 = ops.conv2d(x, w)
    y2 = ops.conv2d(x, w)
    assert np.array_equal(y1.data, y2.data)


def test_graph_nodes_topological():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ops.mul(ops.add(x, 1.0), 2.0)
    z = ops.mean(y)
    order = graph_nodes(z)
    pos = {id(t): i for i, t in enumerate(order)}
    for node in order:
        for parent in node._parents:
            if id(parent) in pos:
                assert pos[id(parent)] < pos[id(node)]


def test_broadcast_limited_to_scalar():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((2, 1)))
    with pytest.raises(ShapeError):
        ops.add(a, b)
    assert np.allclose(ops.add(a, 1.5).data, 2.5)


def test_composite_block_gradcheck_f32_and_f64(rng):
    """Finite differences over a gated residual block at both dtypes."""
    from blurkit.model.blocks import NAFBlock

    # f32 needs a larger step to stay above the arithmetic noise floor
    for dtype, tol, h in ((np.float64, 1e-6, 1e-6), (np.float32, 1e-3, 1e-2)):
        blk = NAFBlock(6, np.random.default_rng(3), dtype=dtype)
        prng = np.random.default_rng(4)
        for name, p in blk.named_parameters():
            p.data = (0.3 * prng.standard_normal(p.data.shape)).astype(dtype)
        x = Tensor(rng.standard_normal((1, 6, 6, 6)), dtype=dtype, requires_grad=True)

        def loss():
            y = blk(x)
            return ops.mean(ops.mul(y, y))

        backward(loss())
        ana = x.grad.astype(np.float64)
        num = np.zeros_like(ana)
        flat = x.data.reshape(-1)
        nf = num.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = dtype(orig + h)
                fp = loss().item()
                flat[i] = dtype(orig - h)
                fm = loss().item()
                flat[i] = orig
                nf[i] = (fp - fm) / (2 * h)
        rel = np.abs(ana - num).max() / max(1e-9, np.abs(num).max())
        assert rel <= tol, f"{dtype}: rel err {rel}"
