"""Learnable building blocks shared by the UNet and the kernel estimator.

The basic block follows the gate-based restoration design: two
residual branches (conv/depthwise/gate/channel-attention and a pointwise
FFN), each normalized and scaled by a per-channel gate initialized to
zero, so a fresh block is exactly the identity map.
"""

from __future__ import annotations

import numpy as np

from ..engine import Tensor, ops
from ..engine.fused import naf_block_fused
from .module import Module, Parameter


def conv_init(rng: np.random.Generator, out_c, in_c, kh, kw, dtype):
    """Fan-in scaled uniform, the standard conv default."""
    bound = 1.0 / np.sqrt(in_c * kh * kw)
    w = rng.uniform(-bound, bound, size=(out_c, in_c, kh, kw))
    b = rng.uniform(-bound, bound, size=(out_c,))
    return w.astype(dtype), b.astype(dtype)


class Conv2d(Module):
    def __init__(self, rng, in_c, out_c, k, stride=1, pad="same", groups=1, bias=True, dtype=np.float32):
        w, b = conv_init(rng, out_c, in_c // groups, k, k, dtype)
        self.w = Parameter(w)
        self.b = Parameter(b) if bias else None
        self.stride, self.pad, self.groups = stride, pad, groups

    def __call__(self, x):
        return ops.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad, groups=self.groups)


class LayerNorm2d(Module):
    def __init__(self, channels, eps=1e-6, dtype=np.float32):
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))
        self.eps = eps

    def __call__(self, x):
        return ops.layer_norm(x, self.weight, self.bias, eps=self.eps)


def simple_gate(x: Tensor) -> Tensor:
    return ops.simple_gate(x)


class NAFBlock(Module):
    """Gated residual block; identity at initialization (zero branch gates)."""

    def __init__(self, channels, rng, expansion=2, dtype=np.float32):
        c = channels
        dw = c * expansion
        self.norm1 = LayerNorm2d(c, dtype=dtype)
        self.conv1 = Conv2d(rng, c, dw, 1, dtype=dtype)
        self.dwconv = Conv2d(rng, dw, dw, 3, groups=dw, dtype=dtype)
        self.sca = Conv2d(rng, dw // 2, dw // 2, 1, dtype=dtype)
        self.conv3 = Conv2d(rng, dw // 2, c, 1, dtype=dtype)
        self.beta = Parameter(np.zeros(c, dtype=dtype))
        self.norm2 = LayerNorm2d(c, dtype=dtype)
        self.conv4 = Conv2d(rng, c, c * expansion, 1, dtype=dtype)
        self.conv5 = Conv2d(rng, c * expansion // 2, c, 1, dtype=dtype)
        self.gamma = Parameter(np.zeros(c, dtype=dtype))

    def _param_map(self) -> dict:
        return {
            "g1": self.norm1.weight, "b1": self.norm1.bias,
            "w1": self.conv1.w, "c1": self.conv1.b,
            "wd": self.dwconv.w, "cd": self.dwconv.b,
            "ws": self.sca.w, "cs": self.sca.b,
            "w3": self.conv3.w, "c3": self.conv3.b,
            "beta": self.beta,
            "g2": self.norm2.weight, "b2": self.norm2.bias,
            "w4": self.conv4.w, "c4": self.conv4.b,
            "w5": self.conv5.w, "c5": self.conv5.b,
            "gamma": self.gamma,
        }

    def __call__(self, x):
        return naf_block_fused(x, self._param_map())

    def compose(self, x):
        """Same computation through the compositional ops; the fused
        path is pinned against this in the gradient tests."""
        h = self.norm1(x)
        h = self.conv1(h)
        h = self.dwconv(h)
        h = simple_gate(h)
        h = ops.mul_channelwise(h, self.sca(ops.global_avg_pool(h)))
        h = self.conv3(h)
        x = ops.add(x, ops.channel_scale(h, self.beta))
        h = self.norm2(x)
        h = self.conv4(h)
        h = simple_gate(h)
        h = self.conv5(h)
        return ops.add(x, ops.channel_scale(h, self.gamma))


BLOCK_KINDS = ("naf",)


def make_block(kind: str, channels: int, rng, dtype=np.float32) -> Module:
    """Basic-block factory; the slot where a state-space block could plug in."""
    if kind == "naf":
        return NAFBlock(channels, rng, dtype=dtype)
    raise ValueError(f"unknown block kind {kind!r}; available: {BLOCK_KINDS}")


class BlockStack(Module):
    def __init__(self, kind, channels, count, rng, dtype=np.float32):
        self.blocks = [make_block(kind, channels, rng, dtype) for _ in range(count)]

    def __call__(self, x):
        for blk in self.blocks:
            x = blk(x)
        return x


class Downsample(Module):
    """Stride-2 2x2 conv doubling channels; requires even extents."""

    def __init__(self, channels, rng, dtype=np.float32):
        self.conv = Conv2d(rng, channels, channels * 2, 2, stride=2, pad="valid", dtype=dtype)

    def __call__(self, x):
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise ops.ShapeError(f"downsample needs even extents, got {h}x{w}")
        return self.conv(x)


class Upsample(Module):
    """1x1 conv to 4x the output channel count, then depth-to-space.

    (B, C, H, W) -> (B, C/2, 2H, 2W).
    """

    def __init__(self, channels, rng, dtype=np.float32):
        self.conv = Conv2d(rng, channels, channels * 2, 1, bias=False, dtype=dtype)

    def __call__(self, x):
        return ops.pixel_shuffle(self.conv(x), 2)


def image_downscale(x: Tensor, n: int) -> Tensor:
    """Area-average the image pyramid level n (factor 2^(n-1))."""
    if n < 1:
        raise ops.ShapeError(f"scale index must be >= 1, got {n}")
    return ops.area_downscale(x, 2 ** (n - 1))
