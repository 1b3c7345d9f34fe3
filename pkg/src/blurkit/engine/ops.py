"""Differentiable array operations.

Everything here is a pure function (input tensors, optional parameter
tensors) returning a fresh Tensor wired into the autodiff graph. Shapes
are validated eagerly; broadcasting is limited to scalar-with-tensor,
other mismatches raise ShapeError.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_node

# ---------------------------------------------------------------------------
# elementwise suite
# ---------------------------------------------------------------------------


def _binary_operands(a, b):
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        return a, None, float(b)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    return a, b, None


def add(a, b) -> Tensor:
    a, bt, c = _binary_operands(a, b)
    if bt is None:
        return make_node(a.data + a.dtype.type(c), (a,), lambda g: (g,))
    return make_node(a.data + bt.data, (a, bt), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, bt, c = _binary_operands(a, b)
    if bt is None:
        return make_node(a.data - a.dtype.type(c), (a,), lambda g: (g,))
    return make_node(a.data - bt.data, (a, bt), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, bt, c = _binary_operands(a, b)
    if bt is None:
        cc = a.dtype.type(c)
        return make_node(a.data * cc, (a,), lambda g: (g * cc,))
    ad, bd = a.data, bt.data
    return make_node(ad * bd, (a, bt), lambda g: (g * bd, g * ad))


def scale(a, s: float) -> Tensor:
    return mul(a, float(s))


def scale_by(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a tensor by a learnable scalar (0-d) tensor."""
    if s.data.shape != ():
        raise ShapeError(f"scale_by expects a scalar tensor, got {s.data.shape}")
    xd, sd = x.data, s.data

    def back(g):
        return g * sd, np.asarray((g * xd).sum(), dtype=sd.dtype)

    return make_node(xd * sd, (x, s), back)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))
    return make_node(y, (x,), lambda g: (g * y * (1.0 - y),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    inv = 1.0 / x.size
    return make_node(
        np.asarray(x.data.mean(), dtype=x.dtype),
        (x,),
        lambda g: (np.broadcast_to(g * x.dtype.type(inv), x.shape).astype(x.dtype, copy=True),),
    )


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return make_node(
        np.asarray(x.data.sum(), dtype=x.dtype),
        (x,),
        lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),),
    )


def l1_distance(a, b) -> Tensor:
    """Mean absolute difference; the subgradient at 0 is 0."""
    a, bt, c = _binary_operands(a, b)
    if bt is None:
        raise ShapeError("l1_distance expects two tensors")
    diff = a.data - bt.data
    inv = 1.0 / diff.size

    def back(g):
        s = np.sign(diff) * (g * inv)
        return s.astype(a.dtype), (-s).astype(a.dtype)

    return make_node(np.asarray(np.abs(diff).mean(), dtype=a.dtype), (a, bt), back)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _pad_hw(kh: int, kw: int, pad: str):
    if pad == "same":
        return (kh - 1) // 2, (kw - 1) // 2
    if pad == "valid":
        return 0, 0
    raise ShapeError(f"pad must be 'same' or 'valid', got {pad!r}")


def _zero_pad(arr: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if not ph and not pw:
        return arr
    b, c, h, w = arr.shape
    out = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=arr.dtype)
    out[:, :, ph : ph + h, pw : pw + w] = arr
    return out


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, C, Hp, Wp) -> (B*Ho*Wo, C*kh*kw) window matrix."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    return (
        win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw),
        ho,
        wo,
    )


def conv2d(x, w, bias=None, stride: int = 1, pad: str = "same", groups: int = 1) -> Tensor:
    """Cross-correlation with zero padding, as standard in learned layers.

    ``w`` has shape (out, in/groups, kh, kw). Output extents follow the
    floor formula (H + 2*ph - kh)//stride + 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    if stride < 1:
        raise ShapeError(f"invalid stride {stride}")
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d expects NCHW input and OIHW weights")
    b, cin, h, wd = x.shape
    out, cg, kh, kw = w.shape
    if cg * groups != cin:
        raise ShapeError(f"in-channels {cin} != weight {cg} * groups {groups}")
    ph, pw = _pad_hw(kh, kw, pad)
    if h + 2 * ph < kh or wd + 2 * pw < kw:
        raise ShapeError("kernel larger than padded input")

    if groups == 1:
        if kh == 1 and kw == 1 and stride == 1:
            y = _conv_1x1(x, w)
        elif kh == stride and kw == stride and ph == 0 and pw == 0 and h % kh == 0 and wd % kw == 0:
            y = _conv_patchify(x, w)
        else:
            y = _conv_dense(x, w, stride, ph, pw)
    elif groups == cin and cg == 1 and out == cin and stride == 1:
        y = _conv_depthwise(x, w)
    else:
        raise ShapeError("only dense (groups=1) and depthwise convolutions are supported")

    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out,):
            raise ShapeError(f"bias shape {bias.shape} != ({out},)")
        bd = bias.data

        def back_bias(g):
            return g, g.sum(axis=(0, 2, 3))

        y = make_node(y.data + bd[None, :, None, None], (y, bias), back_bias)
    return y


def _conv_1x1(x: Tensor, w: Tensor) -> Tensor:
    """Pointwise conv as one batched matrix product."""
    b, cin, h, wd = x.shape
    out = w.shape[0]
    wm = w.data.reshape(out, cin)
    x3 = x.data.reshape(b, cin, h * wd)
    y = np.matmul(wm[None], x3).reshape(b, out, h, wd)

    def back(g):
        g3 = g.reshape(b, out, h * wd)
        dx = np.matmul(wm.T[None], g3).reshape(x.shape)
        dw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0)
        return dx, np.ascontiguousarray(dw.reshape(w.shape), dtype=w.dtype)

    return make_node(y, (x, w), back)


def _conv_patchify(x: Tensor, w: Tensor) -> Tensor:
    """Non-overlapping k x k stride-k conv via a reshape (no windowing)."""
    b, cin, h, wd = x.shape
    out, _, k, _ = w.shape
    ho, wo = h // k, wd // k
    def im2col_patch(arr):
        return (
            arr.reshape(b, cin, ho, k, wo, k)
            .transpose(0, 2, 4, 1, 3, 5)
            .reshape(b * ho * wo, cin * k * k)
        )

    wm = w.data.reshape(out, -1)
    y = (im2col_patch(x.data) @ wm.T).reshape(b, ho, wo, out).transpose(0, 3, 1, 2)

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, out)
        dw = (gm.T @ im2col_patch(x.data)).reshape(w.shape).astype(w.dtype)
        dcols = gm @ wm
        dx = (
            dcols.reshape(b, ho, wo, cin, k, k)
            .transpose(0, 3, 1, 4, 2, 5)
            .reshape(b, cin, h, wd)
        )
        return np.ascontiguousarray(dx, dtype=x.dtype), dw

    return make_node(np.ascontiguousarray(y), (x, w), back)


def _conv_dense(x: Tensor, w: Tensor, stride: int, ph: int, pw: int) -> Tensor:
    b, cin, h, wd = x.shape
    out, _, kh, kw = w.shape
    xd, wdat = x.data, w.data

    def pad_input(arr):
        return _zero_pad(arr, ph, pw)

    xp = pad_input(xd)
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    y = (cols @ wdat.reshape(out, -1).T).reshape(b, ho, wo, out).transpose(0, 3, 1, 2)

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, out)
        cols2, _, _ = _im2col(pad_input(xd), kh, kw, stride)
        dw = (gm.T @ cols2).reshape(out, cin, kh, kw).astype(wdat.dtype)
        # dx: correlate the stride-dilated gradient with the flipped kernel
        if stride > 1:
            gd = np.zeros((b, out, (ho - 1) * stride + 1, (wo - 1) * stride + 1), dtype=g.dtype)
            gd[:, :, ::stride, ::stride] = g
        else:
            gd = g
        gp = _zero_pad(gd, kh - 1, kw - 1)
        wflip = wdat[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (cin, out, kh, kw)
        gcols, hp, wp = _im2col(gp, kh, kw, 1)
        dxp = (
            (gcols @ wflip.reshape(cin, -1).T)
            .reshape(b, hp, wp, cin)
            .transpose(0, 3, 1, 2)
        )
        dx = dxp[:, :, ph : ph + h, pw : pw + wd]
        return np.ascontiguousarray(dx, dtype=xd.dtype), dw

    return make_node(np.ascontiguousarray(y), (x, w), back)


def _conv_depthwise(x: Tensor, w: Tensor) -> Tensor:
    """Stride-1 depthwise conv via shift-and-add (kernels are tiny)."""
    b, c, h, wd = x.shape
    _, _, kh, kw = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xd = x.data
    wk = w.data[:, 0]  # (C, kh, kw)
    xp = _zero_pad(xd, ph, pw)
    y = np.zeros_like(xd)
    tmp = np.empty_like(xd)
    for u in range(kh):
        for v in range(kw):
            np.multiply(wk[:, u, v][None, :, None, None], xp[:, :, u : u + h, v : v + wd], out=tmp)
            y += tmp

    def back(g):
        dw = np.empty_like(wk)
        dxp = np.zeros_like(xp)
        buf = np.empty_like(g)
        for u in range(kh):
            for v in range(kw):
                dw[:, u, v] = np.einsum(
                    "bchw,bchw->c", g, xp[:, :, u : u + h, v : v + wd]
                )
                np.multiply(wk[:, u, v][None, :, None, None], g, out=buf)
                dxp[:, :, u : u + h, v : v + wd] += buf
        dx = dxp[:, :, ph : ph + h, pw : pw + wd]
        return np.ascontiguousarray(dx), dw[:, None]

    return make_node(y, (x, w), back)


# ---------------------------------------------------------------------------
# normalization, gating, attention
# ---------------------------------------------------------------------------


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Layer normalization over the channel axis at every spatial position."""
    x = as_tensor(x)
    c = x.shape[1]
    if weight.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"affine shapes {weight.shape}/{bias.shape} != ({c},)")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    wcol = weight.data[None, :, None, None]
    y = xhat * wcol + bias.data[None, :, None, None]

    def back(g):
        dw = (g * xhat).sum(axis=(0, 2, 3))
        db = g.sum(axis=(0, 2, 3))
        gx = g * wcol
        m1 = gx.mean(axis=1, keepdims=True)
        m2 = (gx * xhat).mean(axis=1, keepdims=True)
        dx = inv * (gx - m1 - xhat * m2)
        return dx.astype(x.dtype), dw.astype(weight.dtype), db.astype(bias.dtype)

    return make_node(y.astype(x.dtype), (x, weight, bias), back)


def simple_gate(x) -> Tensor:
    """Split channels in half, multiply the halves (C -> C/2)."""
    x = as_tensor(x)
    c = x.shape[1]
    if c % 2:
        raise ShapeError(f"simple_gate needs an even channel count, got {c}")
    h = c // 2
    x1, x2 = x.data[:, :h], x.data[:, h:]

    def back(g):
        return np.concatenate((g * x2, g * x1), axis=1),

    return make_node(x1 * x2, (x,), back)


def global_avg_pool(x) -> Tensor:
    x = as_tensor(x)
    _, _, h, w = x.shape
    inv = x.dtype.type(1.0 / (h * w))
    y = x.data.mean(axis=(2, 3), keepdims=True)

    def back(g):
        return (np.broadcast_to(g * inv, x.shape).astype(x.dtype, copy=True),)

    return make_node(y, (x,), back)


def mul_channelwise(x: Tensor, a: Tensor) -> Tensor:
    """x:(B,C,H,W) scaled by per-sample channel weights a:(B,C,1,1)."""
    if a.shape != (x.shape[0], x.shape[1], 1, 1):
        raise ShapeError(f"channel weights {a.shape} do not match input {x.shape}")
    xd, ad = x.data, a.data

    def back(g):
        return g * ad, (g * xd).sum(axis=(2, 3), keepdims=True)

    return make_node(xd * ad, (x, a), back)


def channel_scale(x: Tensor, weight: Tensor) -> Tensor:
    """Per-channel learnable scale (the zero-init residual gates)."""
    c = x.shape[1]
    if weight.shape != (c,):
        raise ShapeError(f"channel_scale weight {weight.shape} != ({c},)")
    wcol = weight.data[None, :, None, None]
    xd = x.data

    def back(g):
        return g * wcol, (g * xd).sum(axis=(0, 2, 3)).astype(weight.dtype)

    return make_node(xd * wcol, (x, weight), back)


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------


def concat_channels(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    ref = parts[0]
    for p in parts[1:]:
        if p.shape[0] != ref.shape[0] or p.shape[2:] != ref.shape[2:]:
            raise ShapeError("concat_channels: non-channel extents differ")
    sizes = [p.shape[1] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=1))

    return make_node(np.concatenate([p.data for p in parts], axis=1), tuple(parts), back)


def narrow_channels(x: Tensor, start: int, count: int) -> Tensor:
    c = x.shape[1]
    if start < 0 or start + count > c:
        raise ShapeError(f"narrow [{start}:{start + count}] out of {c} channels")

    def back(g):
        dx = np.zeros(x.shape, dtype=x.dtype)
        dx[:, start : start + count] = g
        return (dx,)

    return make_node(np.ascontiguousarray(x.data[:, start : start + count]), (x,), back)


def pixel_shuffle(x: Tensor, r: int = 2) -> Tensor:
    """Depth-to-space: (B, C*r*r, H, W) -> (B, C, H*r, W*r)."""
    b, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(f"channels {c} not divisible by {r * r}")
    co = c // (r * r)
    y = (
        x.data.reshape(b, co, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, co, h * r, w * r)
    )

    def back(g):
        dg = (
            g.reshape(b, co, h, r, w, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(b, c, h, w)
        )
        return (np.ascontiguousarray(dg),)

    return make_node(np.ascontiguousarray(y), (x,), back)


def avg_pool2(x: Tensor) -> Tensor:
    return area_downscale(x, 2)


def area_downscale(x: Tensor, factor: int) -> Tensor:
    """Area-average downscale by an integer factor."""
    x = as_tensor(x)
    if factor == 1:
        return make_node(x.data.copy(), (x,), lambda g: (g,))
    b, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"extents {h}x{w} not divisible by {factor}")
    ho, wo = h // factor, w // factor
    y = x.data.reshape(b, c, ho, factor, wo, factor).mean(axis=(3, 5))
    inv = x.dtype.type(1.0 / (factor * factor))

    def back(g):
        gg = np.broadcast_to(
            g[:, :, :, None, :, None] * inv, (b, c, ho, factor, wo, factor)
        )
        return (gg.reshape(b, c, h, w).astype(x.dtype, copy=True),)

    return make_node(y.astype(x.dtype), (x,), back)


def upsample_nearest2(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    y = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def back(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)).astype(x.dtype),)

    return make_node(y, (x,), back)
