"""Image quality metrics, feature-similarity (CKA) and orientation tools."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); identical inputs report +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _window_filter(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    return np.einsum("...uv,uv->...", view, win)


def ssim(a, b, peak: float = 1.0, win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean structural similarity with a Gaussian window.

    Accepts (H, W) or (C, H, W); channels are averaged. Standard
    stabilizers C1=(0.01 peak)^2, C2=(0.03 peak)^2.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[-1] < win_size or a.shape[-2] < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} window")
    win = _gaussian_window(win_size, sigma)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    vals = []
    for ch in range(a.shape[0]):
        mu_a = _window_filter(a[ch], win)
        mu_b = _window_filter(b[ch], win)
        saa = _window_filter(a[ch] * a[ch], win) - mu_a * mu_a
        sbb = _window_filter(b[ch] * b[ch], win) - mu_b * mu_b
        sab = _window_filter(a[ch] * b[ch], win) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def cka_similarity(x: np.ndarray, y: np.ndarray) -> float:
    """Linear centered kernel alignment between two feature sets.

    ``x`` (n, p) and ``y`` (n, q) share the sample axis only. Computed
    on column-centered features through the n x n Gram matrices, so
    very wide features stay cheap. Invariant to orthogonal transforms
    and isotropic scaling of either argument.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"need (n,p)/(n,q) with equal n, got {x.shape} vs {y.shape}")
    xc = x - x.mean(axis=0, keepdims=True)
    yc = y - y.mean(axis=0, keepdims=True)
    gx = xc @ xc.T
    gy = yc @ yc.T
    nx = float(np.linalg.norm(gx))
    ny = float(np.linalg.norm(gy))
    if nx == 0.0 or ny == 0.0:
        raise ValueError("zero-variance features have no defined CKA")
    return float(np.sum(gx * gy) / (nx * ny))


def orientation_degrees(weights: np.ndarray) -> float:
    """Principal-axis angle of a nonnegative weight image, in [0, 180).

    Measured from the +x (width) axis via central second moments around
    the weighted centroid, matching the motion-kernel angle convention.
    """
    w = np.asarray(weights, dtype=np.float64)
    w = np.maximum(w, 0.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("orientation of an empty weight image is undefined")
    h, wd = w.shape
    ys, xs = np.mgrid[0:h, 0:wd]
    cx = float((w * xs).sum() / total)
    cy = float((w * ys).sum() / total)
    dx = xs - cx
    dy = ys - cy
    m20 = float((w * dx * dx).sum() / total)
    m02 = float((w * dy * dy).sum() / total)
    m11 = float((w * dx * dy).sum() / total)
    ang = 0.5 * math.atan2(2.0 * m11, m20 - m02)
    return math.degrees(ang) % 180.0


def angle_diff_deg(a: float, b: float) -> float:
    """Distance between undirected orientations, in [0, 90]."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


@dataclass
class MetricsRecord:
    step: int = 0
    lr: float = 0.0
    loss: float = 0.0
    psnr: float = 0.0
    ssim: float = 0.0
    psnr_input: float = 0.0  # blurred-input baseline
    kernel_orientation_err: float = float("nan")
    orientation_hit_rate: float = float("nan")
    cka: list = field(default_factory=list)  # per estimator depth

    def line(self) -> str:
        return (
            f"{self.step}\t{self.lr:.8g}\t{self.loss:.6f}\t{self.psnr:.4f}\t{self.ssim:.5f}"
        )
