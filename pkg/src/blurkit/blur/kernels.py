"""Synthetic blur kernels: motion arcs, Gaussians and deltas.

All kernels live on an odd square support with the origin at the grid
center, are nonnegative and sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class BlurKernelSpec:
    """Parametric kernel description plus its rasterized grid."""

    kind: str  # motion | gaussian | delta
    support: int
    length: float = 1.0  # pixels along the arc (motion)
    angle: float = 0.0  # radians, 0 = horizontal (motion)
    curvature: float = 0.0  # dimensionless bend (motion)
    sigma: float = 0.0  # pixels (gaussian)
    grid: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.support % 2 == 0 or self.support < 1:
            raise ValueError(f"support must be odd and >= 1, got {self.support}")
        if self.grid is not None:
            self.validate()

    def validate(self):
        g = self.grid
        if g.shape != (self.support, self.support):
            raise ValueError(f"grid shape {g.shape} != support {self.support}")
        if g.min() < 0:
            raise ValueError("kernel weights must be nonnegative")
        if abs(float(g.sum()) - 1.0) > 1e-6:
            raise ValueError(f"kernel sum {g.sum()} != 1")


def make_delta_kernel(support: int = 1) -> BlurKernelSpec:
    grid = np.zeros((support, support), dtype=np.float64)
    grid[support // 2, support // 2] = 1.0
    return BlurKernelSpec(kind="delta", support=support, grid=grid)


def make_motion_kernel(
    length: float, angle: float, curvature: float, support: int
) -> BlurKernelSpec:
    """Rasterize a motion arc through the grid center.

    The arc is sampled at unit spacing along its parameter so an
    axis-aligned straight stroke of integer length L lands exactly on L
    pixel centers with weight 1/L each; oblique or curved strokes are
    antialiased by bilinear deposit.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if length > support:
        raise ValueError(f"length {length} exceeds support {support}")
    if support % 2 == 0:
        raise ValueError("support must be odd")

    n = max(1, int(round(length)))
    c = support // 2
    grid = np.zeros((support, support), dtype=np.float64)
    if n == 1:
        grid[c, c] = 1.0
        return BlurKernelSpec("motion", support, length, angle, curvature, grid=grid)

    t = np.linspace(-0.5, 0.5, n)
    u = (length - 1.0) * t
    v = curvature * (length - 1.0) * t * t
    v -= v.mean()  # keep the arc mass centered
    ca, sa = np.cos(angle), np.sin(angle)
    xs = u * ca - v * sa
    ys = u * sa + v * ca

    for x, y in zip(xs, ys):
        gx, gy = c + x, c + y
        x0, y0 = int(np.floor(gx)), int(np.floor(gy))
        fx, fy = gx - x0, gy - y0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                w = wy * wx
                if w <= 0:
                    continue
                yy, xx = y0 + dy, x0 + dx
                if not (0 <= yy < support and 0 <= xx < support):
                    raise ValueError("motion arc leaves the kernel support")
                grid[yy, xx] += w
    grid /= grid.sum()
    return BlurKernelSpec("motion", support, length, angle, curvature, grid=grid)


def make_gaussian_kernel(sigma: float, support: int) -> BlurKernelSpec:
    """Truncated isotropic Gaussian; tiny sigmas clamp to a delta."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    c = support // 2
    ax = np.arange(support, dtype=np.float64) - c
    with np.errstate(under="ignore"):
        g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    total = g.sum()
    if total <= 0 or not np.isfinite(total):
        return make_delta_kernel(support)
    grid = g / total
    return BlurKernelSpec("gaussian", support, sigma=sigma, grid=grid)


def embed_centered(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Place a kernel grid on an H x W canvas centered at (H//2, W//2)."""
    s = grid.shape[0]
    c = s // 2
    canvas = np.zeros((height, width), dtype=np.float64)
    cy, cx = height // 2, width // 2
    canvas[cy - c : cy - c + s, cx - c : cx - c + s] = grid
    return canvas


def pad_to_image(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Zero-pad a kernel to image size with its center at pixel (0, 0)."""
    s = grid.shape[0]
    if s > min(height, width):
        raise ValueError(f"kernel support {s} exceeds image {height}x{width}")
    canvas = np.zeros((height, width), dtype=np.float64)
    canvas[:s, :s] = grid
    return np.roll(canvas, (-(s // 2), -(s // 2)), axis=(0, 1))
