"""Procedural sharp/blur patch datasets.

Sharp sources are synthesized (filtered noise, random convex polygons,
linear gradients) so nothing ships with the repo; every sample is
regenerated bit-identically from (manifest, seed, index).

On-disk layout::

    <root>/manifest.cfg
    <root>/{train,val}/<idx>_sharp.drt
    <root>/{train,val}/<idx>_blur.drt
    <root>/{train,val}/<idx>_kernel.drt
    <root>/{train,val}/<idx>_{sharp,blur}.png   (optional mirrors)
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .. import config as cfgmod
from ..engine import Tensor, fft2_raw, ifft2_raw, save_tensor, load_tensor
from .degrade import DegradationSpec, apply_blur_spatial
from .kernels import BlurKernelSpec, make_gaussian_kernel, make_motion_kernel

SPLITS = ("train", "val")


@dataclass
class DatasetManifest:
    train_count: int = 96
    val_count: int = 16
    patch: int = 64
    seed: int = 0
    # texture source
    noise_cutoff_lo: float = 2.0
    noise_cutoff_hi: float = 10.0
    polygons_max: int = 5
    gradient_strength: float = 0.35
    # degradation family
    kernel_kind: str = "motion"  # motion | gaussian | mixed
    support: int = 15
    length_lo: float = 5.0
    length_hi: float = 11.0
    curvature_lo: float = 0.0
    curvature_hi: float = 0.3
    sigma_lo: float = 0.8
    sigma_hi: float = 2.0
    noise_sigma: float = 0.0
    boundary: str = "circular"

    def count(self, split: str) -> int:
        return self.train_count if split == "train" else self.val_count

    def to_sections(self) -> dict:
        return {"dataset": {k: _fmt(v) for k, v in asdict(self).items()}}


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


_STREAM_TAGS = {"texture": 0, "degrade": 1}


def _sample_rng(seed: int, split: str, index: int, tag: str) -> np.random.Generator:
    split_id = SPLITS.index(split)
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(split_id, index, _STREAM_TAGS[tag]))
    )


def sample_degradation(m: DatasetManifest, split: str, index: int) -> DegradationSpec:
    """Deterministic per-sample degradation drawn from the manifest family."""
    rng = _sample_rng(m.seed, split, index, "degrade")
    kind = m.kernel_kind
    if kind == "mixed":
        kind = "motion" if rng.random() < 0.5 else "gaussian"
    if kind == "motion":
        length = rng.uniform(m.length_lo, m.length_hi)
        angle = rng.uniform(0.0, np.pi)
        curvature = rng.uniform(m.curvature_lo, m.curvature_hi)
        kernel = make_motion_kernel(length, angle, curvature, m.support)
    elif kind == "gaussian":
        kernel = make_gaussian_kernel(rng.uniform(m.sigma_lo, m.sigma_hi), m.support)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    noise_seed = int(rng.integers(0, 2**63 - 1))
    return DegradationSpec(
        kernel=kernel, noise_sigma=m.noise_sigma, boundary=m.boundary, seed=noise_seed
    )


def procedural_texture(rng: np.random.Generator, patch: int, m: DatasetManifest) -> np.ndarray:
    """Sharp (3, patch, patch) image in [0, 1]: smoothed noise base plus
    random convex polygons and a linear gradient."""
    h = w = patch
    fy = np.fft.fftfreq(h)[:, None] * h
    fx = np.fft.fftfreq(w)[None, :] * w
    cutoff = rng.uniform(m.noise_cutoff_lo, m.noise_cutoff_hi)
    lowpass = np.exp(-(fy**2 + fx**2) / (2.0 * cutoff**2))

    img = np.zeros((3, h, w), dtype=np.float64)
    base = rng.standard_normal((h, w))
    base = ifft2_raw(fft2_raw(base) * lowpass).real
    tint = rng.uniform(0.3, 0.9, size=3)
    spread = base.std() + 1e-9
    for ch in range(3):
        img[ch] = 0.5 + 0.25 * base / spread * rng.uniform(0.6, 1.4) * tint[ch]

    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.integers(0, m.polygons_max + 1))):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        radius = rng.uniform(patch * 0.08, patch * 0.3)
        nv = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0, 2 * np.pi, nv))
        px = cx + radius * np.cos(angles)
        py = cy + radius * np.sin(angles)
        mask = np.ones((h, w), dtype=bool)
        for i in range(nv):
            x0, y0 = px[i], py[i]
            x1, y1 = px[(i + 1) % nv], py[(i + 1) % nv]
            mask &= (xx - x0) * (y1 - y0) - (yy - y0) * (x1 - x0) <= 0
        color = rng.uniform(0.05, 0.95, size=3)
        alpha = rng.uniform(0.5, 1.0)
        for ch in range(3):
            img[ch] = np.where(mask, (1 - alpha) * img[ch] + alpha * color[ch], img[ch])

    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * xx / w + np.sin(theta) * yy / h) * rng.uniform(
        -m.gradient_strength, m.gradient_strength
    )
    img += ramp[None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_sample(m: DatasetManifest, split: str, index: int):
    """(sharp, blur, spec) for one sample; pure function of the manifest."""
    rng = _sample_rng(m.seed, split, index, "texture")
    sharp = procedural_texture(rng, m.patch, m)
    spec = sample_degradation(m, split, index)
    blur = apply_blur_spatial(Tensor(sharp), spec).data.astype(np.float32)
    return sharp, blur, spec


def generate_dataset(m: DatasetManifest, root, png_mirrors: bool = False) -> Path:
    """Materialize the dataset on disk; rerunning with the same manifest
    and seed produces byte-identical files."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.cfg").write_text(cfgmod.format_config(m.to_sections()))
    for split in SPLITS:
        sub = root / split
        sub.mkdir(exist_ok=True)
        for idx in range(m.count(split)):
            sharp, blur, spec = make_sample(m, split, idx)
            save_tensor(sub / f"{idx:05d}_sharp.drt", sharp)
            save_tensor(sub / f"{idx:05d}_blur.drt", blur)
            save_tensor(sub / f"{idx:05d}_kernel.drt", spec.kernel.grid.astype(np.float32))
            if png_mirrors:
                from ..report import save_image

                save_image(sub / f"{idx:05d}_sharp.png", sharp)
                save_image(sub / f"{idx:05d}_blur.png", blur)
    return root


def read_manifest(root) -> DatasetManifest:
    sections = cfgmod.load_config(Path(root) / "manifest.cfg")
    body = sections.get("dataset", {})
    kwargs = {}
    for name, f in DatasetManifest.__dataclass_fields__.items():
        if name in body:
            kind = type(f.default)
            kwargs[name] = cfgmod.coerce(body[name], kind)
    return DatasetManifest(**kwargs)


@dataclass
class Sample:
    sharp: np.ndarray
    blur: np.ndarray
    kernel: np.ndarray
    spec: DegradationSpec


def load_sample(root, split: str, index: int, m: DatasetManifest | None = None) -> Sample:
    root = Path(root)
    m = m or read_manifest(root)
    sharp = load_tensor(root / split / f"{index:05d}_sharp.drt")
    blur = load_tensor(root / split / f"{index:05d}_blur.drt")
    kernel = load_tensor(root / split / f"{index:05d}_kernel.drt")
    return Sample(sharp, blur, kernel, sample_degradation(m, split, index))
