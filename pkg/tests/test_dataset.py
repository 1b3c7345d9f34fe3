"""Dataset generation: determinism, layout, self-consistency."""

import hashlib
from pathlib import Path

import numpy as np

from blurkit.blur import (
    DatasetManifest,
    apply_blur_spatial,
    generate_dataset,
    load_sample,
    make_sample,
    read_manifest,
    sample_degradation,
)
from blurkit.engine import Tensor, load_tensor


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_zero_count_dataset(tmp_path):
    m = DatasetManifest(train_count=0, val_count=0, patch=32, seed=1)
    root = generate_dataset(m, tmp_path / "empty")
    assert (root / "manifest.cfg").exists()
    echo = read_manifest(root)
    assert echo.train_count == 0 and echo.patch == 32


def test_same_seed_byte_identical(tmp_path):
    m = DatasetManifest(train_count=3, val_count=1, patch=32, seed=9)
    r1 = generate_dataset(m, tmp_path / "a")
    r2 = generate_dataset(m, tmp_path / "b")
    for rel in ["train/00000_sharp.drt", "train/00002_blur.drt", "val/00000_kernel.drt"]:
        assert _digest(r1 / rel) == _digest(r2 / rel)


def test_different_seed_differs(tmp_path):
    r1 = generate_dataset(DatasetManifest(train_count=1, val_count=0, seed=1), tmp_path / "a")
    r2 = generate_dataset(DatasetManifest(train_count=1, val_count=0, seed=2), tmp_path / "b")
    assert _digest(r1 / "train/00000_sharp.drt") != _digest(r2 / "train/00000_sharp.drt")


def test_blur_patches_match_spatial_model(small_dataset):
    manifest = read_manifest(small_dataset)
    for idx in range(4):
        s = load_sample(small_dataset, "train", idx, manifest)
        redo = apply_blur_spatial(Tensor(s.sharp), s.spec)
        assert np.abs(redo.data - s.blur).max() <= 1e-6


def test_manifest_regenerates_samples(small_dataset):
    manifest = read_manifest(small_dataset)
    sharp, blur, spec = make_sample(manifest, "val", 1)
    stored = load_sample(small_dataset, "val", 1, manifest)
    assert np.array_equal(sharp, stored.sharp)
    assert np.array_equal(blur, stored.blur)
    assert np.array_equal(spec.kernel.grid, stored.spec.kernel.grid)


def test_per_sample_specs_are_stream_independent():
    m = DatasetManifest(train_count=4, val_count=2, seed=3)
    a = sample_degradation(m, "train", 0)
    b = sample_degradation(m, "train", 1)
    c = sample_degradation(m, "val", 0)
    assert not np.array_equal(a.kernel.grid, b.kernel.grid)
    assert not np.array_equal(a.kernel.grid, c.kernel.grid)
    again = sample_degradation(m, "train", 0)
    assert np.array_equal(a.kernel.grid, again.kernel.grid)


def test_sharp_patches_in_range(small_dataset):
    s = load_sample(small_dataset, "train", 0)
    assert s.sharp.min() >= 0.0 and s.sharp.max() <= 1.0
    assert s.sharp.dtype == np.float32
    assert s.sharp.shape == (3, 64, 64)


def test_kernel_files_are_normalized(small_dataset):
    k = load_tensor(small_dataset / "train" / "00000_kernel.drt")
    assert abs(float(k.sum()) - 1.0) <= 1e-5
    assert k.min() >= 0


def test_png_mirrors(tmp_path):
    m = DatasetManifest(train_count=1, val_count=0, patch=32, seed=4)
    root = generate_dataset(m, tmp_path / "ds", png_mirrors=True)
    assert (root / "train" / "00000_sharp.png").exists()
    assert (root / "train" / "00000_blur.png").exists()
