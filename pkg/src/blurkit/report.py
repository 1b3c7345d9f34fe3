"""Figure rendering and PNG image I/O for the CLI report paths.

Every CLI command that reports results writes matplotlib figures next
to its delimited text output. The Agg backend is forced so rendering
works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _chw_to_hwc(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 3 and arr.shape[0] in (1, 3):
        arr = np.transpose(arr, (1, 2, 0))
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
    return arr


def save_image(path, arr: np.ndarray) -> Path:
    """8-bit PNG mirror of a (C,H,W) or (H,W) array clipped to [0, 1]."""
    img = np.clip(_chw_to_hwc(arr), 0.0, 1.0)
    path = Path(path)
    plt.imsave(path, img, cmap=None if img.ndim == 3 else "gray", vmin=0.0, vmax=1.0)
    return path


def load_image(path) -> np.ndarray:
    """PNG -> float (C,H,W) in [0, 1]."""
    img = plt.imread(path)
    if img.dtype == np.uint8:
        img = img.astype(np.float32) / 255.0
    if img.ndim == 2:
        img = img[None]
    else:
        img = np.transpose(img[:, :, :3], (2, 0, 1))
    return np.ascontiguousarray(img.astype(np.float32))


def save_panel(path, images, titles, suptitle: str | None = None, cmap="gray") -> Path:
    """Side-by-side image panel figure."""
    n = len(images)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.4))
    if n == 1:
        axes = [axes]
    for ax, img, title in zip(axes, images, titles):
        img = _chw_to_hwc(img)
        ax.imshow(img, cmap=None if img.ndim == 3 else cmap)
        ax.set_title(title, fontsize=10)
        ax.set_axis_off()
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_loss_curve(path, losses, val_records=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(np.arange(1, len(losses) + 1), losses, lw=0.8, label="train loss")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    if val_records:
        ax2 = ax.twinx()
        ax2.plot(
            [r.step for r in val_records],
            [r.psnr for r in val_records],
            "o-",
            color="tab:orange",
            label="val PSNR",
        )
        ax2.set_ylabel("val PSNR (dB)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_metric_bars(path, labels, values, ylabel, title) -> Path:
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(labels), 3.4))
    ax.bar(labels, values, color="tab:blue")
    ax.set_ylabel(ylabel)
    ax.set_title(title, fontsize=10)
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.3g}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_cka_curve(path, cka_values) -> Path:
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(range(len(cka_values)), cka_values, "o-")
    ax.set_xlabel("estimator depth (0 = input spectrum)")
    ax.set_ylabel("CKA vs oracle kernel spectrum")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
