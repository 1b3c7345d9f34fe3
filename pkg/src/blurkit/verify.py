"""Self-contained property suite behind the ``verify`` CLI command.

Each check re-derives an algebraic claim with an independent oracle
(direct summation, finite differences, brute-force convolution) and
compares the implementation against it at a fixed tolerance. Checks are
fast; the training-dependent criteria live in the acceptance tests.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .blur import (
    DatasetManifest,
    DegradationSpec,
    apply_blur_fourier,
    apply_blur_spatial,
    estimate_kernel_oracle,
    kernel_correlation,
    make_motion_kernel,
    make_sample,
)
from .engine import Tensor, backward, fft2, fft2_raw, ifft2, ifft2_raw, no_grad, ops
from .model import (
    DMSUNet,
    ModelConfig,
    memory_report,
    naive_step,
    reversible_step,
    sub_resnet_forward,
    sub_resnet_inverse,
    FkeConfig,
    FourierKernelEstimator,
)
from .train.loss import PreparedTargets


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def _dft_direct(x: np.ndarray) -> np.ndarray:
    """O(N^4) reference DFT used as the summation oracle."""
    h, w = x.shape
    wh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    ww = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return wh @ x @ ww.T


def check_fft_roundtrip(seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for h, w in [(8, 8), (16, 16), (12, 20), (31, 31), (64, 64)]:
        x = rng.standard_normal((2, 3, h, w)).astype(np.float32)
        back_ = ifft2_raw(fft2_raw(x)).real.astype(np.float32)
        worst = max(worst, float(np.abs(back_ - x).max() / np.abs(x).max()))
    return CheckResult("fft-roundtrip", worst <= 1e-5, f"max rel err {worst:.2e} (tol 1e-5)")


def check_parseval(seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((8, 8))
    spec = fft2_raw(x.astype(np.complex128))
    direct = _dft_direct(x)
    dft_err = float(np.abs(spec - direct).max() / np.abs(direct).max())
    ratio = float((x**2).sum() / ((np.abs(spec) ** 2).sum() / x.size))
    ok = abs(ratio - 1.0) <= 1e-6 and dft_err <= 1e-12
    return CheckResult(
        "parseval+direct-dft", ok, f"parseval ratio {ratio:.9f}, dft err {dft_err:.2e}"
    )


def _circular_conv_direct(img: np.ndarray, grid: np.ndarray) -> np.ndarray:
    h, w = img.shape
    c = grid.shape[0] // 2
    out = np.zeros_like(img)
    for du in range(-c, c + 1):
        for dv in range(-c, c + 1):
            wv = grid[c + du, c + dv]
            if wv:
                out += wv * np.roll(img, (du, dv), axis=(0, 1))
    return out


def check_convolution_theorem(seed=0, pairs: int = 20) -> CheckResult:
    from .blur.kernels import pad_to_image

    rng = np.random.default_rng(seed)
    sizes = [8, 16, 31, 32]
    started = time.time()
    worst = 0.0
    for i in range(pairs):
        n = sizes[i % len(sizes)]
        img = rng.uniform(0, 1, (n, n))
        support = min(9, n if n % 2 else n - 1)
        kern = make_motion_kernel(
            rng.uniform(1, support), rng.uniform(0, np.pi), rng.uniform(0, 0.3), support
        )
        direct = _circular_conv_direct(img, kern.grid)
        spectral = ifft2_raw(fft2_raw(img) * fft2_raw(pad_to_image(kern.grid, n, n))).real
        worst = max(worst, float(np.abs(direct - spectral).max()))
    took = time.time() - started
    ok = worst <= 1e-5 and took < 10.0
    return CheckResult(
        "convolution-theorem", ok, f"max abs err {worst:.2e} over {pairs} pairs in {took:.1f}s"
    )


def check_blur_equivalence(seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for kind in ("motion", "gaussian", "delta"):
        s = Tensor(rng.uniform(0, 1, (3, 32, 32)).astype(np.float32))
        if kind == "motion":
            kern = make_motion_kernel(7, 0.9, 0.2, 13)
        elif kind == "gaussian":
            from .blur import make_gaussian_kernel

            kern = make_gaussian_kernel(1.3, 9)
        else:
            from .blur import make_delta_kernel

            kern = make_delta_kernel(5)
        spec = DegradationSpec(kernel=kern, noise_sigma=0.0)
        worst = max(
            worst,
            float(np.abs(apply_blur_spatial(s, spec).data - apply_blur_fourier(s, spec).data).max()),
        )
    return CheckResult("blur-model-equivalence", worst <= 1e-5, f"max abs diff {worst:.2e}")


def check_kernel_oracle(seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    s = Tensor(rng.uniform(0, 1, (3, 48, 48)).astype(np.float32))
    kern = make_motion_kernel(9, 0.6, 0.15, 15)
    corrs = []
    for ns in (0.0, 0.01, 0.05):
        spec = DegradationSpec(kernel=kern, noise_sigma=ns, seed=7)
        b = apply_blur_fourier(s, spec)
        rec = estimate_kernel_oracle(b, s)
        corrs.append(kernel_correlation(rec.grid, kern))
    ok = corrs[0] >= 0.999 and corrs[0] >= corrs[1] >= corrs[2]
    return CheckResult(
        "deconvolution-oracle", ok, "corr " + ", ".join(f"{c:.4f}" for c in corrs)
    )


def check_reversibility(seed=0, trials: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(
        scales=1, columns=2, blocks=[1, 1, 1], channels=[8, 16, 32],
        fke_sub_resnets=2, fke_depth=2, init_seed=3,
    )
    model = DMSUNet(cfg)
    prng = np.random.default_rng(seed + 1)
    for name, p in model.named_parameters():
        if name.endswith(("beta", "gamma", "out_scale")):
            p.data = (0.2 * prng.standard_normal(p.data.shape)).astype(np.float32)
    col = model.col(0, 1)
    worst = 0.0
    with no_grad():
        for _ in range(trials):
            x = Tensor(rng.uniform(0, 1, (1, 3, 32, 32)).astype(np.float32))
            b = model.pyramids(x)
            e0 = [model.stems[0](b[0])]
            _, _, st0 = model.run_group(0, b, e0, [None], skip_tails=True)
            _, _, st1 = model.run_group(1, b, e0, st0, skip_tails=True)
            rec = model.recover_group_inputs(1, st1, e0, b)
            for a, bb in zip(rec[0].tensors(), st0[0].tensors()):
                worst = max(worst, float(np.abs(a.data - bb.data).max()))
    # sub-resnet roundtrip
    fke = FourierKernelEstimator(FkeConfig(sub_resnets=2, depth=2, channels=8), np.random.default_rng(5))
    cell = fke.cells["1_1"]
    alpha = fke.alphas["1_1"]
    for _ in range(trials):
        pc = Tensor(rng.standard_normal((1, fke.width, 8, 8)).astype(np.float32))
        pd = Tensor(rng.standard_normal((1, fke.width, 8, 8)).astype(np.float32))
        r = sub_resnet_forward(cell, pc, pd, alpha)
        rec = sub_resnet_inverse(cell, r, pd, alpha)
        worst = max(worst, float(np.abs(rec.data - pc.data).max()))
    return CheckResult("reversibility", worst <= 1e-4, f"max abs err {worst:.2e} (tol 1e-4)")


def check_gradient_parity(seed=0) -> CheckResult:
    cfg = ModelConfig(
        scales=2, columns=2, blocks=[1, 1, 1], channels=[8, 16, 32],
        fke_sub_resnets=2, fke_depth=1, init_seed=0,
    )
    model = DMSUNet(cfg)
    rng = np.random.default_rng(seed)
    prng = np.random.default_rng(seed + 1)
    for name, p in model.named_parameters():
        if name.endswith(("beta", "gamma", "out_scale")):
            p.data = (0.1 * prng.standard_normal(p.data.shape)).astype(np.float32)
    x = Tensor(rng.uniform(0, 1, (1, 3, 32, 32)).astype(np.float32))
    gt = Tensor(rng.uniform(0, 1, (1, 3, 32, 32)).astype(np.float32))
    with no_grad():
        targets = PreparedTargets([ops.area_downscale(gt, 2**n) for n in range(cfg.scales)])
    model.zero_grad()
    naive_step(model, x, targets.term)
    g_naive = {n: p.grad.copy() for n, p in model.named_parameters() if p.grad is not None}
    model.zero_grad()
    reversible_step(model, x, targets.term)
    worst = 0.0
    for name, p in model.named_parameters():
        if p.grad is None:
            continue
        scale = max(float(np.abs(g_naive[name]).max()), 1e-8)
        worst = max(worst, float(np.abs(g_naive[name] - p.grad).max()) / scale)
    return CheckResult("gradient-parity", worst <= 1e-4, f"max rel err {worst:.2e} (tol 1e-4)")


def check_gradcheck(seed=0) -> CheckResult:
    """Central-difference check of a full block at f64."""
    from .model.blocks import NAFBlock

    rng = np.random.default_rng(seed)
    blk = NAFBlock(6, np.random.default_rng(1), dtype=np.float64)
    prng = np.random.default_rng(2)
    for name, p in blk.named_parameters():
        p.data = (0.3 * prng.standard_normal(p.data.shape)).astype(np.float64)
    x = Tensor(rng.standard_normal((1, 6, 5, 5)), dtype=np.float64, requires_grad=True)
    loss = ops.mean(ops.mul(blk(x), blk(x)))
    backward(loss)
    ana = x.grad.copy()
    num = np.zeros_like(ana)
    flat = x.data.reshape(-1)
    nf = num.reshape(-1)
    h = 1e-6
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        with no_grad():
            fp = ops.mean(ops.mul(blk(x), blk(x))).item()
        flat[i] = orig - h
        with no_grad():
            fm = ops.mean(ops.mul(blk(x), blk(x))).item()
        flat[i] = orig
        nf[i] = (fp - fm) / (2 * h)
    err = float(np.abs(ana - num).max() / max(1e-12, np.abs(num).max()))
    return CheckResult("block-gradcheck-f64", err <= 1e-6, f"max rel err {err:.2e} (tol 1e-6)")


def check_memory_ledger(seed=0) -> CheckResult:
    model = DMSUNet(ModelConfig.tiny(init_seed=0, fke_depth=1))
    naive, rev = memory_report(model, patch=64, batch=1)
    ratio = rev.stored_bytes / naive.stored_bytes
    ok = ratio < 0.6
    return CheckResult(
        "memory-ledger", ok,
        f"stored ratio {ratio:.4f} (naive {naive.stored_bytes}B, reversible {rev.stored_bytes}B)",
    )


def check_determinism(seed=0) -> CheckResult:
    m = DatasetManifest(train_count=1, val_count=1, patch=32, seed=seed)
    s1, b1, _ = make_sample(m, "train", 0)
    s2, b2, _ = make_sample(m, "train", 0)
    data_ok = np.array_equal(s1, s2) and np.array_equal(b1, b2)
    model = DMSUNet(ModelConfig(scales=1, columns=1, blocks=[1, 1, 1], channels=[8, 16, 32], init_seed=0, fke_depth=1))
    x = Tensor(b1[None])
    with no_grad():
        o1, _ = model.forward(x)
        o2, _ = model.forward(x)
    fwd_ok = all(np.array_equal(o1[k].data, o2[k].data) for k in o1)
    ok = data_ok and fwd_ok
    return CheckResult("determinism", ok, f"dataset {data_ok}, forward {fwd_ok}")


ALL_CHECKS = [
    check_fft_roundtrip,
    check_parseval,
    check_convolution_theorem,
    check_blur_equivalence,
    check_kernel_oracle,
    check_reversibility,
    check_gradient_parity,
    check_gradcheck,
    check_memory_ledger,
    check_determinism,
]


def run_all(verbose_print=print) -> bool:
    results = []
    for fn in ALL_CHECKS:
        res = fn()
        results.append(res)
        verbose_print(res.line())
    return all(r.ok for r in results)
