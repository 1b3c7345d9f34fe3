"""Adam with decoupled weight decay, and the cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np


class AdamState:
    """First/second-moment buffers keyed by parameter name."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: int = 0
        self.skipped: int = 0

    def ensure(self, name: str, shape, dtype):
        if name not in self.m:
            self.m[name] = np.zeros(shape, dtype=dtype)
            self.v[name] = np.zeros(shape, dtype=dtype)


def adam_step(
    named_params,
    state: AdamState,
    lr: float,
    betas=(0.9, 0.9),
    eps: float = 1e-8,
    weight_decay: float = 1e-3,
) -> bool:
    """One bias-corrected update over (name, Parameter) pairs.

    Parameters without a gradient are left untouched. If any gradient is
    non-finite the whole step is skipped and counted, protecting the
    weights from a single bad batch.
    """
    named_params = list(named_params)
    grads = []
    for name, p in named_params:
        g = p.grad
        if g is None:
            grads.append(None)
            continue
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            return False
        grads.append(g)

    state.t += 1
    b1, b2 = betas
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for (name, p), g in zip(named_params, grads):
        if g is None:
            continue
        state.ensure(name, p.data.shape, p.data.dtype)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        new = p.data * (1.0 - lr * weight_decay) - lr * mhat / (np.sqrt(vhat) + eps)
        p.data = new.astype(p.data.dtype)
    return True


def cosine_lr(t: int, total: int, lr_init: float = 1e-3, lr_final: float = 1e-7) -> float:
    """lr_final + (lr_init - lr_final) * (1 + cos(pi t / total)) / 2."""
    if total == 0:
        raise ValueError("schedule length must be > 0")
    if not 0 <= t <= total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * t / total))
