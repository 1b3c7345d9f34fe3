"""Training runtimes: naive backprop and reversible recomputation.

Naive mode builds one graph through every column and backpropagates,
retaining every interior activation. Reversible mode runs the boundary
chain without a graph, keeps only the final column's state per scale,
and during backprop walks columns in reverse: recover the previous
boundary through the inverse equations, recompute one column (tails
included) with gradients enabled, then chain the seeds. Stored
activation memory is therefore flat in the column count while naive
memory grows with it.

``loss_term(pred, scale)`` maps one output head to a scalar tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import Tensor, backward, meter, no_grad, ops
from .unet import ColumnState, DMSUNet


@dataclass
class ActivationLedger:
    mode: str
    stored_count: int = 0
    stored_bytes: int = 0
    recomputed_count: int = 0
    recomputed_bytes: int = 0
    peak_resident_bytes: int = 0

    def summary(self) -> str:
        return (
            f"{self.mode}: stored {self.stored_count} tensors / {self.stored_bytes} B, "
            f"recomputed {self.recomputed_count}, peak {self.peak_resident_bytes} B"
        )


@dataclass
class StepResult:
    loss: float
    outputs: dict  # (scale, column) -> ndarray
    ledger: ActivationLedger | None = None


def _snapshot_ledger(mode: str) -> ActivationLedger:
    return ActivationLedger(
        mode=mode,
        stored_count=meter.stored_count,
        stored_bytes=meter.stored_bytes,
        recomputed_count=meter.recomputed_count,
        recomputed_bytes=meter.recomputed_bytes,
        peak_resident_bytes=meter.peak_bytes,
    )


def group_loss(outputs: dict, loss_term) -> Tensor:
    total = None
    for key in sorted(outputs):
        term = loss_term(outputs[key], key[0])
        total = term if total is None else ops.add(total, term)
    return total


def naive_step(model: DMSUNet, x: Tensor, loss_term, measure: bool = False) -> StepResult:
    """Plain forward + backward through the whole graph."""
    if measure:
        meter.start()
    try:
        outputs, _ = model.forward(x)
        loss = group_loss(outputs, loss_term)
        out_data = {k: v.data for k, v in outputs.items()}
        backward(loss)
        ledger = _snapshot_ledger("naive") if measure else None
    finally:
        meter.stop()
    return StepResult(loss=float(loss.data), outputs=out_data, ledger=ledger)


def reversible_step(model: DMSUNet, x: Tensor, loss_term, measure: bool = False) -> StepResult:
    """Recomputation-based backward; stores only boundary activations.

    Gradients match naive_step within floating-point recomputation
    drift; parameter gradients accumulate into .grad exactly as there.
    """
    cfg = model.cfg
    model.check_extents(x)
    if measure:
        meter.start()
    try:
        # boundary chain only; tails and losses are built during backprop
        with no_grad():
            b = model.pyramids(x)
            e0 = [model.stems[n](b[n]) for n in range(cfg.scales)]
            state = [None] * cfg.scales
            for j in range(cfg.columns):
                _, _, state = model.run_group(j, b, e0, state, skip_tails=True)
        if measure:
            for t in b + e0:
                meter.register_stored(t)
            for st in state:
                for t in st.tensors():
                    meter.register_stored(t)
        meter.phase = "recompute"

        boundary = state
        seed_grads = None  # per scale, aligned with ColumnState.tensors()
        loss_value = 0.0
        out_data = {}
        for j in range(cfg.columns - 1, -1, -1):
            prev = (
                model.recover_group_inputs(j, boundary, e0, b)
                if j > 0
                else [None] * cfg.scales
            )
            leaf_state = []
            for st in prev:
                if st is None:
                    leaf_state.append(None)
                    continue
                dec = tuple(Tensor(t.data, requires_grad=True) for t in st.dec)
                leaf_state.append(ColumnState(dec, Tensor(st.e_top.data, requires_grad=True)))
            outs, _, new_state = model.run_group(j, b, None, leaf_state)
            for k, v in outs.items():
                out_data[k] = v.data
            loss_j = group_loss(outs, loss_term)
            loss_value += float(loss_j.data)
            total = loss_j
            if seed_grads is not None:
                for n in range(cfg.scales):
                    for t, g in zip(new_state[n].tensors(), seed_grads[n]):
                        if g is not None:
                            total = ops.add(total, ops.sum_all(ops.mul(t, Tensor(g))))
            backward(total)
            if j > 0:
                seed_grads = [
                    [t.grad for t in leaf_state[n].tensors()] for n in range(cfg.scales)
                ]
            boundary = prev
        ledger = _snapshot_ledger("reversible") if measure else None
    finally:
        meter.phase = "forward"
        meter.stop()
    return StepResult(loss=loss_value, outputs=out_data, ledger=ledger)


def train_step(model: DMSUNet, x: Tensor, loss_term, measure: bool = False) -> StepResult:
    if model.cfg.reversible:
        return reversible_step(model, x, loss_term, measure)
    return naive_step(model, x, loss_term, measure)


def memory_report(model: DMSUNet, patch: int = 64, batch: int = 1, seed: int = 0):
    """Dry-run both training modes and report their activation ledgers."""
    from ..train.loss import PreparedTargets

    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(0.0, 1.0, (batch, model.cfg.in_channels, patch, patch)).astype(np.float32))
    gt = Tensor(rng.uniform(0.0, 1.0, x.shape).astype(np.float32))
    with no_grad():
        targets = PreparedTargets(
            [ops.area_downscale(gt, 2**n) for n in range(model.cfg.scales)]
        )

    model.zero_grad()
    naive = naive_step(model, x, targets.term, measure=True).ledger
    model.zero_grad()
    rev = reversible_step(model, x, targets.term, measure=True).ledger
    model.zero_grad()
    return naive, rev


def format_memory_report(naive: ActivationLedger, rev: ActivationLedger) -> str:
    ratio = rev.stored_bytes / naive.stored_bytes if naive.stored_bytes else float("nan")
    lines = [
        "activation memory (stored-for-backward):",
        f"  naive      {naive.stored_bytes:>12} B in {naive.stored_count} tensors, peak {naive.peak_resident_bytes} B",
        f"  reversible {rev.stored_bytes:>12} B in {rev.stored_count} tensors, peak {rev.peak_resident_bytes} B"
        f" (+{rev.recomputed_count} recomputed)",
        f"  stored ratio reversible/naive = {ratio:.4f}",
    ]
    return "\n".join(lines)
