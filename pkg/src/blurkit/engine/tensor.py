"""Minimal reverse-mode autodiff on dense numpy arrays.

Tensors are immutable NCHW-ish arrays (any rank, f32/f64) carrying an
optional backward closure. Building a graph is opt-in: it only happens
while gradients are globally enabled and at least one input is tracked,
so inference and recovery passes cost nothing extra.
"""

from __future__ import annotations

import weakref

import numpy as np

F32 = np.float32
F64 = np.float64

_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class GraphError(RuntimeError):
    """Backward requested on a malformed or detached graph."""


_grad_enabled = True


class no_grad:
    """Context manager that suspends graph construction."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class ActivationMeter:
    """Books activation memory during forward/backward passes.

    ``stored`` counts tensors the forward pass retains for backward
    (graph-saved activations, or explicitly registered boundary tensors
    in reversible mode). ``recomputed`` counts tensors rebuilt during a
    reversible backward. ``peak_bytes`` tracks the resident maximum of
    everything allocated while the meter is active, decremented when
    arrays are garbage collected.
    """

    def __init__(self):
        self.active = False
        self.phase = "forward"
        self.reset()

    def reset(self):
        self.stored_count = 0
        self.stored_bytes = 0
        self.recomputed_count = 0
        self.recomputed_bytes = 0
        self.cur_bytes = 0
        self.peak_bytes = 0

    def start(self):
        self.reset()
        self.active = True
        self.phase = "forward"

    def stop(self):
        self.active = False

    def _track_resident(self, t: "Tensor"):
        nb = t.data.nbytes
        self.cur_bytes += nb
        if self.cur_bytes > self.peak_bytes:
            self.peak_bytes = self.cur_bytes
        meter = self

        def _release(nbytes=nb):
            meter.cur_bytes -= nbytes

        weakref.finalize(t, _release)

    def on_node(self, t: "Tensor"):
        """Called for every graph-producing (non-leaf) tensor."""
        if not self.active:
            return
        self._track_resident(t)
        if self.phase == "forward":
            self.stored_count += 1
            self.stored_bytes += t.data.nbytes
        else:
            self.recomputed_count += 1
            self.recomputed_bytes += t.data.nbytes

    def on_plain(self, t: "Tensor"):
        """Called for graph-free tensors (no_grad results, leaves)."""
        if self.active:
            self._track_resident(t)

    def register_stored(self, t: "Tensor"):
        """Explicitly count a tensor kept alive across the backward pass."""
        if self.active:
            self.stored_count += 1
            self.stored_bytes += t.data.nbytes


meter = ActivationMeter()


def _contig(arr: np.ndarray) -> np.ndarray:
    # np.ascontiguousarray promotes 0-d to 1-d; 0-d is always contiguous
    if arr.ndim and not arr.flags.c_contiguous:
        return np.ascontiguousarray(arr)
    return arr


class Tensor:
    """Dense real array plus optional autodiff bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = _contig(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        meter.on_plain(self)

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def dtype_name(self) -> str:
        return _DTYPE_NAMES[self.data.dtype]

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, {self.dtype_name}{flag})"

    # -- operator sugar (full op set lives in ops.py) -------------------------
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)


def make_node(data: np.ndarray, parents, backward_fn) -> Tensor:
    """Wrap an op result, attaching the graph edge when grads are live."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        t = Tensor.__new__(Tensor)
        t.data = _contig(np.asarray(data))
        t.requires_grad = True
        t.grad = None
        t._parents = tuple(parents)
        t._backward = backward_fn
        meter.on_node(t)
        return t
    return Tensor(data)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _topo_order(root: Tensor):
    """Iterative post-order over the graph below ``root``."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p._backward is not None or p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor, retain_graph: bool = False):
    """Populate ``.grad`` on every tracked leaf reachable from ``loss``.

    Returns the list of (leaf, gradient) pairs in deterministic graph
    order; each leaf accumulates exactly one summed gradient per call.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is detached from every tracked leaf")

    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    leaves = []
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
                leaves.append((node, node.grad))
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not (p.requires_grad or p._backward is not None):
                continue
            if pg.shape != p.data.shape:
                raise GraphError(
                    f"gradient shape {pg.shape} does not match parent {p.data.shape}"
                )
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg
        if not retain_graph:
            node._backward = None
            node._parents = ()
    return leaves


def graph_nodes(root: Tensor):
    """Topologically ordered nodes below ``root`` (leaves first)."""
    return _topo_order(root)
