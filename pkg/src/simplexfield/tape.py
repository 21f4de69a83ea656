"""Reverse-mode differentiation over a recorded tape of numpy operations.

The differentiable surface is a fixed vocabulary: dense matmul, trilinear
hash-grid gather, the compositing scan, softplus/sigmoid/relu, and plain
array arithmetic.  Every op accepts either :class:`Var` (tracked) or raw
arrays/floats (constants); with no Var among the inputs an op is just the
numpy computation, so the same forward code serves rendering and training.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels


class Var:
    """A tape-tracked array value."""

    __slots__ = ("value", "tape", "_slot")

    def __init__(self, value, tape: "Tape", slot: int):
        self.value = value
        self.tape = tape
        self._slot = slot

    @property
    def shape(self):
        return np.shape(self.value)

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Var(shape={np.shape(self.value)}, slot={self._slot})"


class _Part:
    """Gradient addressed to one output of a multi-output node."""

    __slots__ = ("index", "grad")

    def __init__(self, index: int, grad):
        self.index = index
        self.grad = grad


class Tape:
    def __init__(self):
        # each node: (input_slots, backward) with backward None for leaves
        self._nodes: list[tuple[tuple[int, ...], Callable | None]] = []

    def leaf(self, value: np.ndarray) -> Var:
        self._nodes.append(((), None))
        return Var(value, self, len(self._nodes) - 1)

    def _record(self, value, inputs: Sequence[Var], backward: Callable) -> Var:
        slots = tuple(v._slot for v in inputs)
        self._nodes.append((slots, backward))
        return Var(value, self, len(self._nodes) - 1)

    def gradients(self, loss: Var, leaves: Sequence[Var]) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. the given leaves."""
        if loss.tape is not self:
            raise ValueError("loss does not belong to this tape")
        grads: dict[int, object] = {loss._slot: np.asarray(1.0, dtype=_dtype_of(loss.value))}
        leaf_grads: dict[int, np.ndarray] = {}
        for idx in range(len(self._nodes) - 1, -1, -1):
            g = grads.pop(idx, None)
            if g is None:
                continue
            slots, backward = self._nodes[idx]
            if backward is None:
                leaf_grads[idx] = g  # reached a parameter leaf
                continue
            for slot, gin in zip(slots, backward(g)):
                if gin is None:
                    continue
                _accumulate(grads, slot, gin)
        out = []
        for leaf in leaves:
            g = leaf_grads.get(leaf._slot)
            if g is None:
                g = np.zeros_like(leaf.value)
            out.append(g)
        return out


def _accumulate(grads: dict, slot: int, gin) -> None:
    if isinstance(gin, _Part):
        bucket = grads.setdefault(slot, [None, None, None])
        if bucket[gin.index] is None:
            bucket[gin.index] = gin.grad
        else:
            bucket[gin.index] = bucket[gin.index] + gin.grad
        return
    if slot in grads:
        grads[slot] = grads[slot] + gin
    else:
        grads[slot] = gin


def _dtype_of(v) -> np.dtype:
    return np.asarray(v).dtype


def _val(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _unary(x, value, dback):
    tape = _tape_of(x)
    if tape is None:
        return value
    return tape._record(value, (x,), lambda g: (dback(g),))


def _binary(a, b, value, da, db):
    tape = _tape_of(a, b)
    if tape is None:
        return value
    tracked = [v for v in (a, b) if isinstance(v, Var)]

    def backward(g):
        out = []
        if isinstance(a, Var):
            out.append(da(g))
        if isinstance(b, Var):
            out.append(db(g))
        return tuple(out)

    return tape._record(value, tracked, backward)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    va, vb = _val(a), _val(b)
    value = va + vb
    return _binary(
        a, b, value,
        lambda g: _unbroadcast(g, np.shape(va)),
        lambda g: _unbroadcast(g, np.shape(vb)),
    )


def sub(a, b):
    va, vb = _val(a), _val(b)
    value = va - vb
    return _binary(
        a, b, value,
        lambda g: _unbroadcast(g, np.shape(va)),
        lambda g: _unbroadcast(-g, np.shape(vb)),
    )


def mul(a, b):
    va, vb = _val(a), _val(b)
    value = va * vb
    return _binary(
        a, b, value,
        lambda g: _unbroadcast(g * vb, np.shape(va)),
        lambda g: _unbroadcast(g * va, np.shape(vb)),
    )


def scale(a, s: float):
    va = _val(a)
    return _unary(a, va * s, lambda g: g * s)


def neg(a):
    return scale(a, -1.0)


def matmul(a, b):
    va, vb = _val(a), _val(b)
    value = va @ vb
    return _binary(
        a, b, value,
        lambda g: g @ vb.T,
        lambda g: va.T @ g,
    )


def dot_last(a, b):
    """Contraction over the last axis: (..., k) x (..., k) -> (...,)."""
    va, vb = _val(a), _val(b)
    value = np.einsum("...i,...i->...", va, vb)
    return _binary(
        a, b, value,
        lambda g: _unbroadcast(np.asarray(g)[..., None] * vb, np.shape(va)),
        lambda g: _unbroadcast(np.asarray(g)[..., None] * va, np.shape(vb)),
    )


# ---------------------------------------------------------------------------
# shape ops


def concat_last(parts):
    vals = [_val(p) for p in parts]
    value = np.concatenate(vals, axis=-1)
    tape = _tape_of(*parts)
    if tape is None:
        return value
    widths = [v.shape[-1] for v in vals]
    offsets = np.cumsum([0] + widths)
    tracked = [(i, p) for i, p in enumerate(parts) if isinstance(p, Var)]

    def backward(g):
        return tuple(g[..., offsets[i] : offsets[i + 1]] for i, _ in tracked)

    return tape._record(value, [p for _, p in tracked], backward)


def stack_last(parts):
    vals = [_val(p) for p in parts]
    value = np.stack(vals, axis=-1)
    tape = _tape_of(*parts)
    if tape is None:
        return value
    tracked = [(i, p) for i, p in enumerate(parts) if isinstance(p, Var)]

    def backward(g):
        return tuple(g[..., i] for i, _ in tracked)

    return tape._record(value, [p for _, p in tracked], backward)


def take_last(a, lo: int, hi: int):
    """Slice [lo:hi] of the last axis."""
    va = _val(a)
    value = va[..., lo:hi]

    def backward(g):
        out = np.zeros_like(va)
        out[..., lo:hi] = g
        return out

    return _unary(a, value, backward)


def crop(a, key: tuple):
    """Slice with a tuple of python slices; gradient is zero-padded back."""
    va = _val(a)
    value = va[key]

    def backward(g):
        out = np.zeros_like(va)
        out[key] = g
        return out

    return _unary(a, value, backward)


def reshape(a, shape):
    va = _val(a)
    return _unary(a, va.reshape(shape), lambda g: np.asarray(g).reshape(va.shape))


# ---------------------------------------------------------------------------
# nonlinearities


def softplus(a):
    va = _val(a)
    value = kernels.softplus(va)
    return _unary(a, value, lambda g: g * kernels.sigmoid(va))


def sigmoid(a):
    va = _val(a)
    s = kernels.sigmoid(va)
    return _unary(a, s, lambda g: g * s * (1.0 - s))


def relu(a):
    va = _val(a)
    return _unary(a, np.maximum(va, 0), lambda g: g * (va > 0))


def abs_(a):
    va = _val(a)
    return _unary(a, np.abs(va), lambda g: g * np.sign(va))


def square(a):
    va = _val(a)
    return _unary(a, va * va, lambda g: 2.0 * g * va)


def clip(a, lo: float, hi: float):
    va = _val(a)
    value = np.clip(va, lo, hi)
    return _unary(a, value, lambda g: g * ((va > lo) & (va < hi)))


def normalize_last(a, eps: float = 1e-12):
    """Rows scaled to unit length; rows with norm <= eps are scaled by 1/eps."""
    va = _val(a)
    norm = np.linalg.norm(va, axis=-1, keepdims=True)
    safe = np.maximum(norm, eps)
    n = va / safe

    def backward(g):
        g = np.asarray(g)
        proj = np.sum(g * n, axis=-1, keepdims=True)
        inner = np.where(norm > eps, g - n * proj, g)
        return inner / safe

    return _unary(a, n, backward)


# ---------------------------------------------------------------------------
# reductions


def sum_(a):
    va = _val(a)
    return _unary(a, np.sum(va), lambda g: np.full(np.shape(va), g, dtype=_dtype_of(va)))


def mean(a):
    va = _val(a)
    size = np.size(va)
    return _unary(
        a, np.mean(va), lambda g: np.full(np.shape(va), g / size, dtype=_dtype_of(va))
    )


# ---------------------------------------------------------------------------
# kernel-backed ops


def encode(tables, points: np.ndarray, layout) -> "Var | np.ndarray":
    """Hash-grid feature lookup; differentiable w.r.t. the tables only."""
    vt = _val(tables)
    value = kernels.hash_encode_forward(points, vt, layout)
    return _unary(
        tables, value, lambda g: kernels.hash_encode_backward(points, np.ascontiguousarray(g), layout)
    )


def composite(tau, radiance, deltas, dists, background):
    """Front-to-back compositing; returns (color, opacity, depth) vars.

    deltas/dists/background are constants of the ray sampling, only tau and
    radiance carry gradients.
    """
    vt, vr = _val(tau), _val(radiance)
    color, opacity, depth, aux = kernels.composite_forward(vt, vr, deltas, dists, background)
    tape = _tape_of(tau, radiance)
    if tape is None:
        return color, opacity, depth
    tracked = [v for v in (tau, radiance) if isinstance(v, Var)]

    def backward(glist):
        gc, go, gd = glist
        gc = None if gc is None else np.ascontiguousarray(gc)
        go = None if go is None else np.ascontiguousarray(go)
        gd = None if gd is None else np.ascontiguousarray(gd)
        dtau, drad = kernels.composite_backward(aux, gc, go, gd)
        out = []
        if isinstance(tau, Var):
            out.append(dtau)
        if isinstance(radiance, Var):
            out.append(drad)
        return tuple(out)

    node = tape._record((color, opacity, depth), tracked, backward)
    outs = []
    for i, val in enumerate((color, opacity, depth)):
        outs.append(
            tape._record(val, (node,), lambda g, i=i: (_Part(i, g),))
        )
    return tuple(outs)
