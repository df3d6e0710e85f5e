"""Minimal shaped-array numerics with reverse-mode automatic differentiation.

Everything is double precision.  Operations record nodes on an active
ComputationRecord; backward() replays the record in reverse and populates
.grad on the requires_grad leaves that the loss actually reaches.
Broadcasting follows numpy's trailing-dimension rule (size-1 expansion).
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class EmptyMaskError(ValueError):
    """Raised when a loss mask selects no positions."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_op_output")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._op_output = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __rsub__(self, other):
        return add(-self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class ComputationRecord:
    """Ordered tape of op nodes; creation order is a topological order."""

    _active: "ComputationRecord | None" = None

    def __init__(self):
        # node: (out, parents tuple, backward_fn(out_grad) -> parent grads)
        self.nodes = []

    def __enter__(self):
        self._prev = ComputationRecord._active
        ComputationRecord._active = self
        return self

    def __exit__(self, *exc):
        ComputationRecord._active = self._prev
        return False


_grad_enabled = True


class no_grad:
    """Context manager disabling op recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _record(out: Tensor, parents, backward_fn):
    rec = ComputationRecord._active
    if rec is None or not _grad_enabled:
        return
    if not any(p.requires_grad or p._op_output for p in parents):
        return
    out.requires_grad = True
    out._op_output = True
    rec.nodes.append((out, tuple(parents), backward_fn))


def backward(loss: Tensor):
    """Replay the active record backward from a scalar loss.

    Populates .grad (accumulating) on every reachable requires_grad leaf.
    The consumed nodes are dropped from the record.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    rec = ComputationRecord._active
    if rec is None:
        raise RuntimeError("backward called with no active ComputationRecord")

    # reachability pass: which outputs feed the loss
    reachable = {id(loss)}
    for out, parents, _ in reversed(rec.nodes):
        if id(out) in reachable:
            for p in parents:
                reachable.add(id(p))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    tensors: dict[int, Tensor] = {id(loss): loss}
    for out, parents, backward_fn in reversed(rec.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for p, pg in zip(parents, backward_fn(g)):
            if pg is None:
                continue
            key = id(p)
            tensors[key] = p
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    for key, g in grads.items():
        t = tensors[key]
        if t.requires_grad and not t._op_output:
            t.grad = g if t.grad is None else t.grad + g
    rec.nodes.clear()


# ---------------------------------------------------------------------------
# broadcasting helpers

def _broadcast_shape(sa, sb):
    try:
        return np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ShapeError(f"shapes {sa} and {sb} are not broadcast-compatible") from None


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient g down to the given operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise ops

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    out = Tensor(a.data + b.data)
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    out = Tensor(a.data * b.data)

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

    _record(out, (a, b), bw)
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    _record(out, (x,), lambda g: (g * (x.data > 0.0),))
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = np.empty_like(x.data)
    pos = x.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    s[~pos] = e / (1.0 + e)
    out = Tensor(s)
    _record(out, (x,), lambda g: (g * s * (1.0 - s),))
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))
    _record(out, (x,), lambda g: (g / x.data,))
    return out


# ---------------------------------------------------------------------------
# shape ops

def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    _record(out, (x,), lambda g: (g.reshape(x.shape),))
    return out


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    out = Tensor(x.data.transpose(axes))
    _record(out, (x,), lambda g: (g.transpose(inv),))
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    _record(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))
    return out


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    _record(out, (x,), bw)
    return out


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (ga, gb)

    _record(out, (a, b), bw)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)

    def bw(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return ((g - dot) * s,)

    _record(out, (x,), bw)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale/shift by gamma/beta."""
    h = x.shape[-1]
    if gamma.shape != (h,) or beta.shape != (h,):
        raise ShapeError(f"gamma/beta must have shape ({h},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(gamma.data * xhat + beta.data)

    def bw(g):
        dxhat = g * gamma.data
        dx = (dxhat - dxhat.mean(axis=-1, keepdims=True)
              - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) * inv
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        return (dx, dgamma, dbeta)

    _record(out, (x, gamma, beta), bw)
    return out


# ---------------------------------------------------------------------------
# indexing ops

def gather_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows of table at the given integer ids."""
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids])

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    _record(out, (table,), bw)
    return out


def take_per_row(x: Tensor, idx) -> Tensor:
    """x[i, idx[i]] for each row i of a 2-d tensor."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.shape[0])
    out = Tensor(x.data[rows, idx])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[rows, idx] = g
        return (gx,)

    _record(out, (x,), bw)
    return out


def scatter_add_rows(weights: Tensor, ids, vocab_size: int) -> Tensor:
    """Scatter-add each row of weights[T, C] onto vocab ids[C] -> [T, V]."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and int(ids.max()) >= vocab_size:
        raise ShapeError(f"token id {int(ids.max())} >= vocab_size {vocab_size}")
    t, c = weights.shape
    out_data = np.zeros((t, vocab_size), dtype=np.float64)
    np.add.at(out_data, (np.arange(t)[:, None], np.broadcast_to(ids, (t, c))),
              weights.data)
    out = Tensor(out_data)
    _record(out, (weights,), lambda g: (g[:, ids],))
    return out


# ---------------------------------------------------------------------------
# losses

def _check_mask(mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.sum() == 0:
        raise EmptyMaskError("loss mask selects no positions")
    return mask


def masked_cross_entropy(logits: Tensor, targets, mask) -> Tensor:
    """Mean next-token NLL over positions with mask == 1, from raw logits."""
    targets = np.asarray(targets, dtype=np.int64)
    mask = _check_mask(mask)
    t, v = logits.shape
    if targets.shape != (t,) or mask.shape != (t,):
        raise ShapeError(f"targets/mask must have shape ({t},)")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    count = mask.sum()
    nll = -(logp[np.arange(t), targets] * mask).sum() / count
    out = Tensor(nll)

    def bw(g):
        p = np.exp(logp)
        p[np.arange(t), targets] -= 1.0
        return (g * p * (mask[:, None] / count),)

    _record(out, (logits,), bw)
    return out


def masked_nll_from_probs(probs: Tensor, targets, mask) -> Tensor:
    """Mean NLL over mask == 1 positions of an already-normalized [T, V] row-stochastic tensor."""
    targets = np.asarray(targets, dtype=np.int64)
    mask = _check_mask(mask)
    t = probs.shape[0]
    rows = np.arange(t)
    pt = probs.data[rows, targets]
    count = mask.sum()
    out = Tensor(-(np.log(pt) * mask).sum() / count)

    def bw(g):
        gp = np.zeros_like(probs.data)
        gp[rows, targets] = -g * mask / (pt * count)
        return (gp,)

    _record(out, (probs,), bw)
    return out
