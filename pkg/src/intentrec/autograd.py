"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

The engine covers exactly the primitives the encoder and losses need:
embedding gather, (batched) matmul, broadcast add/mul, relu, masked softmax,
layer norm, dropout, axis sums, basic-index slicing, reshape/swapaxes/concat,
log-sigmoid, masked log-sum-exp and L2 normalisation.  Gradients accumulate
through a topologically sorted backward sweep, the same scheme as every
small tape-based engine.

All tensors are float64.  That is deliberate: gradient correctness is
checked against central finite differences with h = 1e-4, which float32
noise would drown out.
"""

from __future__ import annotations

import numpy as np


class NumericError(RuntimeError):
    """A computation produced NaN or Inf where finite values are required."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (eval paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad and _grad_enabled
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

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

    # -- graph -----------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        if not np.isfinite(self.data):
            raise NumericError("backward() called on a non-finite scalar")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, -other)
        return add(self, -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return add(-self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; multiply by a reciprocal")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _out(data, parents: tuple[Tensor, ...], backward) -> Tensor:
    t = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = tuple(p for p in parents if p.requires_grad)
        t._backward = backward
    return t


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- arithmetic -------------------------------------------------------------


def add(a, b) -> Tensor:
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    av = a.data if ta else np.asarray(a, dtype=np.float64)
    bv = b.data if tb else np.asarray(b, dtype=np.float64)
    out_data = av + bv
    parents = tuple(x for x in (a, b) if isinstance(x, Tensor))

    def backward(g):
        if ta:
            _accumulate(a, _unbroadcast(g, av.shape))
        if tb:
            _accumulate(b, _unbroadcast(g, bv.shape))

    return _out(out_data, parents, backward)


def mul(a, b) -> Tensor:
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    av = a.data if ta else np.asarray(a, dtype=np.float64)
    bv = b.data if tb else np.asarray(b, dtype=np.float64)
    out_data = av * bv
    parents = tuple(x for x in (a, b) if isinstance(x, Tensor))

    def backward(g):
        if ta:
            _accumulate(a, _unbroadcast(g * bv, av.shape))
        if tb:
            _accumulate(b, _unbroadcast(g * av, bv.shape))

    return _out(out_data, parents, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects tensors with ndim >= 2")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
        _accumulate(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))

    return _out(out_data, (a, b), backward)


# -- shape ------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _out(out_data, (a,), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    out_data = np.swapaxes(a.data, ax1, ax2)

    def backward(g):
        _accumulate(a, np.swapaxes(g, ax1, ax2))

    return _out(out_data, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _out(out_data, tuple(tensors), backward)


def getitem(a: Tensor, idx) -> Tensor:
    """Basic indexing (ints and slices) only; gathers go through `embedding`."""
    a = as_tensor(a)
    out_data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[idx] += g
        _accumulate(a, buf)

    return _out(out_data, (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather table[ids]; scatter-adds gradients back into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding ids out of range [0, {table.data.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    out_data = table.data[ids]

    def backward(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        _accumulate(table, buf)

    return _out(out_data, (table,), backward)


# -- reductions -------------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % a.data.ndim for ax in axes):
                g = np.expand_dims(g, ax)
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _out(out_data, (a,), backward)


# -- nonlinearities ----------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return _out(out_data, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(a: Tensor) -> Tensor:
    """Numerically stable log(sigmoid(x))."""
    a = as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))

    def backward(g):
        _accumulate(a, g * _sigmoid(-x))

    return _out(out_data, (a,), backward)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to mask==True entries.

    Rows with no valid entry come out as all zeros (they correspond to
    padding queries and are discarded downstream).
    """
    scores = as_tensor(scores)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.data.shape)
    x = np.where(mask, scores.data, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    denom = e.sum(axis=-1, keepdims=True)
    p = e / np.where(denom == 0.0, 1.0, denom)

    def backward(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        _accumulate(scores, p * (g - inner))

    return _out(p, (scores,), backward)


def logsumexp(a: Tensor, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """log sum exp over `axis`, restricted to mask==True entries."""
    a = as_tensor(a)
    if mask is None:
        mask = np.ones(a.data.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    if not mask.any(axis=axis).all():
        raise ValueError("logsumexp: some rows have no unmasked entries")
    x = np.where(mask, a.data, -np.inf)
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=axis, keepdims=True)
    out_data = np.squeeze(m + np.log(s), axis=axis)
    weights = e / s

    def backward(g):
        _accumulate(a, np.expand_dims(g, axis) * weights)

    return _out(out_data, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-8) -> Tensor:
    """Layer normalisation over the last axis: gain * (x - mu)/sigma + bias."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward(g):
        reduce_axes = tuple(range(g.ndim - 1))
        _accumulate(bias, g.sum(axis=reduce_axes))
        _accumulate(gain, (g * xhat).sum(axis=reduce_axes))
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        _accumulate(a, dx)

    return _out(out_data, (a, gain, bias), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; rate 0 returns the input tensor unchanged."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return as_tensor(a)
    a = as_tensor(a)
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out_data = a.data * keep

    def backward(g):
        _accumulate(a, g * keep)

    return _out(out_data, (a,), backward)


def l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Rows scaled to unit L2 norm along the last axis."""
    a = as_tensor(a)
    x = a.data
    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    out_data = x / norm

    def backward(g):
        inner = (g * x).sum(axis=-1, keepdims=True)
        _accumulate(a, g / norm - x * inner / norm**3)

    return _out(out_data, (a,), backward)
