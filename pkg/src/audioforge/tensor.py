"""Dense tensors with reverse-mode autodiff.

Values are float32 by default (float64 is accepted so test oracles can run
the same graph at higher precision). The graph is recorded implicitly:
each op output keeps references to its inputs plus a closure that routes
the output gradient back. `backward` on a scalar replays the tape in
reverse topological order.

Broadcasting is limited to what the models here need: equal shapes,
row-vector bias against a matrix, and scalars.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np


class ShapeError(ValueError):
    pass


class GradError(RuntimeError):
    pass


class DegenerateBatchError(ValueError):
    pass


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only compute)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data):
    arr = np.asarray(data)
    if arr.dtype == np.float64:
        return arr
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._prev: tuple = ()
        self._backward = None

    # -- introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- backward pass ------------------------------------------------

    def backward(self):
        """Populate grads of every requires_grad tensor reachable from self.

        self must be a scalar. Leaf grads accumulate across calls;
        intermediate grads are reset on each call so repeated backward
        contributes exactly one copy per call.
        """
        if self.size != 1:
            raise GradError(f"backward requires a scalar loss, got shape {self.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))
        for node in topo:
            if node._prev:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -----------------------------------------------

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
        return add(self, -_wrap(other))

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, inputs, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._prev = tuple(inputs)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


# -- elementwise ------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


# -- linear algebra ---------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _make(out_data, (a, b), backward)


# -- shape ops --------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old_shape = a.shape
    out_data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accum(g.reshape(old_shape))

    return _make(out_data, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    out_data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        if a.requires_grad:
            a._accum(np.transpose(g, inv))

    return _make(out_data, (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return _make(out_data, tensors, backward)


def getitem(a, key) -> Tensor:
    a = _wrap(a)
    out_data = a.data[key]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] += g  # basic slicing only; use `take` for fancy indexing
            a._accum(full)

    return _make(out_data, (a,), backward)


def take(a, indices, axis=0) -> Tensor:
    """Row/column gather with scatter-add gradient (duplicates allowed)."""
    a = _wrap(a)
    indices = np.asarray(indices)
    out_data = np.take(a.data, indices, axis=axis)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            if axis == 0:
                np.add.at(full, indices, g)
            else:
                idx = [slice(None)] * a.ndim
                idx[axis] = indices
                np.add.at(full, tuple(idx), g)
            a._accum(full)

    return _make(out_data, (a,), backward)


# -- reductions -------------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accum(np.broadcast_to(g, a.shape).copy())
            else:
                g2 = g if keepdims else np.expand_dims(g, axis)
                a._accum(np.broadcast_to(g2, a.shape).copy())

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    n = a.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) / n


# -- nonlinearities ---------------------------------------------------


def softmax(a, axis=-1) -> Tensor:
    a = _wrap(a)
    if np.isnan(a.data).any():
        raise ValueError("softmax input contains NaN")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * p).sum(axis=axis, keepdims=True)
            a._accum(p * (g - inner))

    return _make(p, (a,), backward)


_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

try:  # scipy gives a vectorized erf; fall back to math.erf otherwise
    from scipy.special import erf as _erf
except ImportError:  # pragma: no cover
    _erf = np.vectorize(math.erf)


def gelu(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x / _SQRT_2))
    out_data = (x * cdf).astype(x.dtype)

    def backward(g):
        if a.requires_grad:
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
            a._accum(g * (cdf + x * pdf))

    return _make(out_data, (a,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then scale and shift."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma._accum((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            beta._accum(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            n = x.shape[-1]
            gx = g * gamma.data
            a1 = gx.sum(axis=-1, keepdims=True)
            a2 = (gx * xhat).sum(axis=-1, keepdims=True)
            x._accum(inv * (gx - a1 / n - xhat * a2 / n))

    return _make(out_data, (x, gamma, beta), backward)


def embedding_lookup(table, ids) -> Tensor:
    """Row lookup in an embedding table; gradient scatter-adds."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    return take(table, ids, axis=0)


def cross_entropy(logits, targets, ignore_index: int = -100, reduction: str = "mean") -> Tensor:
    """Mean (or sum) negative log-softmax over non-ignored positions.

    logits: (T, V); targets: length-T int sequence; positions equal to
    ignore_index contribute exactly zero loss and zero gradient.
    """
    logits = _wrap(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    V = logits.shape[1]
    keep = targets != ignore_index
    if not keep.any():
        raise DegenerateBatchError("cross_entropy: every target is ignore_index")
    valid = targets[keep]
    if valid.min() < 0 or valid.max() >= V:
        raise IndexError(f"cross_entropy target out of range [0, {V})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    rows = np.nonzero(keep)[0]
    nll = -logp[rows, targets[rows]]
    n = len(rows)
    denom = n if reduction == "mean" else 1
    out_data = np.asarray(nll.sum() / denom, dtype=logits.data.dtype)

    def backward(g):
        if logits.requires_grad:
            p = np.exp(logp)
            grad = np.zeros_like(logits.data)
            grad[rows] = p[rows]
            grad[rows, targets[rows]] -= 1.0
            logits._accum(grad * (float(g) / denom))

    return _make(out_data, (logits,), backward)


def num_valid_targets(targets, ignore_index: int = -100) -> int:
    targets = np.asarray(targets)
    return int((targets != ignore_index).sum())
