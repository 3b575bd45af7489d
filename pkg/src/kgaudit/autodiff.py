"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A ``Tensor`` records the primitives that produced it; ``Tensor.backward``
walks the tape in reverse topological order and accumulates gradients into
every reachable tensor with ``requires_grad``. The op set is exactly what
the encoder and the two losses need; no broadcasting rules beyond numpy's.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import backend

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

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
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate ``grad`` on every reachable leaf; repeat calls accumulate.

        Intermediate nodes use pass-local buffers, so only leaf gradients
        persist between calls.
        """
        global _pass_buffers
        if self.data.size != 1:
            raise ValueError(f"backward expects a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            raise ValueError("loss does not depend on any tensor with requires_grad")
        if not np.isfinite(self.data):
            raise FloatingPointError("backward called on a non-finite loss")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        _pass_buffers = {}
        try:
            _accumulate(self, np.ones_like(self.data))
            for node in reversed(topo):
                if node._backward is None:
                    continue
                g = _pass_buffers.get(id(node))
                if g is not None:
                    node._backward(g)
        finally:
            _pass_buffers = None

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Public constructor; rejects non-finite input."""
    t = Tensor(data, requires_grad=requires_grad)
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError("tensor input contains non-finite values")
    return t


def constant(data) -> Tensor:
    return Tensor(data)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_pass_buffers: dict[int, np.ndarray] | None = None


def _grad_buffer(t: Tensor) -> np.ndarray | None:
    """Accumulation target for one tensor: leaves own a persistent ``grad``,
    intermediates get a buffer scoped to the current backward pass."""
    if not t.requires_grad:
        return None
    if t._backward is None:  # leaf (parameter or input)
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        return t.grad
    buf = _pass_buffers.get(id(t))
    if buf is None:
        buf = np.zeros_like(t.data)
        _pass_buffers[id(t)] = buf
    return buf


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    buf = _grad_buffer(t)
    if buf is not None:
        buf += g


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), back)


def div(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(a.data / b.data, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for the 2d@2d, 2d@1d and 1d@2d cases."""
    if a.ndim == 2 and b.ndim == 2:
        def back(g):
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
    elif a.ndim == 2 and b.ndim == 1:
        def back(g):
            _accumulate(a, g[:, None] * b.data[None, :])
            _accumulate(b, a.data.T @ g)
    elif a.ndim == 1 and b.ndim == 2:
        def back(g):
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))
    else:
        raise ValueError(f"matmul: unsupported ranks {a.ndim} @ {b.ndim}")
    return _make(a.data @ b.data, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ValueError("transpose expects a 2-d tensor")

    def back(g):
        _accumulate(a, g.T)

    return _make(a.data.T.copy(), (a,), back)


def reshape(a: Tensor, shape) -> Tensor:
    def back(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), back)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        for p, gp in zip(parts, np.split(g, splits, axis=axis)):
            _accumulate(p, gp)

    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), back)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    sl = tuple(slice(None) if i != axis else slice(start, start + length) for i in range(a.ndim))

    def back(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        _accumulate(a, full)

    return _make(a.data[sl].copy(), (a,), back)


# ---------------------------------------------------------------------------
# nonlinearities and reductions

def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = stable_sigmoid(a.data)

    def back(g):
        _accumulate(a, g * y * (1.0 - y))

    return _make(y, (a,), back)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def back(g):
        _accumulate(a, g * (1.0 - y * y))

    return _make(y, (a,), back)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def back(g):
        _accumulate(a, g * y)

    return _make(y, (a,), back)


def log(a: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g):
        _accumulate(a, g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), back)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0

    def back(g):
        _accumulate(a, g * np.where(mask, 1.0, slope))

    return _make(np.where(mask, a.data, slope * a.data), (a,), back)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        _accumulate(a, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _make(y, (a,), back)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def back(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(ge, a.data.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]

    def back(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g / count, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(ge / count, a.data.shape).copy())

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), back)


def l2_norm(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along one axis; zero vectors get zero gradient."""
    n = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))

    def back(g):
        ge = g if keepdims else np.expand_dims(g, axis)
        ratio = np.divide(a.data, n, out=np.zeros_like(a.data), where=n > 0)
        _accumulate(a, ge * ratio)

    out = n if keepdims else np.squeeze(n, axis=axis)
    return _make(out, (a,), back)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine over the last axis; rows must be nonzero."""
    num = sum_(mul(a, b), axis=-1)
    return div(num, mul(l2_norm(a), l2_norm(b)))


# ---------------------------------------------------------------------------
# indexed ops (backend-accelerated)

def gather(a: Tensor, ids: np.ndarray) -> Tensor:
    """Rows ``a[ids]``; gradient scatter-adds back into ``a``."""
    if a.ndim not in (1, 2):
        raise ValueError("gather expects a 1-d or 2-d source tensor")
    idx = np.ascontiguousarray(ids, dtype=np.int64)

    def back(g):
        buf = _grad_buffer(a)
        if buf is None:
            return
        if a.ndim == 1:
            np.add.at(buf, idx.ravel(), g.ravel())
        else:
            backend.scatter_add_rows(buf, idx.ravel(),
                                     np.ascontiguousarray(g).reshape(-1, a.data.shape[1]))

    return _make(a.data[idx], (a,), back)


def neighbor_weighted_sum(values: Tensor, ids: np.ndarray, weights: Tensor) -> Tensor:
    """out[b] = sum_s weights[b, s] * values[ids[b, s]] (fused aggregation)."""
    idx = np.ascontiguousarray(ids, dtype=np.int64)
    vd = np.ascontiguousarray(values.data)
    wd = np.ascontiguousarray(weights.data)

    def back(g):
        gv, gw = backend.neighbor_weighted_sum_bwd(np.ascontiguousarray(g), vd, idx, wd)
        _accumulate(values, gv)
        _accumulate(weights, gw)

    return _make(backend.neighbor_weighted_sum(vd, idx, wd), (values, weights), back)


def mask_below_threshold(a: Tensor, threshold: float) -> Tensor:
    """Zero every entry <= threshold; masked entries pass zero gradient."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    keep = a.data > threshold

    def back(g):
        _accumulate(a, g * keep)

    return _make(np.where(keep, a.data, 0.0), (a,), back)
