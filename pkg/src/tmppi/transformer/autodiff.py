"""Minimal reverse-mode automatic differentiation on numpy arrays.

A :class:`Tensor` wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar loss walks the recorded graph in reverse
topological order and accumulates exact gradients into every tensor created
with ``requires_grad=True``.  Only the operations the sequence model needs are
provided.  Everything runs in float64.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


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

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() is defined for scalar outputs only")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node is not self:
                node._parents = ()
                node._backward = None

    # Operator sugar used throughout the model code.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out._parents = parents
        out._backward = backward
        out.requires_grad = True
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._parents):
        return
    if g.shape != t.data.shape:
        g = np.broadcast_to(g, t.data.shape)
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a gradient back to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def scale(a, factor: float) -> Tensor:
    a = _wrap(a)
    data = a.data * factor

    def backward(g):
        _accumulate(a, g * factor)

    return _make(data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data @ b.data

    def backward(g):
        if b.data.ndim == 2:
            # x @ W with weights: flatten the batch instead of materialising
            # a stack of per-item outer products.
            k, j = b.data.shape
            g2 = g.reshape(-1, j)
            _accumulate(a, (g2 @ b.data.T).reshape(a.data.shape))
            _accumulate(b, a.data.reshape(-1, k).T @ g2)
            return
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if ga.shape != a.data.shape:
            ga = ga.sum(axis=tuple(range(ga.ndim - a.data.ndim)))
        if gb.shape != b.data.shape:
            gb = gb.sum(axis=tuple(range(gb.ndim - b.data.ndim)))
        _accumulate(a, ga)
        _accumulate(b, gb)

    return _make(data, (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.data.shape
    data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(old))

    return _make(data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    data = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(a, np.transpose(g, inverse))

    return _make(data, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return _make(data, tuple(tensors), backward)


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0.0
    data = a.data * mask

    def backward(g):
        _accumulate(a, g * mask)

    return _make(data, (a,), backward)


def softmax_last(a) -> Tensor:
    """Row-wise softmax over the last axis; -inf entries get exactly zero."""
    a = _wrap(a)
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    data = exp / np.sum(exp, axis=-1, keepdims=True)

    def backward(g):
        dot = np.sum(g * data, axis=-1, keepdims=True)
        _accumulate(a, data * (g - dot))

    return _make(data, (a,), backward)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then affine."""
    a, gain, bias = _wrap(a), _wrap(gain), _wrap(bias)
    mean = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mean
    var = np.mean(centered**2, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_std
    data = normed * gain.data + bias.data

    def backward(g):
        _accumulate(gain, _unbroadcast(g * normed, gain.data.shape))
        _accumulate(bias, _unbroadcast(g, bias.data.shape))
        gx = g * gain.data
        n = a.data.shape[-1]
        mean_gx = gx.mean(axis=-1, keepdims=True)
        mean_gx_normed = np.mean(gx * normed, axis=-1, keepdims=True)
        _accumulate(a, inv_std * (gx - mean_gx - normed * mean_gx_normed))
        del n

    return _make(data, (a, gain, bias), backward)


def dropout(a, p: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when p == 0 or rng is None (inference)."""
    a = _wrap(a)
    if p <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.data.shape) >= p) / (1.0 - p)
    data = a.data * keep

    def backward(g):
        _accumulate(a, g * keep)

    return _make(data, (a,), backward)


def huber_loss(pred, target: np.ndarray, delta: float) -> Tensor:
    """Mean elementwise Huber loss against a constant target."""
    pred = _wrap(pred)
    err = pred.data - np.asarray(target, dtype=np.float64)
    abs_err = np.abs(err)
    quadratic = abs_err <= delta
    elems = np.where(quadratic, 0.5 * err**2, delta * (abs_err - 0.5 * delta))
    data = np.array(elems.mean())

    def backward(g):
        grad = np.where(quadratic, err, delta * np.sign(err)) / err.size
        _accumulate(pred, g * grad)

    return _make(data, (pred,), backward)


def mean_squared(pred, target: np.ndarray) -> Tensor:
    pred = _wrap(pred)
    err = pred.data - np.asarray(target, dtype=np.float64)
    data = np.array(np.mean(err**2))

    def backward(g):
        _accumulate(pred, g * (2.0 * err / err.size))

    return _make(data, (pred,), backward)
