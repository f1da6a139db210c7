"""Minimal reverse-mode autodiff over numpy arrays.

Just enough tape to differentiate the estimator's training graph (GRU
recurrences, cross-attention, the head MLP, teacher-forced rollouts and
the composite loss). Values are float64 ndarrays; parameter matrices
always appear as the right operand of matmul. Gradients are checked
against central finite differences in the test suite.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Union

import numpy as np

ArrayLike = Union["Var", np.ndarray, float, int]


class Var:
    __slots__ = ("value", "grad", "_parents", "_bw", "requires_grad")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple = (),
        bw: Optional[Callable] = None,
        requires_grad: bool = False,
    ):
        self.value = np.asarray(value, dtype=float)
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._bw = bw
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    # operator sugar (constants auto-wrap)
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __neg__(self): return mul(self, -1.0)
    def __getitem__(self, key): return narrow(self, key)


def leaf(value: np.ndarray, requires_grad: bool = False) -> Var:
    return Var(np.asarray(value, dtype=float), requires_grad=requires_grad)


def _wrap(x: ArrayLike) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=float))


def _accum(p: Var, g: np.ndarray) -> None:
    if not p.requires_grad:
        return
    p.grad = g if p.grad is None else p.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ============================================================
# Ops
# ============================================================


def add(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value + b.value, (a, b))

    def bw():
        _accum(a, _unbroadcast(out.grad, a.value.shape))
        _accum(b, _unbroadcast(out.grad, b.value.shape))

    out._bw = bw
    return out


def sub(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value - b.value, (a, b))

    def bw():
        _accum(a, _unbroadcast(out.grad, a.value.shape))
        _accum(b, _unbroadcast(-out.grad, b.value.shape))

    out._bw = bw
    return out


def mul(a: ArrayLike, b: ArrayLike) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value * b.value, (a, b))

    def bw():
        _accum(a, _unbroadcast(out.grad * b.value, a.value.shape))
        _accum(b, _unbroadcast(out.grad * a.value, b.value.shape))

    out._bw = bw
    return out


def matmul(a: ArrayLike, b: ArrayLike) -> Var:
    """a (..., k) @ b (k, m); the right operand must be a 2-D matrix."""
    a, b = _wrap(a), _wrap(b)
    if b.value.ndim != 2:
        raise ValueError(f"matmul rhs must be 2-D, got {b.value.shape}")
    out = Var(a.value @ b.value, (a, b))

    def bw():
        g = out.grad
        _accum(a, g @ b.value.T)
        k = a.value.shape[-1]
        _accum(b, a.value.reshape(-1, k).T @ g.reshape(-1, b.value.shape[1]))

    out._bw = bw
    return out


def sigmoid(a: ArrayLike) -> Var:
    a = _wrap(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    out = Var(y, (a,))

    def bw():
        _accum(a, out.grad * y * (1.0 - y))

    out._bw = bw
    return out


def tanh(a: ArrayLike) -> Var:
    a = _wrap(a)
    y = np.tanh(a.value)
    out = Var(y, (a,))

    def bw():
        _accum(a, out.grad * (1.0 - y * y))

    out._bw = bw
    return out


def relu(a: ArrayLike) -> Var:
    a = _wrap(a)
    out = Var(np.maximum(0.0, a.value), (a,))

    def bw():
        _accum(a, out.grad * (a.value > 0.0))

    out._bw = bw
    return out


def absolute(a: ArrayLike) -> Var:
    a = _wrap(a)
    out = Var(np.abs(a.value), (a,))

    def bw():
        _accum(a, out.grad * np.sign(a.value))

    out._bw = bw
    return out


def vsum(a: ArrayLike, axis=None, keepdims: bool = False) -> Var:
    a = _wrap(a)
    out = Var(a.value.sum(axis=axis, keepdims=keepdims), (a,))

    def bw():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.value.shape).copy())

    out._bw = bw
    return out


def vmean(a: ArrayLike, axis=None, keepdims: bool = False) -> Var:
    a = _wrap(a)
    n = a.value.size if axis is None else np.prod(
        [a.value.shape[i] for i in np.atleast_1d(axis)]
    )
    return mul(vsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def softmax(a: ArrayLike, axis: int = -1) -> Var:
    a = _wrap(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Var(y, (a,))

    def bw():
        g = out.grad
        _accum(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    out._bw = bw
    return out


def narrow(a: ArrayLike, key) -> Var:
    """Static indexing/slicing; gradient scatters back into zeros."""
    a = _wrap(a)
    out = Var(a.value[key], (a,))

    def bw():
        g = np.zeros_like(a.value)
        g[key] = out.grad
        _accum(a, g)

    out._bw = bw
    return out


def concat(parts: Iterable[ArrayLike], axis: int = 0) -> Var:
    parts = [_wrap(p) for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=axis), tuple(parts))
    sizes = [p.value.shape[axis] for p in parts]

    def bw():
        offs = np.cumsum([0] + sizes)
        for p, s0, s1 in zip(parts, offs[:-1], offs[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(s0, s1)
            _accum(p, out.grad[tuple(idx)])

    out._bw = bw
    return out


def reshape(a: ArrayLike, shape: tuple) -> Var:
    a = _wrap(a)
    out = Var(a.value.reshape(shape), (a,))

    def bw():
        _accum(a, out.grad.reshape(a.value.shape))

    out._bw = bw
    return out


# ============================================================
# Backward pass
# ============================================================


def backward(root: Var) -> None:
    """Reverse-mode sweep from a scalar root. Iterative topological
    order, so deep recurrent graphs do not hit the recursion limit."""
    if root.value.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
    topo: list[Var] = []
    seen: set = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        if node._bw is not None and node.grad is not None:
            node._bw()
