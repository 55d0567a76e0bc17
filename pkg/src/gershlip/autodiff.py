"""Minimal reverse-mode automatic differentiation over numpy arrays.

Implements exactly the operations the constraint engine and the residual
forward pass need: broadcasted arithmetic, matmul, tanh, absolute value,
element-wise min/max, reshape/transpose, reductions, and generic
element-wise functions with caller-supplied derivatives.

Every function in this module also accepts plain arrays/scalars and then
falls back to numpy, so formula code written against it runs unchanged in
"values only" mode.  Subgradient conventions at kinks: d|u|/du = 0 at u=0;
maximum/minimum give the tie gradient to their first argument.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("value", "grad", "_parents", "_vjp")

    # Make numpy defer to the reflected operators instead of iterating.
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def backward(self, seed=None):
        """Accumulate gradients of this node into every reachable leaf."""
        order = _topo_order(self)
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                parent.grad = g if parent.grad is None else parent.grad + g

    # arithmetic operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return multiply(self, -1.0)

    def __pow__(self, n):
        return power(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def _topo_order(root):
    order, seen, stack = [], set(), [(root, False)]
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
            stack.append((p, False))
    return order


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def value_of(x):
    """Underlying ndarray of a Tensor, or the input coerced to float array."""
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=float)


def leaf(value) -> Tensor:
    return Tensor(value)


def _unbroadcast(g, shape):
    """Sum a broadcasted gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


def _binary(a, b, fwd, da, db):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return fwd(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    av, bv = value_of(a), value_of(b)
    out = fwd(av, bv)
    parents = tuple(x for x, t in ((a, ta), (b, tb)) if t)

    def vjp(g):
        grads = []
        if ta:
            grads.append(_unbroadcast(da(g, av, bv, out), av.shape))
        if tb:
            grads.append(_unbroadcast(db(g, av, bv, out), bv.shape))
        return grads

    return Tensor(out, parents, vjp)


def add(a, b):
    return _binary(a, b, np.add, lambda g, av, bv, o: g, lambda g, av, bv, o: g)


def subtract(a, b):
    return _binary(a, b, np.subtract, lambda g, av, bv, o: g, lambda g, av, bv, o: -g)


def multiply(a, b):
    return _binary(a, b, np.multiply,
                   lambda g, av, bv, o: g * bv,
                   lambda g, av, bv, o: g * av)


def divide(a, b):
    return _binary(a, b, np.divide,
                   lambda g, av, bv, o: g / bv,
                   lambda g, av, bv, o: -g * av / (bv * bv))


def maximum(a, b):
    # Tie goes to the first argument: d max(u, floor)/du = 1 at the boundary.
    return _binary(a, b, np.maximum,
                   lambda g, av, bv, o: g * (av >= bv),
                   lambda g, av, bv, o: g * (bv > av))


def minimum(a, b):
    return _binary(a, b, np.minimum,
                   lambda g, av, bv, o: g * (av <= bv),
                   lambda g, av, bv, o: g * (bv < av))


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(np.asarray(x, dtype=float))
    out = np.tanh(x.value)
    return Tensor(out, (x,), lambda g: (g * (1.0 - out * out),))


def absolute(x):
    # Subgradient 0 at the origin (np.sign(0) == 0).
    if not isinstance(x, Tensor):
        return np.abs(np.asarray(x, dtype=float))
    sgn = np.sign(x.value)
    return Tensor(np.abs(x.value), (x,), lambda g: (g * sgn,))


def power(x, n):
    if not isinstance(n, (int, float)):
        raise TypeError("exponent must be a plain number")
    if not isinstance(x, Tensor):
        return np.asarray(x, dtype=float) ** n
    xv = x.value
    return Tensor(xv ** n, (x,), lambda g: (g * n * xv ** (n - 1),))


def square(x):
    return multiply(x, x)


def matmul(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    if not (ta or tb):
        return av @ bv
    parents = tuple(x for x, t in ((a, ta), (b, tb)) if t)

    def vjp(g):
        grads = []
        if ta:
            grads.append(g @ bv.T)
        if tb:
            grads.append(av.T @ g)
        return grads

    return Tensor(av @ bv, parents, vjp)


def transpose(x):
    if not isinstance(x, Tensor):
        return np.asarray(x, dtype=float).T
    return Tensor(x.value.T, (x,), lambda g: (g.T,))


def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(np.asarray(x, dtype=float), shape)
    orig = x.value.shape
    return Tensor(x.value.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def tsum(x, axis=None):
    if not isinstance(x, Tensor):
        return np.sum(np.asarray(x, dtype=float), axis=axis)
    xv = x.value

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, xv.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), xv.shape).copy(),)

    return Tensor(np.sum(xv, axis=axis), (x,), vjp)


def mean(x):
    n = value_of(x).size
    return divide(tsum(x), float(n))


def elementwise(x, fn, dfn):
    """Apply an element-wise function with derivative `dfn` evaluated at the input."""
    if not isinstance(x, Tensor):
        return fn(np.asarray(x, dtype=float))
    xv = x.value
    return Tensor(fn(xv), (x,), lambda g: (g * dfn(xv),))
