"""Tape-based reverse-mode differentiation over numpy arrays.

Just enough machinery for the rollout graph: elementwise arithmetic with
broadcasting, matmul, tanh/relu, axis sums, and a scalar mean.  Anything
that is not a :class:`Var` is treated as a constant and receives no
gradient, which is exactly how path data and trigger indicators enter
the graph.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tape", "Var", "matmul", "rows", "tanh", "relu", "sum_along", "lerp", "mean"]


class Var:
    """Node in the tape: a value plus the local vector-Jacobian rule."""

    __slots__ = ("value", "grad", "_vjp")

    # keep numpy from hijacking `ndarray <op> Var` into an object array
    __array_ufunc__ = None

    def __init__(self, value, vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def _accum(self, g):
        # first accumulation stores the reference; no vjp mutates a grad
        # it does not own, so aliasing is safe
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else np.asarray(g, dtype=float)
        else:
            self.grad = self.grad + g

    # -- operators ----------------------------------------------------
    def __add__(self, other):
        return _current()._binary(self, other, lambda a, b: a + b,
                                  lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return _current()._binary(self, other, lambda a, b: a - b,
                                  lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return _current()._binary(other, self, lambda a, b: a - b,
                                  lambda g, a, b: g, lambda g, a, b: -g)

    def __mul__(self, other):
        return _current()._binary(self, other, lambda a, b: a * b,
                                  lambda g, a, b: g * b, lambda g, a, b: g * a)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return self * (1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p):
        if p != 2:
            raise TypeError("only squaring is supported")
        return self * self


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tape:
    """Records Vars in creation order (a topological order) and runs the
    reverse sweep over that order exactly once."""

    _active: "Tape | None" = None

    def __init__(self):
        self.nodes: list[Var] = []

    def __enter__(self):
        if Tape._active is not None:
            raise RuntimeError("a tape is already active")
        Tape._active = self
        return self

    def __exit__(self, *exc):
        Tape._active = None
        return False

    def param(self, array: np.ndarray) -> Var:
        """Leaf variable (trainable parameter); gradients accumulate here."""
        v = Var(array)
        self.nodes.append(v)
        return v

    def _record(self, value, vjp) -> Var:
        v = Var(value, vjp=vjp)
        self.nodes.append(v)
        return v

    def _binary(self, a, b, fwd, vjp_a, vjp_b):
        av, bv = _val(a), _val(b)
        out_val = fwd(av, bv)

        def vjp(g):
            if isinstance(a, Var):
                a._accum(_unbroadcast(vjp_a(g, av, bv), av.shape))
            if isinstance(b, Var):
                b._accum(_unbroadcast(vjp_b(g, av, bv), bv.shape))

        return self._record(out_val, vjp)

    def backward(self, loss: Var) -> None:
        """Seed a scalar loss with gradient 1 and sweep the tape in reverse."""
        if loss.value.size != 1:
            raise ValueError("loss must be scalar")
        for n in self.nodes:
            n.grad = None
        loss.grad = np.ones_like(loss.value)
        for n in reversed(self.nodes):
            if n._vjp is not None and n.grad is not None:
                n._vjp(n.grad)


def _current() -> Tape:
    t = Tape._active
    if t is None:
        raise RuntimeError("no active tape; wrap the computation in `with Tape():`")
    return t


# -- dispatching helpers (work on Vars and plain arrays alike) ---------

def matmul(a, b):
    """Matrix product; with 3-D stacked operands it is a batched matmul
    (leading axes must match, no broadcasting on them)."""
    if not isinstance(a, Var) and not isinstance(b, Var):
        return _val(a) @ _val(b)
    av, bv = _val(a), _val(b)

    def vjp(g):
        if isinstance(a, Var):
            a._accum(g @ np.swapaxes(bv, -1, -2))
        if isinstance(b, Var):
            b._accum(np.swapaxes(av, -1, -2) @ g)

    return _current()._record(av @ bv, vjp)


def rows(x, n: int | None = None):
    """Split a stacked array/Var along axis 0 into row views.

    Each row is used at one rollout step; gradients scatter back into a
    single buffer on the parent, which the reverse sweep reaches only
    after every row has contributed.
    """
    if not isinstance(x, Var):
        m = x.shape[0] if n is None else n
        return [x[i] for i in range(m)]
    tape = _current()
    m = x.value.shape[0] if n is None else n
    out = []
    for i in range(m):
        def vjp(g, i=i):
            if x.grad is None:
                x.grad = np.zeros_like(x.value)
            x.grad[i] += g

        out.append(tape._record(x.value[i], vjp))
    return out


def tanh(x):
    if not isinstance(x, Var):
        return np.tanh(x)
    y = np.tanh(x.value)

    def vjp(g):
        x._accum(g * (1.0 - y * y))

    return _current()._record(y, vjp)


def relu(x):
    if not isinstance(x, Var):
        return np.maximum(x, 0.0)
    mask = x.value > 0

    def vjp(g):
        x._accum(g * mask)

    return _current()._record(np.where(mask, x.value, 0.0), vjp)


def sum_along(x, axis: int, keepdims: bool = True):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis, keepdims=keepdims)
    shape = x.value.shape

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        x._accum(np.broadcast_to(g, shape))

    return _current()._record(np.sum(x.value, axis=axis, keepdims=keepdims), vjp)


def lerp(a, b, m):
    """a*(1-m) + b*m with a constant gate m, as one fused op (the trigger
    freeze runs once per time step, so this halves the rollout tape)."""
    m = np.asarray(m, dtype=np.float64)
    if not isinstance(a, Var) and not isinstance(b, Var):
        return a * (1.0 - m) + b * m
    av, bv = _val(a), _val(b)

    def vjp(g):
        if isinstance(a, Var):
            a._accum(_unbroadcast(g * (1.0 - m), av.shape))
        if isinstance(b, Var):
            b._accum(_unbroadcast(g * m, bv.shape))

    return _current()._record(av * (1.0 - m) + bv * m, vjp)


def mean(x):
    if not isinstance(x, Var):
        return np.mean(x)
    n = x.value.size

    def vjp(g):
        x._accum(np.broadcast_to(g / n, x.value.shape))

    return _current()._record(np.mean(x.value), vjp)
