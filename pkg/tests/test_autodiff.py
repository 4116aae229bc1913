"""Tape/Var reverse-mode engine tests: every op against central finite
differences, plus tape discipline."""

import numpy as np
import pytest

from barrier_bsde import autodiff as ad
from barrier_bsde.autodiff import Tape, Var


def _grad_of(build, arrays, eps=1e-6):
    """Analytic and finite-difference gradients of scalar build(*vars)."""
    with Tape() as tape:
        vs = [tape.param(a.copy()) for a in arrays]
        loss = build(*vs)
        tape.backward(loss)
        grads = [v.grad if v.grad is not None else np.zeros_like(v.value) for v in vs]
    fds = []
    for k, a in enumerate(arrays):
        fd = np.zeros_like(a)
        flat, fdflat = a.reshape(-1), fd.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            args = [x.copy() for x in arrays]
            args[k].reshape(-1)[j] = old + eps
            lp = float(build(*args))
            args[k].reshape(-1)[j] = old - eps
            lm = float(build(*args))
            fdflat[j] = (lp - lm) / (2 * eps)
        fds.append(fd)
    return grads, fds


def _check(build, arrays, tol=1e-7):
    grads, fds = _grad_of(build, arrays)
    for g, fd in zip(grads, fds):
        denom = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(np.asarray(g) - fd) / denom) < tol


rng = np.random.default_rng(0)


def test_add_sub_mul_broadcast():
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(1, 4))

    def build(x, y):
        return ad.mean((x + y) * (x - y) + 2.0 * x - y + (3.0 - x))

    _check(build, [a, b])


def test_mul_div_pow_neg():
    a = rng.normal(size=(5,)) + 3.0

    def build(x):
        return ad.mean(-(x ** 2) / 7.0 + x * x * 0.5)

    _check(build, [a])


def test_matmul_2d():
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(3, 2))
    _check(lambda x, y: ad.mean(ad.matmul(x, y)
                                if isinstance(x, Var) else x @ y), [a, b])


def test_matmul_3d_batched():
    a = rng.normal(size=(6, 4, 3))
    b = rng.normal(size=(6, 3, 2))

    def build(x, y):
        prod = ad.matmul(x, y) if isinstance(x, Var) else x @ y
        return ad.mean(prod * prod)

    _check(build, [a, b])


def test_matmul_constant_operand():
    a = rng.normal(size=(4, 3))
    c = rng.normal(size=(3, 3))
    _check(lambda x: ad.mean(ad.matmul(x, c) if isinstance(x, Var) else x @ c), [a])


def test_tanh_relu():
    a = rng.normal(size=(7,)) * 2.0
    _check(lambda x: ad.mean(ad.tanh(x) * 3.0), [a])
    b = rng.normal(size=(7,)) + 0.3  # keep away from the relu kink
    _check(lambda x: ad.mean(ad.relu(x) ** 2), [b])


def test_sum_along_and_mean():
    a = rng.normal(size=(3, 4, 2))
    _check(lambda x: ad.mean(ad.sum_along(x, axis=2) ** 2), [a])
    _check(lambda x: ad.mean(ad.sum_along(x, axis=1, keepdims=False) * 2.0), [a])


def test_rows_scatter():
    a = rng.normal(size=(5, 3, 1))

    def build(x):
        rs = ad.rows(x, 5)
        acc = rs[0]
        for i, r in enumerate(rs[1:], start=1):
            acc = acc + float(i) * r * r
        return ad.mean(acc)

    _check(build, [a])


def test_lerp():
    a = rng.normal(size=(6, 1))
    b = rng.normal(size=(6, 1))
    m = (rng.random((6, 1)) > 0.5).astype(float)

    def build(x, y):
        return ad.mean(ad.lerp(x, y, m) ** 2)

    _check(build, [a, b])
    # constants pass straight through
    out = ad.lerp(a, b, m)
    assert np.array_equal(out, a * (1 - m) + b * m)


def test_repeated_use_accumulates():
    a = np.array([2.0])
    with Tape() as tape:
        x = tape.param(a)
        y = x * x + x * 3.0 + x  # x used four times
        tape.backward(ad.mean(y))
    assert x.grad[0] == pytest.approx(2 * 2.0 + 3.0 + 1.0)


def test_chained_rollout_like_graph():
    # miniature of the trainer recursion: sequential affine updates
    y0 = np.array([[1.0], [2.0]])
    gains = rng.normal(size=(4, 2, 1))

    def build(y, g):
        rs = ad.rows(g, 4)
        acc = y
        for r in rs:
            acc = acc * 1.01 + r
        return ad.mean(acc ** 2)

    _check(build, [y0, gains])


def test_requires_active_tape():
    v = Var(np.ones(3))
    with pytest.raises(RuntimeError):
        _ = v + 1.0


def test_nested_tapes_rejected():
    with Tape():
        with pytest.raises(RuntimeError):
            with Tape():
                pass


def test_backward_requires_scalar():
    with Tape() as tape:
        x = tape.param(np.ones(3))
        y = x * 2.0
        with pytest.raises(ValueError):
            tape.backward(y)


def test_unsupported_ops_raise():
    with Tape() as tape:
        x = tape.param(np.ones(2))
        with pytest.raises(TypeError):
            _ = x ** 3
        with pytest.raises(TypeError):
            _ = x / x


def test_constants_get_no_gradient():
    c = np.ones((2, 1))
    with Tape() as tape:
        x = tape.param(np.full((2, 1), 3.0))
        loss = ad.mean(x * c + c)
        tape.backward(loss)
    assert x.grad is not None
    # and the array itself is untouched
    assert np.array_equal(c, np.ones((2, 1)))


def test_backward_resets_gradients_between_sweeps():
    with Tape() as tape:
        x = tape.param(np.array([1.5]))
        loss = ad.mean(x * x)
        tape.backward(loss)
        g1 = x.grad.copy()
        tape.backward(loss)
        assert np.array_equal(x.grad, g1)  # not doubled
