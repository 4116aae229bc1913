"""Market model, time grid, and path simulation tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barrier_bsde.sde import (MarketModel, TimeGrid, fixed_x0, path_rng,
                              sample_x0, simulate_paths)


def test_market_model_defaults_identity_chol():
    m = MarketModel(rate=0.05, vol=0.2, dim=3)
    assert np.array_equal(m.chol, np.eye(3))


def test_market_model_validation():
    with pytest.raises(ValueError):
        MarketModel(rate=0.05, vol=-0.1)
    with pytest.raises(ValueError):
        MarketModel(rate=0.05, vol=0.2, dim=0)
    with pytest.raises(ValueError):
        MarketModel(rate=0.05, vol=0.2, dim=2, chol=np.ones((2, 2)))  # not lower-tri
    with pytest.raises(ValueError):
        MarketModel(rate=0.05, vol=0.2, dim=2,
                    chol=np.array([[2.0, 0.0], [0.0, 1.0]]))  # diag != 1


def test_with_correlation_round_trip():
    corr = np.array([[1.0, 0.6], [0.6, 1.0]])
    m = MarketModel.with_correlation(0.05, 0.2, corr)
    assert np.allclose(m.chol @ m.chol.T, corr)


def test_time_grid_endpoints_exact():
    g = TimeGrid(0.5, 200)
    assert g.times[0] == 0.0
    assert g.times[-1] == 0.5  # exactly, not within float error
    assert len(g.times) == 201
    assert g.dt == pytest.approx(0.0025, abs=0.0)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_path_rng_streams_independent_and_stable():
    a = path_rng(42, 1).normal(size=5)
    b = path_rng(42, 1).normal(size=5)
    c = path_rng(42, 2).normal(size=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_x0_range_and_validation():
    x = sample_x0(1000, 50.0, 150.0, path_rng(1, 1))
    assert x.shape == (1000, 1)
    assert x.min() >= 50.0 and x.max() <= 150.0
    with pytest.raises(ValueError):
        sample_x0(0, 50.0, 150.0, path_rng(1, 1))
    with pytest.raises(ValueError):
        sample_x0(10, 150.0, 50.0, path_rng(1, 1))


def test_fixed_x0():
    x = fixed_x0(4, [100.0, 90.0])
    assert x.shape == (4, 2)
    assert np.array_equal(x, np.tile([100.0, 90.0], (4, 1)))
    with pytest.raises(ValueError):
        fixed_x0(0, 100.0)


def test_simulate_paths_shapes_and_start():
    m = MarketModel(rate=0.05, vol=0.2)
    g = TimeGrid(0.5, 20)
    x0 = fixed_x0(8, 100.0)
    b = simulate_paths(m, g, x0, path_rng(3, 1))
    assert b.X.shape == (8, 21, 1)
    assert b.dW.shape == (8, 20, 1)
    assert np.array_equal(b.X[:, 0], x0)
    assert (b.batch, b.steps, b.dim) == (8, 20, 1)


def test_simulate_paths_euler_recursion_exact():
    """X_{i+1} must equal X_i + r X_i dt + sigma X_i dW_i bit-for-bit."""
    m = MarketModel(rate=0.05, vol=0.2)
    g = TimeGrid(1.0, 13)
    b = simulate_paths(m, g, fixed_x0(5, 80.0), path_rng(7, 1))
    for i in range(13):
        xi = b.X[:, i]
        step = xi + m.rate * xi * g.dt + m.vol * xi * b.dW[:, i]
        assert np.array_equal(b.X[:, i + 1], step)


def test_simulate_paths_zero_vol_deterministic():
    m = MarketModel(rate=0.05, vol=0.0)
    g = TimeGrid(0.5, 50)
    b = simulate_paths(m, g, fixed_x0(2, 100.0), path_rng(1, 1))
    expect = 100.0 * (1.0 + m.rate * g.dt) ** np.arange(51)
    assert np.allclose(b.X[:, :, 0], expect[None, :], rtol=1e-14)


def test_simulate_paths_moments():
    # Euler weak error is O(dt); first two moments at T within MC noise
    m = MarketModel(rate=0.05, vol=0.2)
    g = TimeGrid(0.5, 200)
    b = simulate_paths(m, g, fixed_x0(200_000, 100.0), path_rng(12, 1))
    xt = b.X[:, -1, 0]
    assert xt.mean() == pytest.approx(100.0 * np.exp(0.025), rel=2e-3)
    true_var = 100.0 ** 2 * np.exp(2 * 0.025) * (np.exp(0.04 * 0.5) - 1.0)
    assert xt.var() == pytest.approx(true_var, rel=2e-2)


def test_simulate_paths_correlated_increments():
    corr = np.array([[1.0, 0.8], [0.8, 1.0]])
    m = MarketModel.with_correlation(0.0, 0.2, corr)
    g = TimeGrid(1.0, 1)
    b = simulate_paths(m, g, fixed_x0(100_000, [100.0, 100.0]), path_rng(5, 1))
    rets = b.X[:, 1, :] / b.X[:, 0, :] - 1.0
    rho = np.corrcoef(rets.T)[0, 1]
    assert rho == pytest.approx(0.8, abs=0.01)


def test_simulate_paths_validation():
    m = MarketModel(rate=0.05, vol=0.2)
    g = TimeGrid(0.5, 10)
    with pytest.raises(ValueError):
        simulate_paths(m, g, np.full((4, 2), 100.0), path_rng(1, 1))  # wrong dim
    with pytest.raises(ValueError):
        simulate_paths(m, g, np.array([[100.0], [-5.0]]), path_rng(1, 1))


@given(seed=st.integers(0, 2**31), steps=st.integers(1, 30))
@settings(max_examples=30, deadline=None)
def test_simulate_paths_reproducible(seed, steps):
    m = MarketModel(rate=0.02, vol=0.3)
    g = TimeGrid(0.7, steps)
    a = simulate_paths(m, g, fixed_x0(3, 90.0), path_rng(seed, 1))
    b = simulate_paths(m, g, fixed_x0(3, 90.0), path_rng(seed, 1))
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.dW, b.dW)
