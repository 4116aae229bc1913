"""Closed-form, bridge, and Monte-Carlo oracle tests.

Frozen reference values were cross-checked against numerical integration
of the lognormal density (vanilla) and bridge-corrected Monte Carlo at
1e6 paths (barrier); see also the acceptance suite.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barrier_bsde.barriers import BarrierSpec, InstrumentSpec
from barrier_bsde.oracles import (barrier_up_out_call, barrier_up_out_delta,
                                  bridge_no_breach_prob, bs_vanilla, mc_price)
from barrier_bsde.sde import MarketModel, TimeGrid


# -- vanilla ---------------------------------------------------------------

def test_vanilla_frozen_values():
    # cross-checked against quadrature of the terminal density
    assert bs_vanilla(100.0, 100.0, 0.05, 0.2, 0.5).price == pytest.approx(
        6.8887285777, abs=1e-9)
    assert bs_vanilla(120.0, 100.0, 0.05, 0.2, 0.5).price == pytest.approx(
        22.9524527470, abs=1e-9)
    assert bs_vanilla(90.0, 100.0, 0.03, 0.25, 1.0).price == pytest.approx(
        6.1980699659, abs=1e-9)


def test_vanilla_put_call_parity():
    s, k, r, sig, t = 104.0, 97.0, 0.04, 0.3, 0.75
    c = bs_vanilla(s, k, r, sig, t, option_type="call")
    p = bs_vanilla(s, k, r, sig, t, option_type="put")
    assert c.price - p.price == pytest.approx(s - k * np.exp(-r * t), abs=1e-12)
    assert c.delta - p.delta == pytest.approx(1.0, abs=1e-12)


def test_vanilla_delta_matches_fd():
    s = np.array([70.0, 100.0, 130.0])
    h = 1e-5
    up = bs_vanilla(s + h, 100.0, 0.05, 0.2, 0.5).price
    dn = bs_vanilla(s - h, 100.0, 0.05, 0.2, 0.5).price
    fd = (up - dn) / (2 * h)
    assert np.allclose(bs_vanilla(s, 100.0, 0.05, 0.2, 0.5).delta, fd, atol=1e-8)


def test_vanilla_degenerate_vol():
    assert bs_vanilla(100.0, 100.0, 0.05, 0.0, 0.5).price == pytest.approx(
        100.0 - 100.0 * np.exp(-0.025), abs=1e-14)
    assert bs_vanilla(50.0, 100.0, 0.05, 0.0, 0.5).price == 0.0
    assert bs_vanilla(100.0, 100.0, 0.05, 0.2, 0.0).price == 0.0  # T = 0, ATM


def test_vanilla_rejects_bad_inputs():
    with pytest.raises(ValueError):
        bs_vanilla(-1.0, 100.0, 0.05, 0.2, 0.5)
    with pytest.raises(ValueError):
        bs_vanilla(100.0, 100.0, 0.05, 0.2, -0.5)
    with pytest.raises(ValueError):
        bs_vanilla(100.0, 100.0, 0.05, 0.2, 0.5, option_type="straddle")


@given(s=st.floats(20.0, 300.0), k=st.floats(20.0, 300.0),
       sig=st.floats(0.01, 1.0), t=st.floats(0.01, 3.0))
@settings(max_examples=80, deadline=None)
def test_vanilla_bounds(s, k, sig, t):
    r = 0.05
    q = bs_vanilla(s, k, r, sig, t)
    assert max(s - k * np.exp(-r * t), 0.0) - 1e-9 <= q.price <= s + 1e-9
    assert -1e-9 <= q.delta <= 1.0 + 1e-9


# -- up-and-out barrier ----------------------------------------------------

def test_barrier_frozen_values():
    # regression values validated against 1e6-path bridge MC (|z| < 1)
    for x0, price in [(60.0, 0.0008149902), (80.0, 0.4554671237),
                      (100.0, 6.6128900759), (120.0, 16.2091428217),
                      (140.0, 8.7556085819), (149.0, 0.8708854992)]:
        q = barrier_up_out_call(x0, 100.0, 150.0, 0.05, 0.2, 0.5)
        assert q.price == pytest.approx(price, abs=1e-9), x0


def test_barrier_delta_matches_fd():
    h = 1e-6
    for x0 in (80.0, 100.0, 120.0, 140.0, 148.0):
        up = barrier_up_out_call(x0 + h, 100.0, 150.0, 0.05, 0.2, 0.5).price
        dn = barrier_up_out_call(x0 - h, 100.0, 150.0, 0.05, 0.2, 0.5).price
        fd = (up - dn) / (2 * h)
        an = barrier_up_out_delta(x0, 100.0, 150.0, 0.05, 0.2, 0.5)
        assert abs(an - fd) / max(abs(fd), 1.0) < 1e-6


def test_barrier_delta_matches_fd_with_rebate():
    h = 1e-6
    for x0 in (90.0, 120.0, 145.0):
        up = barrier_up_out_call(x0 + h, 100.0, 150.0, 0.05, 0.2, 0.5, rebate=5.0).price
        dn = barrier_up_out_call(x0 - h, 100.0, 150.0, 0.05, 0.2, 0.5, rebate=5.0).price
        an = barrier_up_out_call(x0, 100.0, 150.0, 0.05, 0.2, 0.5, rebate=5.0).delta
        assert abs(an - (up - dn) / (2 * h)) < 1e-6


def test_barrier_rebate_value_frozen():
    # validated against discrete MC extrapolated in 1/sqrt(N)
    q = barrier_up_out_call(120.0, 100.0, 150.0, 0.05, 0.2, 0.5, rebate=5.0)
    assert q.price == pytest.approx(16.8726830960, abs=1e-9)


def test_barrier_limits():
    # barrier far away: converges to the vanilla call
    v = bs_vanilla(100.0, 100.0, 0.05, 0.2, 0.5).price
    b = barrier_up_out_call(100.0, 100.0, 1e4, 0.05, 0.2, 0.5).price
    assert abs(b - v) < 1e-6
    # at and beyond the barrier the option is knocked out
    assert barrier_up_out_call(150.0, 100.0, 150.0, 0.05, 0.2, 0.5).price == 0.0
    assert barrier_up_out_call(170.0, 100.0, 150.0, 0.05, 0.2, 0.5, rebate=3.0).price == 3.0
    # strike above the barrier: payoff can never be positive
    assert barrier_up_out_call(100.0, 160.0, 150.0, 0.05, 0.2, 0.5).price == 0.0


@given(x0=st.floats(30.0, 149.5), level=st.floats(110.0, 200.0))
@settings(max_examples=80, deadline=None)
def test_barrier_bounds(x0, level):
    if x0 >= level:
        return
    q = barrier_up_out_call(x0, 100.0, level, 0.05, 0.2, 0.5)
    v = bs_vanilla(x0, 100.0, 0.05, 0.2, 0.5)
    assert -1e-12 <= q.price <= v.price + 1e-12


def test_barrier_monotone_in_level():
    x0 = 100.0
    prices = [barrier_up_out_call(x0, 100.0, lv, 0.05, 0.2, 0.5).price
              for lv in (110.0, 130.0, 150.0, 200.0, 400.0)]
    assert all(a < b for a, b in zip(prices, prices[1:]))


# -- Brownian bridge -------------------------------------------------------

def test_bridge_basic_properties():
    # endpoint on/over the level: certain breach
    assert bridge_no_breach_prob(150.0, 120.0, 150.0, 0.2, 0.01) == 0.0
    assert bridge_no_breach_prob(120.0, 155.0, 150.0, 0.2, 0.01) == 0.0
    # far below: essentially certain survival
    assert bridge_no_breach_prob(50.0, 50.0, 150.0, 0.2, 0.01) > 1.0 - 1e-12
    # symmetric in the endpoints
    a = bridge_no_breach_prob(120.0, 140.0, 150.0, 0.2, 0.05)
    b = bridge_no_breach_prob(140.0, 120.0, 150.0, 0.2, 0.05)
    assert a == pytest.approx(b, abs=1e-15)


def test_bridge_lower_mirrors_upper():
    # down-barrier prob at level L equals up-barrier prob of the
    # reciprocal path at level 1/L
    a = bridge_no_breach_prob(100.0, 95.0, 80.0, 0.3, 0.1, kind="lower")
    b = bridge_no_breach_prob(1 / 100.0, 1 / 95.0, 1 / 80.0, 0.3, 0.1, kind="upper")
    assert a == pytest.approx(b, rel=1e-12)


@given(x0=st.floats(60.0, 148.0), x1=st.floats(60.0, 148.0),
       dt=st.floats(1e-4, 1.0), sig=st.floats(0.05, 0.8))
@settings(max_examples=100, deadline=None)
def test_bridge_is_probability(x0, x1, dt, sig):
    p = bridge_no_breach_prob(x0, x1, 150.0, sig, dt)
    assert 0.0 <= p <= 1.0


def test_bridge_decreasing_in_dt():
    ps = [bridge_no_breach_prob(130.0, 135.0, 150.0, 0.2, dt)
          for dt in (0.01, 0.05, 0.2, 1.0)]
    assert all(a > b for a, b in zip(ps, ps[1:]))


def test_bridge_rejects_bad_inputs():
    with pytest.raises(ValueError):
        bridge_no_breach_prob(-1.0, 100.0, 150.0, 0.2, 0.1)
    with pytest.raises(ValueError):
        bridge_no_breach_prob(100.0, 100.0, 150.0, 0.0, 0.1)
    with pytest.raises(ValueError):
        bridge_no_breach_prob(100.0, 100.0, 150.0, 0.2, 0.1, kind="diagonal")


# -- Monte Carlo -----------------------------------------------------------

MODEL = MarketModel(rate=0.05, vol=0.2)
UOC = InstrumentSpec(strike=100.0, maturity=0.5,
                     barrier=BarrierSpec(kind="up-out", upper=150.0))


def test_mc_discrete_above_continuous():
    # discrete monitoring misses breaches, so the knock-out is worth more
    grid = TimeGrid(0.5, 50)
    cf = barrier_up_out_call(120.0, 100.0, 150.0, 0.05, 0.2, 0.5).price
    disc, se = mc_price(MODEL, UOC, grid, 120.0, paths=200_000, seed=1)
    assert disc - cf > 5 * se


def test_mc_bridge_matches_closed_form():
    grid = TimeGrid(0.5, 100)
    cf = barrier_up_out_call(100.0, 100.0, 150.0, 0.05, 0.2, 0.5).price
    mc, se = mc_price(MODEL, UOC, grid, 100.0, paths=200_000, bridge=True, seed=2)
    assert abs(mc - cf) < 3 * se


def test_mc_se_scaling():
    grid = TimeGrid(0.5, 20)
    _, se1 = mc_price(MODEL, UOC, grid, 100.0, paths=20_000, seed=4)
    _, se2 = mc_price(MODEL, UOC, grid, 100.0, paths=80_000, seed=4)
    assert se2 == pytest.approx(se1 / 2, rel=0.15)


def test_mc_deterministic_in_seed():
    grid = TimeGrid(0.5, 20)
    a = mc_price(MODEL, UOC, grid, 100.0, paths=50_000, seed=9)
    b = mc_price(MODEL, UOC, grid, 100.0, paths=50_000, seed=9)
    assert a == b


def test_mc_knock_in_out_parity():
    """Discrete in + out = vanilla: the knock-in leg pays the discounted
    vanilla value at breach, which has the same expectation as the
    vanilla payoff restricted to breached paths."""
    grid = TimeGrid(0.5, 50)
    uin = InstrumentSpec(strike=100.0, maturity=0.5,
                         barrier=BarrierSpec(kind="up-in", upper=150.0))
    p_out, se_o = mc_price(MODEL, UOC, grid, 110.0, paths=400_000, seed=6)
    p_in, se_i = mc_price(MODEL, uin, grid, 110.0, paths=400_000, seed=6)
    vanilla = bs_vanilla(110.0, 100.0, 0.05, 0.2, 0.5).price
    assert abs(p_out + p_in - vanilla) < 3 * np.hypot(se_o, se_i)


def test_mc_validates_inputs():
    grid = TimeGrid(0.5, 10)
    with pytest.raises(ValueError):
        mc_price(MODEL, UOC, grid, 100.0, paths=0)
    rebated = InstrumentSpec(strike=100.0, maturity=0.5,
                             barrier=BarrierSpec(kind="up-out", upper=150.0, rebate=2.0))
    with pytest.raises(ValueError):
        mc_price(MODEL, rebated, grid, 100.0, paths=100, bridge=True)
