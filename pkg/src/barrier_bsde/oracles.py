"""Independent reference values: closed-form vanilla and up-and-out
prices with deltas, Brownian-bridge no-breach probabilities, and a
Monte-Carlo pricer.

The MC pricer samples exact GBM increments (not the Euler scheme used
for training paths) so that, with bridge weighting, it is an unbiased
estimator of the continuously monitored price and can cross-validate
the closed form directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .barriers import BarrierSpec, InstrumentSpec, condition
from .sde import MarketModel, TimeGrid, path_rng

__all__ = [
    "VanillaQuote",
    "BarrierQuote",
    "bs_vanilla",
    "barrier_up_out_call",
    "barrier_up_out_delta",
    "bridge_no_breach_prob",
    "mc_price",
]

_MC_CHUNK = 1 << 18


@dataclass(frozen=True)
class VanillaQuote:
    price: np.ndarray | float
    delta: np.ndarray | float
    spot: np.ndarray | float
    strike: float
    rate: float
    vol: float
    maturity: np.ndarray | float


@dataclass(frozen=True)
class BarrierQuote:
    price: np.ndarray | float
    delta: np.ndarray | float
    spot: np.ndarray | float
    strike: float
    barrier: float
    rate: float
    vol: float
    maturity: float
    rebate: float = 0.0


def _phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def bs_vanilla(spot, strike, rate, vol, maturity, option_type: str = "call") -> VanillaQuote:
    """Black-Scholes price and delta; put obtained through parity.

    Degenerate vol*sqrt(T) = 0 returns the deterministic forward value
    max(S - K e^{-rT}, 0) with a step-function delta.
    """
    s = np.asarray(spot, dtype=float)
    t = np.asarray(maturity, dtype=float)
    if np.any(s <= 0) or strike <= 0:
        raise ValueError("spot and strike must be > 0")
    if np.any(t < 0):
        raise ValueError("maturity must be >= 0")
    disc_k = strike * np.exp(-rate * t)
    sig_rt = vol * np.sqrt(t)
    degenerate = sig_rt <= 0
    sig_safe = np.where(degenerate, 1.0, sig_rt)
    d1 = (np.log(s / strike) + (rate + 0.5 * vol * vol) * t) / sig_safe
    d2 = d1 - sig_rt
    call = np.where(degenerate, np.maximum(s - disc_k, 0.0), s * ndtr(d1) - disc_k * ndtr(d2))
    call_delta = np.where(degenerate, (s > disc_k).astype(float), ndtr(d1))
    if option_type == "call":
        price, delta = call, call_delta
    elif option_type == "put":
        price, delta = call - s + disc_k, call_delta - 1.0
    else:
        raise ValueError(f"option_type must be call or put, got {option_type!r}")
    if np.ndim(spot) == 0 and np.ndim(maturity) == 0:
        price, delta = float(price), float(delta)
    return VanillaQuote(price=price, delta=delta, spot=spot, strike=strike,
                        rate=rate, vol=vol, maturity=maturity)


def _d2(s, x, rate, vol, t):
    return (np.log(s / x) + (rate - 0.5 * vol * vol) * t) / (vol * np.sqrt(t))


def _d1(s, x, rate, vol, t):
    return (np.log(s / x) + (rate + 0.5 * vol * vol) * t) / (vol * np.sqrt(t))


def _truncated_call(s, strike, barrier, rate, vol, t):
    """Value and S-derivative of the payoff (S_T - K)^+ 1_{S_T < H}.

    Written as the collar s[N(d1_K) - N(d1_H)] - K e^{-rt}[N(d2_K) -
    N(d2_H)] with each N-difference taken in the accurate tail: the naive
    C(s,K) - C(s,H) - digital form cancels catastrophically when s is far
    above the barrier, which the reflection price hits at s = H^2/S.
    """
    s = np.asarray(s, dtype=float)
    srt = vol * np.sqrt(t)
    df = np.exp(-rate * t)
    d1k = _d1(s, strike, rate, vol, t)
    d1h = _d1(s, barrier, rate, vol, t)
    d2k, d2h = d1k - srt, d1h - srt
    a = np.where(d1h > 0, ndtr(-d1h) - ndtr(-d1k), ndtr(d1k) - ndtr(d1h))
    b = np.where(d2h > 0, ndtr(-d2h) - ndtr(-d2k), ndtr(d2k) - ndtr(d2h))
    val = s * a - strike * df * b
    dval = a - (barrier - strike) * df * _phi(d2h) / (s * srt)
    return val, dval


def _rebate_at_hit(s, barrier, rate, vol, t, rebate):
    """Value and delta of a rebate paid at first touch of an upper barrier."""
    nu = rate - 0.5 * vol * vol
    a = nu / (vol * vol)
    bb = np.sqrt(nu * nu + 2.0 * rate * vol * vol) / (vol * vol)
    srt = vol * np.sqrt(t)
    z = np.log(barrier / s) / srt + bb * srt
    z2 = z - 2.0 * bb * srt
    hs = barrier / s
    p1, p2 = hs ** (a + bb), hs ** (a - bb)
    val = rebate * (p1 * ndtr(-z) + p2 * ndtr(-z2))
    dval = rebate * (
        -(a + bb) / s * p1 * ndtr(-z) + p1 * _phi(z) / (s * srt)
        - (a - bb) / s * p2 * ndtr(-z2) + p2 * _phi(z2) / (s * srt)
    )
    return val, dval


def barrier_up_out_call(spot, strike, barrier, rate, vol, maturity,
                        rebate: float = 0.0) -> BarrierQuote:
    """Continuously monitored up-and-out call (reflection-principle form).

    For S >= H the option is already knocked out and is worth the rebate.
    The knocked-out part uses the image solution P(S) = A(S) -
    (H/S)^kappa A(H^2/S) with kappa = 2r/sigma^2 - 1, where A is the
    value of the call payoff truncated at the barrier.
    """
    s = np.asarray(spot, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    if strike <= 0 or barrier <= 0 or maturity <= 0 or vol <= 0:
        raise ValueError("strike, barrier, maturity, and vol must be > 0")
    # knocked-out region: rebate due immediately
    price = np.full(s.shape, float(rebate))
    delta = np.zeros(s.shape)
    inside = s < barrier
    if np.any(inside):
        si = s[inside]
        pi = np.zeros(si.shape)
        di = np.zeros(si.shape)
        if strike < barrier:
            kappa = 2.0 * rate / (vol * vol) - 1.0
            m = barrier * barrier / si
            a_s, da_s = _truncated_call(si, strike, barrier, rate, vol, maturity)
            a_m, da_m = _truncated_call(m, strike, barrier, rate, vol, maturity)
            fac = (barrier / si) ** kappa
            pi = a_s - fac * a_m
            di = da_s + kappa / si * fac * a_m + fac * da_m * (barrier / si) ** 2
        if rebate != 0.0:
            rv, rd = _rebate_at_hit(si, barrier, rate, vol, maturity, rebate)
            pi = pi + rv
            di = di + rd
        price[inside] = pi
        delta[inside] = di
    if scalar:
        return BarrierQuote(price=float(price[0]), delta=float(delta[0]), spot=float(spot),
                            strike=strike, barrier=barrier, rate=rate, vol=vol,
                            maturity=maturity, rebate=rebate)
    return BarrierQuote(price=price, delta=delta, spot=spot, strike=strike, barrier=barrier,
                        rate=rate, vol=vol, maturity=maturity, rebate=rebate)


def barrier_up_out_delta(spot, strike, barrier, rate, vol, maturity, rebate: float = 0.0):
    return barrier_up_out_call(spot, strike, barrier, rate, vol, maturity, rebate).delta


def bridge_no_breach_prob(x_i, x_next, level, vol, dt, kind: str = "upper"):
    """Probability a continuous GBM path stays on the safe side of a
    constant barrier between two observed points, conditional on them.

    Standard Brownian-bridge result in log space: 1 - exp(-2 ln(B/x_i)
    ln(B/x_{i+1}) / (sigma^2 dt)), zero if either endpoint breaches.
    """
    x_i = np.asarray(x_i, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    if np.any(x_i <= 0) or np.any(x_next <= 0):
        raise ValueError("levels must be > 0")
    if vol <= 0 or dt <= 0:
        raise ValueError("vol and dt must be > 0")
    a = np.log(level / x_i)
    b = np.log(level / x_next)
    if kind == "lower":
        a, b = -a, -b
    elif kind != "upper":
        raise ValueError("kind must be 'upper' or 'lower'")
    p = 1.0 - np.exp(-2.0 * a * b / (vol * vol * dt))
    p = np.where((a <= 0) | (b <= 0), 0.0, p)
    return float(p) if p.ndim == 0 else p


def _bridge_kind(spec: BarrierSpec) -> tuple[str, float]:
    if spec.basket_weights is not None:
        raise ValueError("bridge correction supports single-underlier barriers only")
    if spec.kind in ("up-out", "up-in"):
        sched = spec.upper
        kind = "upper"
    elif spec.kind in ("down-out", "down-in"):
        sched = spec.lower
        kind = "lower"
    else:
        raise ValueError("bridge correction supports single barriers only")
    if len(sched.levels) != 1:
        raise ValueError("bridge correction requires a constant barrier level")
    return kind, sched.levels[0]


def mc_price(model: MarketModel, instr: InstrumentSpec, grid: TimeGrid, x0: float,
             paths: int, bridge: bool = False, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo price and standard error from exact GBM sampling.

    bridge=False: discretely monitored estimate; breaches are checked at
    grid times only and payoffs discounted from the breach/maturity time.
    bridge=True: surviving payoffs are weighted by per-interval no-breach
    probabilities, giving the continuously monitored price (knock-out
    needs zero rebate; knock-in uses the complementary weight).
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    if model.dim != 1:
        raise ValueError("mc_price supports dim = 1")
    spec = instr.barrier
    if bridge:
        kind, level = _bridge_kind(spec)
        if not spec.is_knock_in and spec.rebate != 0.0:
            raise ValueError("bridge correction requires zero rebate for knock-outs")
    r, vol = model.rate, model.vol
    n, dt = grid.steps, grid.dt
    times = grid.times
    drift = (r - 0.5 * vol * vol) * dt
    sig = vol * np.sqrt(dt)
    rng = path_rng(seed, 7001)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < paths:
        m = min(_MC_CHUNK, paths - done)
        x = np.full(m, float(x0))
        if bridge:
            w = np.ones(m)
            if spec.monitor_at_t0:
                w *= (~condition(spec, 0.0, x[:, None])).astype(float)
        else:
            trig = condition(spec, 0.0, x[:, None]).astype(float) if spec.monitor_at_t0 \
                else np.zeros(m)
            tFP = np.zeros(m)
            xFP = x.copy()
        for i in range(n):
            z = rng.standard_normal(m)
            x_next = x * np.exp(drift + sig * z)
            if bridge:
                w *= bridge_no_breach_prob(x, x_next, level, vol, dt, kind=kind)
            else:
                t_next = times[i + 1]
                # barrier checked at interior grid times; at t_N only the
                # active_at_maturity variant counts a fresh touch
                if i + 1 < n or spec.active_at_maturity:
                    newly = (trig < 1.0) & condition(spec, t_next, x_next[:, None])
                else:
                    newly = np.zeros(m, dtype=bool)
                live = trig < 1.0
                tFP = np.where(live, t_next, tFP)
                xFP = np.where(live, x_next, xFP)
                trig = np.where(newly, 1.0, trig)
            x = x_next
        if bridge:
            final = instr.intrinsic(x)
            if spec.is_knock_in:
                vals = np.exp(-r * instr.maturity) * (1.0 - w) * final
            else:
                vals = np.exp(-r * instr.maturity) * w * final
        else:
            breached = trig >= 1.0
            if spec.is_knock_in:
                vals = np.zeros(m)
                if np.any(breached):
                    q = bs_vanilla(xFP[breached], instr.strike, r, vol,
                                   instr.maturity - tFP[breached],
                                   option_type=instr.option_type)
                    vals[breached] = np.exp(-r * tFP[breached]) * q.price
            else:
                vals = np.where(
                    breached,
                    spec.rebate * np.exp(-r * tFP),
                    np.exp(-r * instr.maturity) * instr.intrinsic(x),
                )
        total += vals.sum()
        total_sq += (vals * vals).sum()
        done += m
    mean = total / paths
    var = max(total_sq / paths - mean * mean, 0.0)
    se = np.sqrt(var / paths)
    return float(mean), float(se)
