"""Barrier conditions, trigger state machine, and barrier/final payoffs.

The trigger state per path is (XTrig, tFP, XFP, YFP): a sticky breach
indicator plus the time, level, and strategy value frozen at the first
breach (or carried to maturity if the barrier is never hit).  All
updates are exact copies once XTrig is 1, so frozen values compare
bit-equal to the values at the breach step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "BarrierKind",
    "LevelSchedule",
    "BarrierSpec",
    "InstrumentSpec",
    "TriggerState",
    "condition",
    "trig_update",
    "fp_update",
    "initial_trigger_state",
    "payoff_gB",
    "terminal_payoff",
    "shifted",
]

UP_KINDS = {"up-out", "up-in", "double-out", "double-in"}
DOWN_KINDS = {"down-out", "down-in", "double-out", "double-in"}
KNOCK_IN = {"up-in", "down-in", "double-in"}
ALL_KINDS = UP_KINDS | DOWN_KINDS

# Broadie-Glasserman-Kou continuity-correction constant for discretely
# monitored barriers.
BGK_BETA = 0.5826


@dataclass(frozen=True)
class LevelSchedule:
    """Piecewise-constant barrier level on [0, T].

    ``times`` are the left edges of each piece (times[0] == 0); piece i
    applies on [times[i], times[i+1]).  A single level is a one-piece
    schedule.
    """

    levels: tuple[float, ...]
    times: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if len(self.levels) != len(self.times):
            raise ValueError("levels and times must have equal length")
        if self.times[0] != 0.0:
            raise ValueError("schedule must start at t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule times must be strictly increasing")

    @classmethod
    def flat(cls, level: float) -> "LevelSchedule":
        return cls(levels=(float(level),))

    def at(self, t):
        """Level applying at time t (vectorized over t)."""
        idx = np.searchsorted(np.asarray(self.times), np.asarray(t), side="right") - 1
        out = np.asarray(self.levels)[np.maximum(idx, 0)]
        return out if np.ndim(t) else float(out)


def _as_schedule(x) -> "LevelSchedule | None":
    if x is None or isinstance(x, LevelSchedule):
        return x
    return LevelSchedule.flat(float(x))


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier condition C_t: which region of levels counts as breached.

    Breach is boundary-inclusive: S >= U for an upper barrier, S <= L
    for a lower one.  ``monitor_at_t0`` controls whether the condition
    is already checked at t_0; ``active_at_maturity`` whether a first
    touch exactly at t_N still counts as a breach.
    """

    kind: str
    upper: LevelSchedule | float | None = None
    lower: LevelSchedule | float | None = None
    rebate: float = 0.0
    monitor_at_t0: bool = False
    active_at_maturity: bool = False
    basket_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        object.__setattr__(self, "upper", _as_schedule(self.upper))
        object.__setattr__(self, "lower", _as_schedule(self.lower))
        if self.kind in UP_KINDS and self.upper is None:
            raise ValueError(f"{self.kind} barrier requires an upper level")
        if self.kind in DOWN_KINDS and self.lower is None:
            raise ValueError(f"{self.kind} barrier requires a lower level")
        if self.upper is not None and self.lower is not None:
            ts = sorted(set(self.upper.times) | set(self.lower.times))
            if any(self.lower.at(t) >= self.upper.at(t) for t in ts):
                raise ValueError("lower level must stay below upper level")

    @property
    def is_knock_in(self) -> bool:
        return self.kind in KNOCK_IN

    def monitored(self, x: np.ndarray) -> np.ndarray:
        """Scalar actually compared against the barrier; for dim > 1 the
        first coordinate unless basket weights are configured."""
        x = np.asarray(x)
        if x.ndim == 1:
            x = x[None, :]
        if self.basket_weights is not None:
            return x @ np.asarray(self.basket_weights, dtype=x.dtype)
        return x[..., 0]


@dataclass(frozen=True)
class InstrumentSpec:
    strike: float
    maturity: float
    barrier: BarrierSpec
    option_type: str = "call"

    def __post_init__(self):
        if self.strike <= 0:
            raise ValueError("strike must be > 0")
        if self.maturity <= 0:
            raise ValueError("maturity must be > 0")
        if self.option_type not in ("call", "put"):
            raise ValueError(f"option_type must be call or put, got {self.option_type!r}")

    def intrinsic(self, s):
        s = np.asarray(s, dtype=float)
        if self.option_type == "call":
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)


@dataclass
class TriggerState:
    """Per-path conditional variables; arrays of shape [b] (XFP: [b, d])."""

    XTrig: np.ndarray
    tFP: np.ndarray
    XFP: np.ndarray
    YFP: np.ndarray


def condition(spec: BarrierSpec, t, x) -> np.ndarray:
    """True where the monitored level is inside the barrier region at t."""
    s = spec.monitored(x)
    hit = np.zeros(np.shape(s), dtype=bool)
    if spec.upper is not None and spec.kind in UP_KINDS:
        hit |= s >= spec.upper.at(t)
    if spec.lower is not None and spec.kind in DOWN_KINDS:
        hit |= s <= spec.lower.at(t)
    return hit


def trig_update(prev_trig: np.ndarray, t, x, spec: BarrierSpec) -> np.ndarray:
    """Sticky indicator: stays 1 once set, else checks the condition at t."""
    cond = condition(spec, t, x).astype(float)
    return np.where(prev_trig >= 1.0, prev_trig, cond)


def initial_trigger_state(spec: BarrierSpec, t0, x0, y0) -> TriggerState:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    b = x0.shape[0]
    if spec.monitor_at_t0:
        trig = condition(spec, t0, x0).astype(float)
    else:
        trig = np.zeros(b)
    return TriggerState(
        XTrig=trig,
        tFP=np.full(b, float(t0)),
        XFP=x0.copy(),
        YFP=np.asarray(y0, dtype=float).reshape(b).copy(),
    )


def fp_update(prev: TriggerState, t_i, x_i, y_i, spec: BarrierSpec) -> TriggerState:
    """Advance (tFP, XFP, YFP) to step i using XTrig at step i-1, then
    refresh XTrig with the condition at t_i.

    The copy is exact: frozen components are carried over unchanged, live
    ones take the step-i values.
    """
    x_i = np.asarray(x_i, dtype=float)
    if x_i.ndim == 1:
        x_i = x_i[:, None]
    y_i = np.asarray(y_i, dtype=float).reshape(-1)
    m = prev.XTrig
    live = m < 1.0
    tFP = np.where(live, float(t_i), prev.tFP)
    XFP = np.where(live[:, None], x_i, prev.XFP)
    YFP = np.where(live, y_i, prev.YFP)
    trig = trig_update(m, t_i, x_i, spec)
    return TriggerState(XTrig=trig, tFP=tFP, XFP=XFP, YFP=YFP)


def payoff_gB(instr: InstrumentSpec, t: float, x, rate: float = 0.0, vol: float = 0.0,
              dt: float | None = None) -> float:
    """Barrier/final payoff for one (t, x) state.

    Knock-out: final intrinsic payoff at maturity, rebate before.
    Knock-in: vanilla value of the knocked-in instrument at breach, zero
    if maturity is reached without a breach.  The knock-in branch values
    the vanilla under (rate, vol).  Maturity is detected with a
    half-step tolerance (half of ``dt`` when given); inside the trainer
    the terminal index is used instead (see :func:`terminal_payoff`).
    """
    from .oracles import bs_vanilla

    spec = instr.barrier
    s = float(np.asarray(spec.monitored(np.atleast_1d(x))).reshape(-1)[0])
    tol = 0.5 * dt if dt is not None else 1e-9 * max(1.0, instr.maturity)
    at_maturity = t >= instr.maturity - tol
    if spec.is_knock_in:
        if at_maturity:
            return 0.0
        q = bs_vanilla(s, instr.strike, rate, vol, instr.maturity - t,
                       option_type=instr.option_type)
        return float(q.price)
    if at_maturity:
        return float(instr.intrinsic(s))
    return float(spec.rebate)


def terminal_payoff(instr: InstrumentSpec, tFP, XFP, breached, rate: float, vol: float) -> np.ndarray:
    """Vectorized g_B(tFP_N, XFP_N) using the breach flag instead of a
    floating-point t == T test.

    ``rate`` and ``vol`` are needed only for the knock-in branch, where
    the knocked-in instrument is valued with the vanilla closed form.
    """
    from .oracles import bs_vanilla

    spec = instr.barrier
    s = np.asarray(spec.monitored(np.asarray(XFP)))
    breached = np.asarray(breached, dtype=bool)
    if spec.is_knock_in:
        out = np.zeros_like(s, dtype=float)
        if np.any(breached):
            q = bs_vanilla(s[breached], instr.strike, rate, vol,
                           instr.maturity - np.asarray(tFP)[breached],
                           option_type=instr.option_type)
            out[breached] = q.price
        return out
    return np.where(breached, float(spec.rebate), instr.intrinsic(s))


def shifted(spec: BarrierSpec, vol: float, dt: float) -> BarrierSpec:
    """Continuity-corrected barrier for discrete monitoring: upper levels
    move out by exp(+beta sigma sqrt(dt)), lower levels in by the inverse."""
    bump = float(np.exp(BGK_BETA * vol * np.sqrt(dt)))

    def scale(s: LevelSchedule | None, f: float):
        if s is None:
            return None
        return LevelSchedule(levels=tuple(v * f for v in s.levels), times=s.times)

    return replace(spec, upper=scale(spec.upper, bump), lower=scale(spec.lower, 1.0 / bump))
