"""Out-of-sample evaluation: hedging PnL, payoff replication, and
comparison of the learned time-0 value against the closed form.

All outputs are plot-ready records; CSV writers are provided for each.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .barriers import InstrumentSpec, shifted
from .oracles import barrier_up_out_call
from .sde import MarketModel, PathBatch, TimeGrid
from .trainer import (ModelParams, Generator, risk_neutral_generator, rollout,
                      loss_value, price, hedge_ratio)
from .trainer import _batch_payoff

__all__ = [
    "PnlRecord",
    "hedge_simulate",
    "payoff_scatter",
    "y0_grid_compare",
    "delta_surface",
    "write_pnl_csv",
    "write_scatter_csv",
    "write_grid_csv",
    "write_surface_csv",
]

DELTA_CLIP = 25.0


@dataclass
class PnlRecord:
    path: int
    breached: bool
    breach_step: int
    value: float
    payoff: float
    pnl: float


def _analytic_pi(instr: InstrumentSpec, model: MarketModel, grid: TimeGrid,
                 clip: float, barrier_shift: bool):
    """Hedge-ratio callable from the closed-form up-and-out delta.

    The barrier delta is unbounded at the level, so it is clipped; paths
    already frozen ignore their hedge anyway.
    """
    spec = instr.barrier
    if spec.kind != "up-out" or len(spec.upper.levels) != 1:
        raise ValueError("analytic deltas available for constant up-and-out barriers only")
    level = spec.upper.levels[0]
    if barrier_shift:
        level = shifted(spec, model.vol, grid.dt).upper.levels[0]

    def pi(i, t_i, x):
        s = np.clip(x[:, 0], 1e-12, level * (1 - 1e-12))
        tau = max(instr.maturity - t_i, grid.dt * 1e-6)
        d = barrier_up_out_call(s, instr.strike, level, model.rate, model.vol,
                                tau, rebate=spec.rebate).delta
        out = np.zeros_like(x)
        out[:, 0] = np.clip(d, -clip, clip)
        return out

    return pi


def hedge_simulate(delta_source: str, params_or_none, model: MarketModel,
                   instr: InstrumentSpec, grid: TimeGrid, batch: PathBatch,
                   gen: Generator | None = None, clip: float = DELTA_CLIP,
                   barrier_shift: bool = False) -> list[PnlRecord]:
    """Discrete-time hedging PnL per path.

    delta_source "learned" uses the trained hedge networks and the
    learned initial value; "analytic" uses the closed-form delta and the
    closed-form time-0 price.  PnL = frozen strategy value minus the
    contractual payoff at the breach-or-maturity state.
    """
    gen = gen or risk_neutral_generator(model.rate)
    if delta_source == "learned":
        params: ModelParams = params_or_none
        res, _ = rollout(params, batch, model, grid, instr, gen)
    elif delta_source == "analytic":
        pi = _analytic_pi(instr, model, grid, clip, barrier_shift)
        level = instr.barrier.upper.levels[0]
        if barrier_shift:
            level = shifted(instr.barrier, model.vol, grid.dt).upper.levels[0]
        y0 = barrier_up_out_call(
            batch.X[:, 0, 0], instr.strike, level,
            model.rate, model.vol, instr.maturity, rebate=instr.barrier.rebate,
        ).price
        res, _ = rollout(None, batch, model, grid, instr, gen,
                         pi_override=pi, y0_override=y0)
    else:
        raise ValueError("delta_source must be 'learned' or 'analytic'")
    payoff = _batch_payoff(instr, model, res)
    yfp = np.asarray(res.YFP).reshape(-1)
    first = _first_breach_step(res.trig)
    return [
        PnlRecord(path=p, breached=bool(res.breached[p]), breach_step=int(first[p]),
                  value=float(yfp[p]), payoff=float(payoff[p]),
                  pnl=float(yfp[p] - payoff[p]))
        for p in range(batch.batch)
    ]


def _first_breach_step(trig: np.ndarray) -> np.ndarray:
    n = trig.shape[1] - 1
    hit = trig >= 1.0
    first = np.argmax(hit, axis=1)
    first[~hit.any(axis=1)] = n
    return first


def payoff_scatter(params: ModelParams, batch: PathBatch, model: MarketModel,
                   instr: InstrumentSpec, grid: TimeGrid,
                   gen: Generator | None = None):
    """Terminal replication data per path: (XFP, YFP, g_B, breached)."""
    gen = gen or risk_neutral_generator(model.rate)
    res, _ = rollout(params, batch, model, grid, instr, gen)
    payoff = _batch_payoff(instr, model, res)
    yfp = np.asarray(res.YFP).reshape(-1)
    return [
        {
            "path": p,
            "xfp": float(instr.barrier.monitored(res.XFP)[p]),
            "yfp": float(yfp[p]),
            "payoff": float(payoff[p]),
            "breached": bool(res.breached[p]),
        }
        for p in range(batch.batch)
    ]


def y0_grid_compare(params: ModelParams, x0_grid, instr: InstrumentSpec,
                    model: MarketModel):
    """Learned vs closed-form time-0 value over a spot grid."""
    level = instr.barrier.upper.levels[0]
    rows = []
    for x0 in np.asarray(x0_grid, dtype=float):
        learned = price(params, x0)
        analytic = barrier_up_out_call(x0, instr.strike, level, model.rate,
                                       model.vol, instr.maturity,
                                       rebate=instr.barrier.rebate).price
        rows.append({"x0": float(x0), "learned": float(learned),
                     "analytic": float(analytic),
                     "diff": float(learned - analytic)})
    return rows


def delta_surface(params: ModelParams, grid: TimeGrid, x_grid):
    """pi_i(x) over time steps and a level grid, for the 3D strategy plot."""
    x = np.asarray(x_grid, dtype=float)
    rows = []
    for i in range(params.n_steps):
        vals = hedge_ratio(params, i, x)[:, 0]
        for xv, pv in zip(x, vals):
            rows.append({"step": i, "t": float(grid.times[i]),
                         "x": float(xv), "pi": float(pv)})
    return rows


# -- CSV writers (schema version 1) ------------------------------------

def _write(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_pnl_csv(path, records: list[PnlRecord]) -> None:
    _write(path, ["path", "breached", "breach_step", "value", "payoff", "pnl"],
           [r.__dict__ for r in records])


def write_scatter_csv(path, rows) -> None:
    _write(path, ["path", "xfp", "yfp", "payoff", "breached"], rows)


def write_grid_csv(path, rows) -> None:
    _write(path, ["x0", "learned", "analytic", "diff"], rows)


def write_surface_csv(path, rows) -> None:
    _write(path, ["step", "t", "x", "pi"], rows)
