"""Command-line entry point.

Subcommands: train, price, hedge, evaluate, oracle, sweep,
demo-triggers.  Exit codes: 0 success, 2 usage, 3 validation error,
4 numeric fault.  Output directory comes from --out-dir or the
BARRIER_BSDE_OUT environment variable.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import config as cfgmod
from .barriers import InstrumentSpec
from .config import ConfigError, RunManifest
from .evaluation import (delta_surface, hedge_simulate, payoff_scatter,
                         write_grid_csv, write_pnl_csv, write_scatter_csv,
                         write_surface_csv, y0_grid_compare)
from .oracles import barrier_up_out_call, bs_vanilla, mc_price
from .sde import MarketModel, TimeGrid, export_paths_csv, fixed_x0, path_rng, simulate_paths
from .trainer import (NumericFault, TrainConfig, load_checkpoint, price,
                      train, trigger_indicators)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4

_OVERRIDES = {
    # flag -> (section, key)
    "vol": ("market", "vol"),
    "rate": ("market", "rate"),
    "maturity": ("instrument", "maturity"),
    "strike": ("instrument", "strike"),
    "steps": ("training", "steps"),
    "batch": ("training", "batch"),
    "mini_batches": ("training", "mini_batches"),
    "layers": ("training", "layers"),
    "units": ("training", "units"),
    "seed": ("training", "seed"),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file")
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--vol", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--maturity", type=float)
    p.add_argument("--barrier-upper", type=float, dest="barrier_upper")
    p.add_argument("--strike", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--mini-batches", type=int, dest="mini_batches")
    p.add_argument("--layers", type=int)
    p.add_argument("--units", type=int)
    p.add_argument("--seed", type=int)


def _raw_config(args) -> dict:
    raw: dict = {}
    if args.config is not None:
        loaded = yaml.safe_load(Path(args.config).read_text())
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError(f"{args.config}: top level must be a mapping")
            raw = loaded
    for flag, (section, key) in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            raw.setdefault(section, {})[key] = val
    if getattr(args, "barrier_upper", None) is not None:
        raw.setdefault("instrument", {}).setdefault("barrier", {})["upper"] = args.barrier_upper
    return raw


def _out_dir(args) -> Path:
    out = args.out_dir or os.environ.get("BARRIER_BSDE_OUT") or "."
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(args):
    raw = _raw_config(args)
    train_cfg, model, instr = cfgmod.build(raw)
    return raw, train_cfg, model, instr


def cmd_train(args) -> int:
    raw, cfg, model, instr = _setup(args)
    out = _out_dir(args)
    if cfg.checkpoint_path is None:
        cfg.checkpoint_path = str(out / "checkpoint.npz")
    manifest = RunManifest("train", raw, cfg.seed)
    params, report = train(cfg, model, instr)
    hist_path = out / "loss_history.csv"
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "loss_std"])
        w.writerows(report.history)
    manifest.add_output(cfg.checkpoint_path)
    manifest.add_output(hist_path)
    manifest.write(out)
    print(f"trained {cfg.mini_batches} mini-batches in {report.wall_time:.1f}s")
    print(f"final batch loss {report.final_loss:.4f}")
    print(f"checkpoint: {cfg.checkpoint_path}")
    print(f"loss history: {hist_path}")
    return EXIT_OK


def cmd_price(args) -> int:
    raw, cfg, model, instr = _setup(args)
    params, _ = load_checkpoint(args.checkpoint)
    learned = price(params, args.x0)
    analytic = barrier_up_out_call(args.x0, instr.strike,
                                   instr.barrier.upper.levels[0], model.rate,
                                   model.vol, instr.maturity,
                                   rebate=instr.barrier.rebate).price
    print(f"x0 = {args.x0}")
    print(f"learned price  = {learned:.6f}")
    print(f"analytic price = {analytic:.6f}")
    print(f"difference     = {learned - analytic:+.6f}")
    return EXIT_OK


def cmd_hedge(args) -> int:
    raw, cfg, model, instr = _setup(args)
    out = _out_dir(args)
    manifest = RunManifest("hedge", raw, args.eval_seed)
    grid = TimeGrid(instr.maturity, cfg.steps)
    rng_x0 = path_rng(args.eval_seed, 101)
    if cfg.x0_fixed is not None:
        x0 = fixed_x0(args.paths, [cfg.x0_fixed] * model.dim)
    else:
        from .sde import sample_x0
        x0 = sample_x0(args.paths, cfg.x0_lo, cfg.x0_hi, rng_x0, dim=model.dim)
    batch = simulate_paths(model, grid, x0, path_rng(args.eval_seed, 102))
    outputs = []
    for source in ("learned", "analytic"):
        if source == "learned":
            if args.checkpoint is None:
                continue
            params, _ = load_checkpoint(args.checkpoint)
            recs = hedge_simulate("learned", params, model, instr, grid, batch)
        else:
            recs = hedge_simulate("analytic", None, model, instr, grid, batch)
        path = out / f"pnl_{source}.csv"
        write_pnl_csv(path, recs)
        pnl = np.array([r.pnl for r in recs])
        print(f"{source}: mean pnl {pnl.mean():+.4f}, std {pnl.std():.4f}, "
              f"5-95% IQR {np.quantile(pnl, 0.95) - np.quantile(pnl, 0.05):.4f}")
        outputs.append(path)
    for p in outputs:
        manifest.add_output(p)
    manifest.write(out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    raw, cfg, model, instr = _setup(args)
    out = _out_dir(args)
    manifest = RunManifest("evaluate", raw, args.eval_seed)
    params, _ = load_checkpoint(args.checkpoint)
    grid = TimeGrid(instr.maturity, cfg.steps)
    from .sde import sample_x0
    x0 = sample_x0(args.paths, cfg.x0_lo, cfg.x0_hi, path_rng(args.eval_seed, 103),
                   dim=model.dim)
    batch = simulate_paths(model, grid, x0, path_rng(args.eval_seed, 104))
    scatter = payoff_scatter(params, batch, model, instr, grid)
    grid_rows = y0_grid_compare(params, np.arange(50.0, 150.5, 1.0), instr, model)
    surface = delta_surface(params, grid, np.arange(50.0, 150.5, 2.0))
    paths = {
        "payoff_scatter.csv": (write_scatter_csv, scatter),
        "y0_grid.csv": (write_grid_csv, grid_rows),
        "delta_surface.csv": (write_surface_csv, surface),
    }
    for name, (writer, rows) in paths.items():
        p = out / name
        writer(p, rows)
        manifest.add_output(p)
    diffs = np.array([r["diff"] for r in grid_rows])
    print(f"y0 grid: max |learned - analytic| = {np.abs(diffs).max():.4f}, "
          f"mean |diff| = {np.abs(diffs).mean():.4f}")
    manifest.write(out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    raw, cfg, model, instr = _setup(args)
    level = instr.barrier.upper.levels[0]
    q = barrier_up_out_call(args.x0, instr.strike, level, model.rate, model.vol,
                            instr.maturity, rebate=instr.barrier.rebate)
    v = bs_vanilla(args.x0, instr.strike, model.rate, model.vol, instr.maturity,
                   option_type=instr.option_type)
    print(f"vanilla {instr.option_type}: price {v.price:.6f}, delta {v.delta:.6f}")
    print(f"up-and-out call:  price {q.price:.6f}, delta {q.delta:.6f}")
    if args.mc_paths:
        grid = TimeGrid(instr.maturity, cfg.steps)
        pd_, se_d = mc_price(model, instr, grid, args.x0, args.mc_paths,
                             bridge=False, seed=cfg.seed)
        pb, se_b = mc_price(model, instr, grid, args.x0, args.mc_paths,
                            bridge=True, seed=cfg.seed)
        print(f"MC discrete ({cfg.steps} steps): {pd_:.6f} +/- {se_d:.6f}")
        print(f"MC bridge-corrected:           {pb:.6f} +/- {se_b:.6f}")
    if args.grid_csv:
        rows = []
        for x0 in np.arange(50.0, 150.5, 1.0):
            qq = barrier_up_out_call(x0, instr.strike, level, model.rate,
                                     model.vol, instr.maturity,
                                     rebate=instr.barrier.rebate)
            rows.append([x0, qq.price, qq.delta])
        with open(args.grid_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x0", "price", "delta"])
            w.writerows(rows)
        print(f"grid written to {args.grid_csv}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw, cfg, model, instr = _setup(args)
    out = _out_dir(args)
    manifest = RunManifest("sweep", raw, cfg.seed)
    from dataclasses import replace

    rows = []
    for n in (3, 5, 7):
        for u in (3, 5):
            for steps in (50, 100, 200):
                for b in (256, 512, 1024):
                    c = replace(cfg, layers=n, units=u, steps=steps, batch=b,
                                mini_batches=args.mini_batches or cfg.mini_batches,
                                checkpoint_path=None, checkpoint_stride=0)
                    _, rep = train(c, model, instr)
                    rows.append([n, u, steps, b, rep.final_loss])
                    print(f"n={n} u={u} steps={steps} b={b}: "
                          f"final loss {rep.final_loss:.3f}")
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layers", "units", "steps", "batch", "final_loss"])
        w.writerows(rows)
    manifest.add_output(path)
    manifest.write(out)
    print(f"sweep table: {path}")
    return EXIT_OK


def cmd_demo_triggers(args) -> int:
    raw, cfg, model, instr = _setup(args)
    out = _out_dir(args)
    manifest = RunManifest("demo-triggers", raw, args.seed or cfg.seed)
    steps = args.steps or 400
    grid = TimeGrid(instr.maturity, steps)
    x0 = fixed_x0(args.paths, [args.x0] * model.dim)
    batch = simulate_paths(model, grid, x0, path_rng(args.seed or cfg.seed, 105))
    trig = trigger_indicators(instr.barrier, grid, batch.X)
    spec = instr.barrier
    trace_path = out / "trigger_trace.csv"
    with open(trace_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "x", "xtrig", "tfp", "xfp"])
        for p in range(batch.batch):
            tfp = 0.0
            xfp = batch.X[p, 0, 0]
            for i in range(steps + 1):
                if i > 0:
                    if trig[p, i - 1] < 1.0:
                        tfp = grid.times[i]
                        xfp = batch.X[p, i, 0]
                w.writerow([p, i, repr(batch.X[p, i, 0]), trig[p, i],
                            repr(tfp), repr(xfp)])
    paths_path = out / "paths.csv"
    export_paths_csv(batch, paths_path)
    manifest.add_output(trace_path)
    manifest.add_output(paths_path)
    manifest.write(out)
    print(f"trigger trace: {trace_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="barrier-bsde",
                                 description="Forward deep-BSDE barrier option pricer")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the replication networks")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("price", help="learned vs analytic price at one spot")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--x0", type=float, default=100.0)
    p.set_defaults(fn=cmd_price)

    p = sub.add_parser("hedge", help="hedging PnL, learned and analytic deltas")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--eval-seed", type=int, default=999, dest="eval_seed")
    p.set_defaults(fn=cmd_hedge)

    p = sub.add_parser("evaluate", help="payoff scatter, value grid, delta surface")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--paths", type=int, default=4096)
    p.add_argument("--eval-seed", type=int, default=999, dest="eval_seed")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("oracle", help="closed-form and Monte-Carlo reference prices")
    _add_common(p)
    p.add_argument("--x0", type=float, default=100.0)
    p.add_argument("--mc-paths", type=int, default=0, dest="mc_paths")
    p.add_argument("--grid-csv", dest="grid_csv")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("sweep", help="hyper-parameter grid over (n, u, steps, batch)")
    _add_common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("demo-triggers", help="trigger-behavior trace on a few paths")
    _add_common(p)
    p.add_argument("--paths", type=int, default=5)
    p.add_argument("--x0", type=float, default=100.0)
    p.set_defaults(fn=cmd_demo_triggers)

    return ap


def dispatch(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
