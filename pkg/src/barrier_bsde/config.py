"""Configuration loading and run manifests.

The config file is YAML with three sections (market, instrument,
training); every key has a default matching the baseline up-and-out
call experiment, so an empty file is a valid full configuration.
Unknown keys are rejected to catch typos.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from .barriers import BarrierSpec, InstrumentSpec, LevelSchedule
from .sde import MarketModel
from .trainer import TrainConfig

__all__ = ["ConfigError", "load_config", "dump_config", "config_hash", "RunManifest"]

DEFAULTS = {
    "market": {
        "rate": 0.05,
        "vol": 0.2,
        "dim": 1,
        "correlation": None,
    },
    "instrument": {
        "strike": 100.0,
        "maturity": 0.5,
        "option_type": "call",
        "barrier": {
            "kind": "up-out",
            "upper": 150.0,
            "lower": None,
            "rebate": 0.0,
            "monitor_at_t0": False,
            "active_at_maturity": False,
        },
    },
    "training": {
        "steps": 200,
        "batch": 512,
        "mini_batches": 20000,
        "layers": 5,
        "units": 5,
        "activation": "tanh",
        "lr": 0.01,
        "lr_decay": 0.5,
        "lr_decay_every": 5000,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "seed": 1,
        "x0_lo": 50.0,
        "x0_hi": 150.0,
        "x0_fixed": None,
        "report_stride": 100,
        "checkpoint_stride": 0,
        "checkpoint_path": None,
        "dtype": "float64",
    },
}


class ConfigError(ValueError):
    """Invalid or unparsable configuration; message names the field."""


def _merge(defaults: dict, given: dict, prefix: str = "") -> dict:
    out = {}
    for key, dval in defaults.items():
        if key in given:
            gval = given[key]
            if isinstance(dval, dict) and gval is not None:
                if not isinstance(gval, dict):
                    raise ConfigError(f"{prefix}{key}: expected a mapping")
                out[key] = _merge(dval, gval, prefix=f"{prefix}{key}.")
            else:
                out[key] = gval
        else:
            out[key] = dval if not isinstance(dval, dict) else _merge(dval, {}, prefix)
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(prefix + k for k in unknown))}")
    return out


def _schedule(value):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return LevelSchedule.flat(float(value))
    if isinstance(value, dict):
        return LevelSchedule(levels=tuple(float(v) for v in value["levels"]),
                             times=tuple(float(t) for t in value["times"]))
    raise ConfigError("barrier level must be a number or {levels, times}")


def normalize(raw: dict | None) -> dict:
    """Merge user keys over the defaults, rejecting unknown ones."""
    return _merge(DEFAULTS, raw or {})


def build(raw: dict | None) -> tuple[TrainConfig, MarketModel, InstrumentSpec]:
    cfg = normalize(raw)
    m = cfg["market"]
    if m["vol"] < 0:
        raise ConfigError("market.vol: vol must be >= 0")
    if m["dim"] < 1:
        raise ConfigError("market.dim: dim must be >= 1")
    try:
        if m["correlation"] is not None:
            model = MarketModel.with_correlation(m["rate"], m["vol"],
                                                 np.asarray(m["correlation"], dtype=float))
        else:
            model = MarketModel(rate=m["rate"], vol=m["vol"], dim=m["dim"])
        ispec = cfg["instrument"]
        bspec = ispec["barrier"]
        barrier = BarrierSpec(
            kind=bspec["kind"],
            upper=_schedule(bspec["upper"]),
            lower=_schedule(bspec["lower"]),
            rebate=float(bspec["rebate"]),
            monitor_at_t0=bool(bspec["monitor_at_t0"]),
            active_at_maturity=bool(bspec["active_at_maturity"]),
        )
        instr = InstrumentSpec(strike=float(ispec["strike"]),
                               maturity=float(ispec["maturity"]),
                               option_type=ispec["option_type"], barrier=barrier)
        train_cfg = TrainConfig(**cfg["training"])
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return train_cfg, model, instr


def load_config(path) -> tuple[TrainConfig, MarketModel, InstrumentSpec]:
    """Parse and validate a YAML config file; missing keys take defaults."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return build(raw)


def dump_config(raw: dict | None) -> str:
    """Canonical YAML of the fully defaulted config (idempotent under
    load/dump)."""
    return yaml.safe_dump(normalize(raw), sort_keys=True)


def config_hash(raw: dict | None) -> str:
    """Stable hash of the normalized config, independent of key order."""
    canon = json.dumps(normalize(raw), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


class RunManifest:
    """Inventory of one CLI run: config hash, seeds, outputs, timestamps."""

    def __init__(self, command: str, raw_config: dict | None, seed: int):
        self.data = {
            "artifact_version": "0.1.0",
            "command": command,
            "config_hash": config_hash(raw_config),
            "config": normalize(raw_config),
            "seed": seed,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "finished": None,
            "outputs": [],
        }

    def add_output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def write(self, out_dir) -> Path:
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, default=str))
        return path
