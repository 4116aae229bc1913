"""Forward rollout of the trigger-augmented replication graph and the
training loop.

The Y recursion shares the time grid and Brownian increments with the X
simulation; gradients flow through Y but not through X, and the trigger
indicators enter as constants (they depend on X only).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .barriers import BarrierSpec, InstrumentSpec, condition, terminal_payoff
from .nets import (MlpSpec, flatten, forward, forward_stacked, init_params,
                   layer_shapes, slice_stacked, stacked_init, unflatten)
from .optim import Adam
from .sde import MarketModel, PathBatch, TimeGrid, path_rng, sample_x0, fixed_x0, simulate_paths

__all__ = [
    "Generator",
    "risk_neutral_generator",
    "TrainConfig",
    "TrainReport",
    "ModelParams",
    "NumericFault",
    "init_model_params",
    "trigger_indicators",
    "rollout",
    "loss_value",
    "train",
    "price",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1

# labeled substreams of the master seed
_STREAM_INIT = 1
_STREAM_PATHS = 2
_STREAM_X0 = 3


class NumericFault(RuntimeError):
    """Non-finite value encountered during rollout or optimization."""

    def __init__(self, msg: str, step: int | None = None):
        super().__init__(msg if step is None else f"{msg} (time step {step})")
        self.step = step


@dataclass(frozen=True)
class Generator:
    """Driver f(t, x, y, z) of the backward equation.

    ``uses_z`` skips building the z = a^T pi node when the driver
    ignores it (the risk-neutral baseline does).
    """

    fn: callable
    uses_z: bool = False
    name: str = "custom"

    def __call__(self, t, x, y, z):
        return self.fn(t, x, y, z)


def risk_neutral_generator(rate: float) -> Generator:
    return Generator(fn=lambda t, x, y, z: y * (-rate), uses_z=False, name="risk-neutral")


@dataclass
class TrainConfig:
    steps: int = 200
    batch: int = 512
    mini_batches: int = 20000
    layers: int = 5
    units: int = 5
    activation: str = "tanh"
    lr: float = 1e-2
    lr_decay: float = 0.5
    lr_decay_every: int = 5000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 1
    x0_lo: float = 50.0
    x0_hi: float = 150.0
    x0_fixed: float | None = None
    report_stride: int = 100
    checkpoint_stride: int = 0
    checkpoint_path: str | None = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1 or self.mini_batches < 0:
            raise ValueError("steps and batch must be >= 1, mini_batches >= 0")
        if self.layers < 1 or self.units < 1:
            raise ValueError("layers and units must be >= 1")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1 or self.lr_decay_every < 1:
            raise ValueError("invalid learning-rate schedule")
        if self.report_stride < 1:
            raise ValueError("report_stride must be >= 1")
        if self.x0_fixed is None and not self.x0_lo < self.x0_hi:
            raise ValueError("need x0_lo < x0_hi")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    def lr_at(self, step: int) -> float:
        return self.lr * self.lr_decay ** (step // self.lr_decay_every)


@dataclass
class TrainReport:
    history: list[tuple[int, float, float]] = field(default_factory=list)
    final_loss: float = float("nan")
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)
    checkpoint_path: str | None = None

    def running_average(self, upto: int, window: int = 500) -> float:
        """Mean batch loss over history entries in (upto - window, upto]."""
        vals = [l for s, l, _ in self.history if upto - window < s <= upto]
        if not vals:
            raise ValueError("no history entries in requested window")
        return float(np.mean(vals))


@dataclass
class ModelParams:
    """All trainable state: the initial-value net and one hedge net per
    time step.  The hedge nets share no parameters; their weights are
    merely stored stacked along a leading step axis (see
    :func:`barrier_bsde.nets.stacked_init`)."""

    y0_spec: MlpSpec
    pi_spec: MlpSpec
    y0_layers: list
    pi_stacked: list
    adam: Adam | None = None
    step: int = 0

    @property
    def n_steps(self) -> int:
        return self.pi_stacked[0][0].shape[0]

    def pi_net(self, i: int):
        return slice_stacked(self.pi_stacked, i)

    def all_arrays(self) -> list[np.ndarray]:
        return flatten(self.y0_layers) + flatten(self.pi_stacked)


def init_model_params(cfg: TrainConfig, dim: int = 1) -> ModelParams:
    if cfg.x0_fixed is not None:
        center, scale = float(cfg.x0_fixed), max(1.0, 0.5 * float(cfg.x0_fixed))
    else:
        center = 0.5 * (cfg.x0_lo + cfg.x0_hi)
        scale = 0.5 * (cfg.x0_hi - cfg.x0_lo)
    y0_spec = MlpSpec(input_dim=dim, hidden_layers=cfg.layers, units=cfg.units,
                      output_dim=1, activation=cfg.activation,
                      input_center=center, input_scale=scale)
    pi_spec = MlpSpec(input_dim=dim, hidden_layers=cfg.layers, units=cfg.units,
                      output_dim=dim, activation=cfg.activation,
                      input_center=center, input_scale=scale)
    rng = path_rng(cfg.seed, _STREAM_INIT)
    y0_layers = init_params(y0_spec, rng)
    pi_stacked = stacked_init(pi_spec, cfg.steps, rng)
    params = ModelParams(y0_spec=y0_spec, pi_spec=pi_spec,
                         y0_layers=y0_layers, pi_stacked=pi_stacked)
    params.adam = Adam(params.all_arrays(), beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    return params


def trigger_indicators(spec: BarrierSpec, grid: TimeGrid, X: np.ndarray) -> np.ndarray:
    """XTrig_i for i = 0..N as a [b, N+1] float array of exact 0/1.

    The condition is scanned at interior grid times (and at t_0 / t_N
    only when the corresponding flags ask for it); the indicator is
    monotone along each path by construction.
    """
    b, n1, _ = X.shape
    n = n1 - 1
    cond = np.zeros((b, n1), dtype=bool)
    for i in range(n1):
        if i == 0 and not spec.monitor_at_t0:
            continue
        if i == n and not spec.active_at_maturity:
            continue
        cond[:, i] = condition(spec, grid.times[i], X[:, i])
    return np.maximum.accumulate(cond, axis=1).astype(np.float64)


@dataclass
class RolloutResult:
    YFP: object           # [b, 1]; Var when taped, ndarray otherwise
    tFP: np.ndarray       # [b]
    XFP: np.ndarray       # [b, d]
    breached: np.ndarray  # [b] bool
    trig: np.ndarray      # [b, N+1]
    Y_trace: list | None = None


def _wrap(tape: Tape, layers):
    return [(tape.param(w), tape.param(b)) for w, b in layers]


def rollout(params: ModelParams | None, batch: PathBatch, model: MarketModel, grid: TimeGrid,
            instr: InstrumentSpec, gen: Generator, tape: Tape | None = None,
            keep_trace: bool = False, pi_override=None, y0_override=None):
    """Roll Y forward along the batch and freeze it at barrier breach.

    Returns (RolloutResult, leaves) where ``leaves`` lists the parameter
    Vars in checkpoint order (empty when untaped).  ``pi_override``
    replaces the hedge networks with a callable (i, t_i, x_i) -> [b, d]
    and ``y0_override`` the initial-value network with per-path values;
    both are used by the hedging evaluation.  ``params`` may be None only
    when both overrides are supplied.
    """
    if params is None and (pi_override is None or y0_override is None):
        raise ValueError("params may be omitted only with pi and y0 overrides")
    if params is not None and batch.steps != params.n_steps:
        raise ValueError("batch generated on a different grid than the networks")
    if batch.steps != grid.steps:
        raise ValueError("batch generated on a different grid")
    X, dW = batch.X, batch.dW
    b, _, d = X.shape
    n = batch.steps
    dt = grid.dt
    spec = instr.barrier
    trig = trigger_indicators(spec, grid, X)
    dWc = dW @ model.chol.T

    if tape is not None:
        y0_layers = _wrap(tape, params.y0_layers)
        pi_stacked = _wrap(tape, params.pi_stacked)
        leaves = [v for pair in (y0_layers + pi_stacked) for v in pair]
    else:
        y0_layers = params.y0_layers if params is not None else None
        pi_stacked = params.pi_stacked if params is not None else None
        leaves = []

    x0 = X[:, 0, :]
    if y0_override is not None:
        Y = np.asarray(y0_override, dtype=np.float64).reshape(b, 1)
    else:
        Y = forward(y0_layers, x0, params.y0_spec)  # [b, 1]

    # pi_i depends on X_{t_i} only, so all hedge nets run up front as one
    # stacked forward; the sequential part below touches only Y.
    x_steps = np.ascontiguousarray(X[:, :n, :].transpose(1, 0, 2))   # [N, b, d]
    a_dw_all = model.vol * x_steps * dWc.transpose(1, 0, 2)          # [N, b, d]
    if pi_override is not None:
        pis = np.stack([
            np.asarray(pi_override(i, grid.times[i], x_steps[i]), dtype=np.float64)
            for i in range(n)
        ])
    else:
        pis = forward_stacked(pi_stacked, x_steps, params.pi_spec)   # [N, b, d]
    gains = ad.sum_along(pis * a_dw_all, axis=2, keepdims=True)      # [N, b, 1]
    gain_rows = ad.rows(gains, n)
    if gen.uses_z:
        z_rows = ad.rows(ad.matmul(pis * (model.vol * x_steps), model.chol), n)
    else:
        z_rows = None

    YFP = Y
    tFP = np.zeros(b)
    XFP = x0.copy()
    trace = [Y] if keep_trace else None

    for i in range(n):
        xi = X[:, i, :]
        z = z_rows[i] if z_rows is not None else None
        drive = gen(grid.times[i], xi, Y, z)
        Y = Y - drive * dt + gain_rows[i]
        yv = Y.value if isinstance(Y, ad.Var) else Y
        if not np.all(np.isfinite(yv)):
            raise NumericFault("non-finite Y in rollout", step=i + 1)
        m = trig[:, i:i + 1]  # XTrig_i gates the step-(i+1) copy
        YFP = ad.lerp(Y, YFP, m)
        live = m[:, 0] < 1.0
        tFP = np.where(live, grid.times[i + 1], tFP)
        XFP = np.where(live[:, None], X[:, i + 1, :], XFP)
        if keep_trace:
            trace.append(Y)

    breached = trig[:, n] >= 1.0
    return RolloutResult(YFP=YFP, tFP=tFP, XFP=XFP, breached=breached,
                         trig=trig, Y_trace=trace), leaves


def loss_value(YFP, payoff: np.ndarray):
    """Batch mean of squared replication error; Var when YFP is taped."""
    diff = YFP - np.asarray(payoff, dtype=np.float64).reshape(-1, 1)
    return ad.mean(diff * diff)


def _batch_payoff(instr: InstrumentSpec, model: MarketModel, res: RolloutResult) -> np.ndarray:
    return terminal_payoff(instr, res.tFP, res.XFP, res.breached, model.rate, model.vol)


def _make_batch(cfg: TrainConfig, model: MarketModel, grid: TimeGrid, step: int) -> PathBatch:
    dtype = np.float64 if cfg.dtype == "float64" else np.float32
    if cfg.x0_fixed is not None:
        x0 = fixed_x0(cfg.batch, [cfg.x0_fixed] * model.dim)
    else:
        x0 = sample_x0(cfg.batch, cfg.x0_lo, cfg.x0_hi, path_rng(cfg.seed, _STREAM_X0, step),
                       dim=model.dim)
    return simulate_paths(model, grid, x0, path_rng(cfg.seed, _STREAM_PATHS, step), dtype=dtype)


def train_step(params: ModelParams, cfg: TrainConfig, model: MarketModel, grid: TimeGrid,
               instr: InstrumentSpec, gen: Generator, batch: PathBatch) -> tuple[float, float]:
    """One mini-batch: forward, backward, Adam update.  Returns the batch
    loss and the batch standard deviation of the squared errors."""
    with Tape() as tape:
        res, leaves = rollout(params, batch, model, grid, instr, gen, tape=tape)
        payoff = _batch_payoff(instr, model, res)
        loss = loss_value(res.YFP, payoff)
        tape.backward(loss)
    grads = []
    for leaf in leaves:
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        if not np.all(np.isfinite(g)):
            raise NumericFault("non-finite gradient", step=params.step)
        grads.append(g)
    params.adam.step(grads, cfg.lr_at(params.step))
    params.step += 1
    sq = (np.asarray(res.YFP.value).reshape(-1) - payoff) ** 2
    return float(loss.value), float(sq.std())


def train(cfg: TrainConfig, model: MarketModel, instr: InstrumentSpec,
          gen: Generator | None = None,
          params: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
    """Run the full mini-batch loop with freshly simulated paths per step."""
    gen = gen or risk_neutral_generator(model.rate)
    grid = TimeGrid(instr.maturity, cfg.steps)
    if params is None:
        params = init_model_params(cfg, dim=model.dim)
    report = TrainReport(config=asdict(cfg))
    start = time.perf_counter()
    last = float("nan")
    for step in range(cfg.mini_batches):
        batch = _make_batch(cfg, model, grid, step)
        last, sq_std = train_step(params, cfg, model, grid, instr, gen, batch)
        if (step + 1) % cfg.report_stride == 0 or step == 0:
            report.history.append((step + 1, last, sq_std))
        if cfg.checkpoint_stride and cfg.checkpoint_path \
                and (step + 1) % cfg.checkpoint_stride == 0:
            save_checkpoint(cfg.checkpoint_path, params, cfg)
    report.final_loss = last
    report.wall_time = time.perf_counter() - start
    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, params, cfg)
        report.checkpoint_path = cfg.checkpoint_path
    return params, report


def price(params: ModelParams, x0) -> float | np.ndarray:
    """Learned time-0 value: the initial network evaluated at x0."""
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if x.ndim == 1:
        x = x[:, None] if params.y0_spec.input_dim == 1 else x[None, :]
    out = forward(params.y0_layers, x, params.y0_spec)[:, 0]
    return float(out[0]) if np.ndim(x0) == 0 else out


def hedge_ratio(params: ModelParams, i: int, x) -> np.ndarray:
    """pi_i network evaluated at levels x ([b, d] or [b])."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return forward(params.pi_net(i), x, params.pi_spec)


# -- checkpointing -----------------------------------------------------

def _spec_dict(spec: MlpSpec) -> dict:
    return asdict(spec)


def save_checkpoint(path: str, params: ModelParams, cfg: TrainConfig | None = None) -> None:
    """Versioned npz container: specs + config as JSON, weights and Adam
    moments as float64 arrays.  Round-trips bit-exactly."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "y0_spec": _spec_dict(params.y0_spec),
        "pi_spec": _spec_dict(params.pi_spec),
        "n_steps": params.n_steps,
        "step": params.step,
        "adam_t": params.adam.t if params.adam else 0,
        "config": asdict(cfg) if cfg else None,
    }
    arrays = {f"p{i}": a for i, a in enumerate(params.all_arrays())}
    if params.adam is not None:
        arrays.update({f"a{i}": a for i, a in enumerate(params.adam.state_arrays())})
    with open(path, "wb") as fh:  # file handle keeps savez from appending .npz
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> tuple[ModelParams, dict | None]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        y0_spec = MlpSpec(**meta["y0_spec"])
        pi_spec = MlpSpec(**meta["pi_spec"])
        n_param = sum(1 for k in data.files if k.startswith("p"))
        arrays = [data[f"p{i}"].copy() for i in range(n_param)]
        n_y0 = 2 * (y0_spec.hidden_layers + 1)
        y0_layers = unflatten(arrays[:n_y0], y0_spec)
        it = iter(arrays[n_y0:])
        pi_stacked = [(next(it), next(it)) for _ in layer_shapes(pi_spec)]
        params = ModelParams(y0_spec=y0_spec, pi_spec=pi_spec,
                             y0_layers=y0_layers, pi_stacked=pi_stacked,
                             step=meta["step"])
        params.adam = Adam(params.all_arrays())
        n_adam = sum(1 for k in data.files if k.startswith("a"))
        if n_adam:
            params.adam.load_state([data[f"a{i}"].copy() for i in range(n_adam)],
                                   meta["adam_t"])
    return params, meta.get("config")
