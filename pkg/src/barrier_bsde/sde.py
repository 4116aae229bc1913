"""Risk-neutral GBM dynamics and Euler-Maruyama path generation.

The forward state follows dX = r X dt + sigma X dW under the pricing
measure, discretized on a uniform grid with the raw (non-log) Euler
scheme.  Correlation across coordinates is applied through a
lower-triangular factor of the correlation matrix; the stored Brownian
increments are always the uncorrelated ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MarketModel",
    "TimeGrid",
    "PathBatch",
    "sample_x0",
    "fixed_x0",
    "simulate_paths",
    "export_paths_csv",
]


@dataclass(frozen=True)
class MarketModel:
    """Constant-coefficient risk-neutral GBM market.

    ``chol`` is the lower-triangular factor of the correlation matrix of
    the driving Brownian motions; identity for independent coordinates.
    """

    rate: float
    vol: float
    dim: int = 1
    chol: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.vol < 0:
            raise ValueError("vol must be >= 0")
        if self.chol is None:
            object.__setattr__(self, "chol", np.eye(self.dim))
        else:
            c = np.asarray(self.chol, dtype=float)
            if c.shape != (self.dim, self.dim):
                raise ValueError(f"chol must be {self.dim}x{self.dim}")
            if np.any(np.triu(c, 1) != 0.0):
                raise ValueError("chol must be lower triangular")
            diag = np.diag(c @ c.T)
            if not np.allclose(diag, 1.0, atol=1e-10):
                raise ValueError("chol @ chol.T must have unit diagonal")
            object.__setattr__(self, "chol", c)

    @classmethod
    def with_correlation(cls, rate: float, vol: float, corr: np.ndarray) -> "MarketModel":
        corr = np.asarray(corr, dtype=float)
        return cls(rate=rate, vol=vol, dim=corr.shape[0], chol=np.linalg.cholesky(corr))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i*T/N, i = 0..N, with t_N pinned to T exactly."""

    maturity: float
    steps: int
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.maturity <= 0:
            raise ValueError("maturity must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        object.__setattr__(self, "times", np.linspace(0.0, self.maturity, self.steps + 1))

    @property
    def dt(self) -> float:
        return self.maturity / self.steps


@dataclass
class PathBatch:
    """A batch of simulated trajectories.

    X has shape [b, N+1, d]; dW (uncorrelated increments) [b, N, d].
    """

    X: np.ndarray
    dW: np.ndarray
    seed: int | None = None

    @property
    def batch(self) -> int:
        return self.X.shape[0]

    @property
    def steps(self) -> int:
        return self.dW.shape[1]

    @property
    def dim(self) -> int:
        return self.X.shape[2]


def path_rng(seed, *stream) -> np.random.Generator:
    """Counter-style generator for a labeled substream of the master seed.

    Distinct ``stream`` labels give independent streams, so per-purpose
    (and per-worker) randomness is reproducible regardless of how the
    work is partitioned.
    """
    return np.random.Generator(np.random.Philox(key=np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(int(s) for s in stream)).generate_state(2, np.uint64)))


def sample_x0(b: int, lo: float, hi: float, rng: np.random.Generator, dim: int = 1) -> np.ndarray:
    """Uniform initial levels on [lo, hi], one per path and coordinate."""
    if b < 1:
        raise ValueError("batch size must be >= 1")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    return rng.uniform(lo, hi, size=(b, dim))


def fixed_x0(b: int, x0) -> np.ndarray:
    """Every path starts at the same level vector x0."""
    if b < 1:
        raise ValueError("batch size must be >= 1")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return np.tile(x0, (b, 1))


def simulate_paths(
    model: MarketModel,
    grid: TimeGrid,
    x0: np.ndarray,
    rng: np.random.Generator,
    dtype=np.float64,
) -> PathBatch:
    """Euler-Maruyama on X itself: X_{i+1} = X_i + r X_i dt + sigma X_i (chol dW_i).

    Negative levels from large steps are not clamped; they are legal
    states for the discrete scheme.
    """
    x0 = np.asarray(x0, dtype=dtype)
    if x0.ndim != 2 or x0.shape[1] != model.dim:
        raise ValueError(f"x0 must have shape [b, {model.dim}]")
    if np.any(x0 <= 0):
        raise ValueError("initial levels must be strictly positive")
    b, d = x0.shape
    n = grid.steps
    dt = grid.dt
    dW = rng.normal(0.0, np.sqrt(dt), size=(b, n, d)).astype(dtype, copy=False)
    dWc = dW @ model.chol.T.astype(dtype)
    X = np.empty((b, n + 1, d), dtype=dtype)
    X[:, 0] = x0
    for i in range(n):
        xi = X[:, i]
        X[:, i + 1] = xi + model.rate * xi * dt + model.vol * xi * dWc[:, i]
    return PathBatch(X=X, dW=dW)


def export_paths_csv(batch: PathBatch, path, coordinate: int = 0) -> None:
    """Write (path id, step, level) rows for the monitored coordinate."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "level"])
        for p in range(batch.batch):
            for i in range(batch.X.shape[1]):
                w.writerow([p, i, repr(batch.X[p, i, coordinate])])
