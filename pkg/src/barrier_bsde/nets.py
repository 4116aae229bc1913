"""Small fully-connected networks for the initial-value and hedge maps.

A network is a list of (W, b) numpy arrays.  The forward pass is written
against the autodiff helpers so the same code runs taped (training) and
untaped (pricing / hedging evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Var, matmul, relu, tanh

__all__ = ["MlpSpec", "init_params", "stacked_init", "forward", "forward_stacked",
           "layer_shapes", "flatten", "unflatten", "slice_stacked"]


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one network.

    ``input_center``/``input_scale`` define an affine rescaling of the
    raw level inputs ((x - center) / scale) so that levels of order 100
    land in the responsive range of the activation.
    """

    input_dim: int
    hidden_layers: int
    units: int
    output_dim: int
    activation: str = "tanh"
    input_center: float = 0.0
    input_scale: float = 1.0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.units < 1:
            raise ValueError("need at least one hidden layer and one unit")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input/output dims must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be > 0")


def layer_shapes(spec: MlpSpec) -> list[tuple[int, int]]:
    dims = [spec.input_dim] + [spec.units] * spec.hidden_layers + [spec.output_dim]
    return list(zip(dims[:-1], dims[1:]))


def init_params(spec: MlpSpec, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fan-in scaled normal weights (std = 1/sqrt(fan_in)), zero biases."""
    layers = []
    for fan_in, fan_out in layer_shapes(spec):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return layers


def forward(layers, x, spec: MlpSpec):
    """Affine + activation composition; final layer is affine only.

    ``layers`` entries may be (Var, Var) during training or plain arrays
    for inference; ``x`` is [b, input_dim].
    """
    act = tanh if spec.activation == "tanh" else relu
    h = (np.asarray(x, dtype=np.float64) - spec.input_center) / spec.input_scale
    last = len(layers) - 1
    for k, (w, b) in enumerate(layers):
        h = matmul(h, w) + b
        if k != last:
            h = act(h)
    return h


def stacked_init(spec: MlpSpec, count: int,
                 rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Weights for ``count`` independent networks of the same shape,
    stored stacked along axis 0 ([count, fan_in, fan_out] per layer) so
    the forward pass over all of them is one batched matmul per layer.
    No parameters are shared between the stacked networks."""
    layers = []
    for fan_in, fan_out in layer_shapes(spec):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(count, fan_in, fan_out))
        layers.append((w, np.zeros((count, 1, fan_out))))
    return layers


def forward_stacked(layers, x, spec: MlpSpec):
    """Forward all stacked networks at once; x is [count, b, input_dim]
    (network i sees slice i)."""
    act = tanh if spec.activation == "tanh" else relu
    h = (np.asarray(x, dtype=np.float64) - spec.input_center) / spec.input_scale
    last = len(layers) - 1
    for k, (w, b) in enumerate(layers):
        h = matmul(h, w) + b
        if k != last:
            h = act(h)
    return h


def slice_stacked(layers, i: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Plain (W, b) view of network i from a stacked parameter set."""
    return [(w[i], b[i, 0]) for w, b in layers]


def flatten(layers) -> list[np.ndarray]:
    out = []
    for w, b in layers:
        out.extend((w, b))
    return out


def unflatten(arrays, spec: MlpSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    it = iter(arrays)
    return [(next(it), next(it)) for _ in layer_shapes(spec)]
