"""Dense multilayer perceptrons with explicit forward/backward passes.

Architecture is fixed: tanh on hidden layers, linear output. Everything is
float64. Forward passes accept a single input vector ``(in,)`` or a batch of
column vectors ``(in, B)``; for batched input the backward pass returns
parameter gradients summed over the batch, which is the gradient of
``sum_b output_b . grad_output_b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError
from .rng import Rng


@dataclass
class MlpParams:
    """Weight/bias pairs; ``weights[i]`` has shape (out_i, in_i)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("an MLP needs at least one (weight, bias) layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DimensionError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionError(
                    f"layer {i}: input width {w.shape[1]} != layer {i - 1} output "
                    f"width {self.weights[i - 1].shape[0]}"
                )

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_vector(self, vec: np.ndarray) -> "MlpParams":
        if vec.size != self.n_params:
            raise DimensionError(f"expected {self.n_params} parameters, got {vec.size}")
        weights, biases, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[k : k + w.size].reshape(w.shape).copy())
            k += w.size
            biases.append(vec[k : k + b.size].copy())
            k += b.size
        return MlpParams(weights, biases)


def init_mlp(rng: Rng, sizes: Sequence[int]) -> MlpParams:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and biases.

    Draw order is layer by layer, weight entries row-major, then the bias,
    so a fixed seed reproduces parameters exactly.
    """
    if len(sizes) < 2:
        raise DimensionError("need at least input and output widths")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = (rng.uniform(fan_out * fan_in) * 2.0 - 1.0).reshape(fan_out, fan_in) * bound
        b = (rng.uniform(fan_out) * 2.0 - 1.0) * bound
        weights.append(w)
        biases.append(b)
    return MlpParams(weights, biases)


@dataclass
class ForwardTape:
    """Activation record binding a forward pass to its parameters."""

    params: MlpParams
    inputs: list[np.ndarray]  # input to each layer
    hidden_acts: list[np.ndarray]  # tanh outputs, one per hidden layer
    output: np.ndarray


def mlp_forward(params: MlpParams, x: np.ndarray) -> ForwardTape:
    """Evaluate the network; the returned tape carries ``output`` plus what
    the backward pass needs."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    n_layers = len(params.weights)
    inputs, hidden_acts = [], []
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if h.shape[0] != w.shape[1]:
            raise DimensionError(f"layer {i}: expected input width {w.shape[1]}, got {h.shape[0]}")
        inputs.append(h)
        z = w @ h + (b[:, None] if batched else b)
        if i < n_layers - 1:
            h = np.tanh(z)
            hidden_acts.append(h)
        else:
            h = z
    return ForwardTape(params=params, inputs=inputs, hidden_acts=hidden_acts, output=h)


def mlp_backward(
    params: MlpParams, tape: ForwardTape, grad_output: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Exact reverse-mode gradients of ``output . grad_output``.

    Returns (parameter gradients shaped like ``params``, gradient w.r.t. the
    input). ``tape`` must come from a forward pass over the same ``params``
    object.
    """
    if tape.params is not params:
        raise ContractError("tape does not belong to these parameters; rerun mlp_forward")
    g = np.asarray(grad_output, dtype=np.float64)
    batched = tape.inputs[0].ndim == 2
    if g.shape != ((params.biases[-1].shape[0], tape.inputs[0].shape[1]) if batched else params.biases[-1].shape):
        raise DimensionError(f"grad_output shape {g.shape} does not match network output")
    grad_w: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(params.biases)  # type: ignore[list-item]
    for i in range(len(params.weights) - 1, -1, -1):
        x_i = tape.inputs[i]
        if batched:
            grad_w[i] = g @ x_i.T
            grad_b[i] = g.sum(axis=1)
        else:
            grad_w[i] = np.outer(g, x_i)
            grad_b[i] = g.copy()
        g = params.weights[i].T @ g
        if i > 0:
            a = tape.hidden_acts[i - 1]
            g = g * (1.0 - a * a)
    return MlpParams(grad_w, grad_b), g


def finite_diff_grad(
    f: Callable[[MlpParams], float], params: MlpParams, eps: float = 1e-5
) -> MlpParams:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    Test oracle only; O(n_params) evaluations of ``f``.
    """
    base = params.to_vector()
    grad = np.zeros_like(base)
    for k in range(base.size):
        bumped = base.copy()
        bumped[k] = base[k] + eps
        hi = f(params.with_vector(bumped))
        bumped[k] = base[k] - eps
        lo = f(params.with_vector(bumped))
        grad[k] = (hi - lo) / (2.0 * eps)
    return params.zeros_like().with_vector(grad)
