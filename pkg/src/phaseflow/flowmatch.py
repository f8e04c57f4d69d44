"""Conditional flow matching primitives.

A velocity field is trained to transport N(0, I) noise to the action
distribution along the linear interpolant x_sigma = (1-sigma)*x0 + sigma*a,
with regression target u = a - x0. Sampling integrates the learned field
with explicit Euler over sigma in [0, 1]. All vectors here live in
normalized action units; normalization is the policy module's business.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError
from .numcore.rng import Rng


@dataclass(frozen=True)
class OdeConfig:
    """Euler integration settings; the scheme is fixed, only steps vary."""

    num_steps: int = 10
    scheme: str = "euler"

    def __post_init__(self) -> None:
        if self.num_steps < 1:
            raise ContractError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.scheme != "euler":
            raise ContractError(f"unsupported ODE scheme '{self.scheme}'")


def interpolate(x0: np.ndarray, a: np.ndarray, sigma: float) -> np.ndarray:
    """Flow state (1-sigma)*x0 + sigma*a for sigma in [0, 1]."""
    x0 = np.asarray(x0, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if x0.shape != a.shape:
        raise DimensionError(f"x0 {x0.shape} and a {a.shape} differ in shape")
    if not 0.0 <= sigma <= 1.0:
        raise ContractError(f"flow time sigma={sigma} outside [0, 1]")
    return (1.0 - sigma) * x0 + sigma * a


def target_velocity(x0: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Regression target a - x0, constant along the linear interpolant."""
    x0 = np.asarray(x0, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if x0.shape != a.shape:
        raise DimensionError(f"x0 {x0.shape} and a {a.shape} differ in shape")
    return a - x0


def integrate(
    field: Callable[[float, np.ndarray], np.ndarray], x0: np.ndarray, cfg: OdeConfig
) -> np.ndarray:
    """Explicit Euler from sigma=0 to sigma=1 with uniform step 1/num_steps."""
    x = np.asarray(x0, dtype=np.float64).copy()
    h = 1.0 / cfg.num_steps
    for k in range(cfg.num_steps):
        v = np.asarray(field(k * h, x), dtype=np.float64)
        if v.shape != x.shape:
            raise DimensionError(f"field returned shape {v.shape}, state is {x.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite velocity at integration step {k}")
        x = x + h * v
    return x


@dataclass
class CfmBatch:
    """One training batch; row i of each array belongs to sample i."""

    sigma: np.ndarray  # (B,)
    x0: np.ndarray  # (B, n)
    x_sigma: np.ndarray  # (B, n)
    u: np.ndarray  # (B, n)
    contexts: list


def cfm_sample_batch(dataset: Sequence[tuple[object, np.ndarray]], rng: Rng, batch_size: int) -> CfmBatch:
    """Draw (sigma, x0, x_sigma, u, context) rows for CFM regression.

    Draw order is fixed for replay: dataset indices, then sigma, then x0.
    sigma ~ Uniform[0,1), x0 ~ N(0,I).
    """
    if len(dataset) == 0:
        raise ContractError("cannot sample a batch from an empty dataset")
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    idx = rng.integers(0, len(dataset), batch_size)
    dim = np.asarray(dataset[0][1]).size
    sigma = rng.uniform(batch_size)
    x0 = rng.normal(batch_size * dim).reshape(batch_size, dim)
    actions = np.stack([np.asarray(dataset[i][1], dtype=np.float64).ravel() for i in idx])
    x_sigma = (1.0 - sigma)[:, None] * x0 + sigma[:, None] * actions
    u = actions - x0
    return CfmBatch(sigma=sigma, x0=x0, x_sigma=x_sigma, u=u, contexts=[dataset[i][0] for i in idx])
