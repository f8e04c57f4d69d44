"""Masked regression loss for the experts and cross-entropy for the router."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, DimensionError
from .types import PhaseLabel

PROB_FLOOR = 1e-12  # probability clamp before the router log


@dataclass(frozen=True)
class TrainBatchMask:
    """Binary mask over a batch's stacked velocity entries.

    Rows past a trajectory's end are zero-padded in the targets and masked
    out here, so variable-length tails don't bias the loss.
    """

    m: np.ndarray  # (B, H*d) entries in {0, 1}
    eps: float = 1e-8

    def __post_init__(self) -> None:
        arr = np.asarray(self.m, dtype=np.float64)
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise ContractError("mask entries must be exactly 0 or 1")
        if self.eps <= 0:
            raise ContractError("mask eps must be positive")
        object.__setattr__(self, "m", arr)

    @classmethod
    def full(cls, batch: int, width: int, eps: float = 1e-8) -> "TrainBatchMask":
        return cls(m=np.ones((batch, width)), eps=eps)

    @property
    def denominator(self) -> float:
        return float(self.m.sum()) + self.eps


def action_loss(v_pred: np.ndarray, u: np.ndarray, mask: TrainBatchMask) -> float:
    """Masked squared error over the stacked batch, normalized by the
    masked entry count plus eps."""
    v_pred = np.asarray(v_pred, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if v_pred.shape != u.shape or v_pred.shape != mask.m.shape:
        raise DimensionError(
            f"shape mismatch: v_pred {v_pred.shape}, u {u.shape}, mask {mask.m.shape}"
        )
    return float(np.sum(mask.m * (v_pred - u) ** 2) / mask.denominator)


def router_loss(probabilities: np.ndarray, y: PhaseLabel) -> float:
    """Cross entropy -log p(y) with the probability floored at 1e-12."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape != (2,):
        raise DimensionError(f"expected 2 phase probabilities, got shape {p.shape}")
    return -float(np.log(max(float(p[int(y)]), PROB_FLOOR)))


def router_loss_batch(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross entropy over columns of a (2, B) probability matrix."""
    p = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or p.shape[0] != 2 or p.shape[1] != labels.shape[0]:
        raise DimensionError(f"probabilities {p.shape} do not match {labels.shape[0]} labels")
    picked = p[labels, np.arange(labels.shape[0])]
    return -float(np.mean(np.log(np.maximum(picked, PROB_FLOOR))))
