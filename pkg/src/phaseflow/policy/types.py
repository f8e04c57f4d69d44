"""Domain types shared by training, inference, and the environment."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ..errors import ContractError, DimensionError

STD_FLOOR = 1e-6


class PhaseLabel(IntEnum):
    """Two-valued phase domain: coarse relocation vs fine interaction."""

    MOVE = 0
    OPERATE = 1

    @property
    def json_name(self) -> str:
        return "move" if self is PhaseLabel.MOVE else "operate"

    @classmethod
    def from_json_name(cls, name: str) -> "PhaseLabel":
        key = name.strip().lower()
        if key == "move":
            return cls.MOVE
        if key == "operate":
            return cls.OPERATE
        raise ContractError(f"unknown phase type '{name}'")


@dataclass(frozen=True)
class ContextFrame:
    """Per-step conditioning: instruction, scene, and proprio token slots.

    The three slots feed the shared encoder; ``valid_token_mask`` marks
    which of them participate in pooling (all three, in this code base,
    unless a caller deliberately blanks one).
    """

    instruction_features: np.ndarray
    observation_features: np.ndarray
    proprio_state: np.ndarray
    valid_token_mask: np.ndarray = field(default_factory=lambda: np.ones(3, dtype=bool))

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "valid_token_mask", np.asarray(self.valid_token_mask, dtype=bool)
        )
        if self.valid_token_mask.shape != (3,):
            raise DimensionError("valid_token_mask must cover exactly 3 token slots")
        if not self.valid_token_mask.any():
            raise ContractError("a frame needs at least one valid token slot")
        for name in ("instruction_features", "observation_features", "proprio_state"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def slots(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.instruction_features, self.observation_features, self.proprio_state)


@dataclass(frozen=True)
class ActionChunk:
    """A horizon of future actions, one row per control step."""

    actions: np.ndarray  # (H, d), environment units unless stated otherwise

    def __post_init__(self) -> None:
        arr = np.asarray(self.actions, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"action chunk must be 2-D (H, d), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ContractError("action chunk contains non-finite entries")
        object.__setattr__(self, "actions", arr)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def dim(self) -> int:
        return self.actions.shape[1]


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension z-score stats fit on training actions.

    Binary gripper-like dimensions are treated the same as continuous ones.
    std is floored at 1e-6 so degenerate dimensions stay invertible.
    """

    mean: np.ndarray  # (d,)
    std: np.ndarray  # (d,)

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimensionError("normalizer mean/std must be matching 1-D vectors")
        if np.any(std < STD_FLOOR):
            raise ContractError(f"normalizer std below floor {STD_FLOOR}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, actions: np.ndarray) -> "Normalizer":
        arr = np.asarray(actions, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise DimensionError("fit expects a nonempty (N, d) action matrix")
        std = np.maximum(arr.std(axis=0), STD_FLOOR)
        return cls(mean=arr.mean(axis=0), std=std)

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def normalize(self, actions: np.ndarray) -> np.ndarray:
        arr = np.asarray(actions, dtype=np.float64)
        if arr.shape[-1] != self.mean.shape[0]:
            raise DimensionError(
                f"last axis {arr.shape[-1]} != normalizer dim {self.mean.shape[0]}"
            )
        return (arr - self.mean) / self.std

    def denormalize(self, actions: np.ndarray) -> np.ndarray:
        arr = np.asarray(actions, dtype=np.float64)
        if arr.shape[-1] != self.mean.shape[0]:
            raise DimensionError(
                f"last axis {arr.shape[-1]} != normalizer dim {self.mean.shape[0]}"
            )
        return arr * self.std + self.mean
