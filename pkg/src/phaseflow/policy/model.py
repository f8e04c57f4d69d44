"""Model construction and the per-frame forward operations.

The context encoder is a single MLP applied independently to each of the
L = 3 token slots (instruction, observation, proprio). Slot features are
zero-padded to a common width and tagged with a slot one-hot so the shared
weights can tell them apart. Pooled features condition both the router and
the experts; each expert maps (sigma, x_sigma, pooled) -> R^{H*d}.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ContractError, DimensionError
from ..numcore import MlpParams, Rng, init_mlp, mlp_forward
from .types import ContextFrame, Normalizer, PhaseLabel

N_SLOTS = 3


@dataclass(frozen=True)
class PolicyConfig:
    action_dim: int
    horizon: int
    instruction_dim: int
    observation_dim: int
    proprio_dim: int
    encoder_dim: int = 32
    encoder_hidden: tuple[int, ...] = (32,)
    router_hidden: tuple[int, ...] = (16,)
    expert_hidden: tuple[int, ...] = (64,)
    lambda_router: float = 1.0

    def __post_init__(self) -> None:
        for name in ("action_dim", "horizon", "instruction_dim", "observation_dim", "proprio_dim", "encoder_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.lambda_router < 0:
            raise ContractError("lambda_router must be >= 0")

    @property
    def slot_pad_width(self) -> int:
        return max(self.instruction_dim, self.observation_dim, self.proprio_dim)

    @property
    def encoder_in(self) -> int:
        return self.slot_pad_width + N_SLOTS

    @property
    def chunk_size(self) -> int:
        return self.horizon * self.action_dim

    @property
    def expert_in(self) -> int:
        return 1 + self.chunk_size + self.encoder_dim

    def encoder_sizes(self) -> list[int]:
        return [self.encoder_in, *self.encoder_hidden, self.encoder_dim]

    def router_sizes(self) -> list[int]:
        return [self.encoder_dim, *self.router_hidden, 2]

    def expert_sizes(self, width_factor: int = 1) -> list[int]:
        return [self.expert_in, *(w * width_factor for w in self.expert_hidden), self.chunk_size]


def _assert_disjoint(a: MlpParams, b: MlpParams) -> None:
    ids_a = {id(t) for t in (*a.weights, *a.biases)}
    ids_b = {id(t) for t in (*b.weights, *b.biases)}
    if ids_a & ids_b:
        raise ContractError("experts alias a parameter tensor; they must be disjoint stores")


@dataclass
class PolicyModel:
    """Dual-expert policy with a chunk-level router."""

    config: PolicyConfig
    encoder: MlpParams
    router: MlpParams
    expert_move: MlpParams
    expert_operate: MlpParams
    normalizer: Normalizer

    def __post_init__(self) -> None:
        _assert_disjoint(self.expert_move, self.expert_operate)

    def expert_for(self, y: PhaseLabel) -> MlpParams:
        return self.expert_move if y is PhaseLabel.MOVE else self.expert_operate

    def with_groups(self, **groups: MlpParams) -> "PolicyModel":
        return replace(self, **groups)

    @property
    def lambda_router(self) -> float:
        return self.config.lambda_router


@dataclass
class MonolithicModel:
    """Single-expert baseline: same encoder contract, no router, no phase
    conditioning; the expert is widened to match the dual model's total
    expert parameter count."""

    config: PolicyConfig
    encoder: MlpParams
    expert: MlpParams
    normalizer: Normalizer


def build_policy(cfg: PolicyConfig, rng: Rng, normalizer: Normalizer | None = None) -> PolicyModel:
    """Initialize a dual-expert model. Draw order: encoder, router,
    expert_move, expert_operate (replayable from the seed)."""
    norm = normalizer if normalizer is not None else Normalizer.identity(cfg.action_dim)
    return PolicyModel(
        config=cfg,
        encoder=init_mlp(rng, cfg.encoder_sizes()),
        router=init_mlp(rng, cfg.router_sizes()),
        expert_move=init_mlp(rng, cfg.expert_sizes()),
        expert_operate=init_mlp(rng, cfg.expert_sizes()),
        normalizer=norm,
    )


def build_monolithic(cfg: PolicyConfig, rng: Rng, normalizer: Normalizer | None = None) -> MonolithicModel:
    """Initialize the baseline with hidden widths doubled, which matches the
    two experts' combined parameter count to within the output-bias margin."""
    norm = normalizer if normalizer is not None else Normalizer.identity(cfg.action_dim)
    return MonolithicModel(
        config=cfg,
        encoder=init_mlp(rng, cfg.encoder_sizes()),
        expert=init_mlp(rng, cfg.expert_sizes(width_factor=2)),
        normalizer=norm,
    )


def slot_input_matrix(cfg: PolicyConfig, frames: list[ContextFrame]) -> np.ndarray:
    """Stack encoder input columns for a batch; column 3*b + l is slot l of
    frame b: [zero-padded slot features | slot one-hot]."""
    width = cfg.slot_pad_width
    expected = (cfg.instruction_dim, cfg.observation_dim, cfg.proprio_dim)
    cols = np.zeros((cfg.encoder_in, N_SLOTS * len(frames)))
    for b, frame in enumerate(frames):
        for l, slot in enumerate(frame.slots):
            if slot.shape != (expected[l],):
                raise DimensionError(
                    f"frame {b} slot {l}: expected length {expected[l]}, got {slot.shape}"
                )
            j = N_SLOTS * b + l
            cols[: slot.size, j] = slot
            cols[width + l, j] = 1.0
    return cols


def encode_context(model: PolicyModel | MonolithicModel, frame: ContextFrame) -> np.ndarray:
    """Per-slot encoder features, one row per token slot: (L, D)."""
    cols = slot_input_matrix(model.config, [frame])
    return mlp_forward(model.encoder, cols).output.T


def pool_features(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mean of the masked-in rows of the (L, D) feature matrix."""
    mask = np.asarray(mask, dtype=bool)
    if features.shape[0] != mask.shape[0]:
        raise DimensionError(f"{features.shape[0]} feature rows vs mask length {mask.shape[0]}")
    if not mask.any():
        raise ContractError("pooling needs at least one masked-in token slot")
    return features[mask].mean(axis=0)


def softmax_columns(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along axis 0."""
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def route(model: PolicyModel, pooled: np.ndarray) -> np.ndarray:
    """Phase probabilities [p(Move), p(Operate)] for one pooled feature."""
    logits = mlp_forward(model.router, np.asarray(pooled, dtype=np.float64)).output
    return softmax_columns(logits)


def greedy_select(probabilities: np.ndarray) -> PhaseLabel:
    """Argmax decoding; an exact tie goes to Move."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape != (2,):
        raise DimensionError(f"expected 2 phase probabilities, got shape {p.shape}")
    return PhaseLabel.MOVE if p[0] >= p[1] else PhaseLabel.OPERATE


def expert_input(sigma: float, x_sigma: np.ndarray, pooled: np.ndarray) -> np.ndarray:
    return np.concatenate(([sigma], np.asarray(x_sigma, dtype=np.float64).ravel(), pooled))


def masked_velocity(
    model: PolicyModel, y: PhaseLabel, sigma: float, x_sigma: np.ndarray, pooled: np.ndarray
) -> np.ndarray:
    """Velocity of the matched expert only; the other expert is never
    evaluated, so its gradient contribution is structurally zero."""
    return mlp_forward(model.expert_for(y), expert_input(sigma, x_sigma, pooled)).output
