"""Phase-routed dual-expert policy: context encoder, chunk-level router,
two disjoint flow-matching experts, the joint training objective, and
greedy-routed inference."""

from .types import ActionChunk, ContextFrame, Normalizer, PhaseLabel
from .model import (
    MonolithicModel,
    PolicyConfig,
    PolicyModel,
    build_monolithic,
    build_policy,
    encode_context,
    greedy_select,
    masked_velocity,
    pool_features,
    route,
)
from .losses import TrainBatchMask, action_loss, router_loss, router_loss_batch
from .training import (
    LossReport,
    OptState,
    PreparedBatch,
    compute_losses,
    compute_losses_and_grads,
    prepare_batch,
    train_step,
)
from .inference import RoutingMode, infer_action
from .checkpoint import load_policy, save_policy

__all__ = [
    "ActionChunk",
    "ContextFrame",
    "Normalizer",
    "PhaseLabel",
    "PolicyConfig",
    "PolicyModel",
    "MonolithicModel",
    "build_policy",
    "build_monolithic",
    "encode_context",
    "pool_features",
    "route",
    "greedy_select",
    "masked_velocity",
    "TrainBatchMask",
    "action_loss",
    "router_loss",
    "router_loss_batch",
    "LossReport",
    "OptState",
    "PreparedBatch",
    "prepare_batch",
    "compute_losses",
    "compute_losses_and_grads",
    "train_step",
    "RoutingMode",
    "infer_action",
    "save_policy",
    "load_policy",
]
