"""Greedy-routed chunk synthesis by ODE integration.

One call selects one expert, and that choice stays fixed for every
integration step of the chunk: routing is per chunk, not per step.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..flowmatch import OdeConfig, integrate
from ..numcore import Rng, mlp_forward
from .model import (
    MonolithicModel,
    PolicyModel,
    encode_context,
    expert_input,
    greedy_select,
    pool_features,
    route,
)
from .types import ActionChunk, ContextFrame, PhaseLabel


class RoutingMode(Enum):
    """How the expert is chosen at evaluation time."""

    ORIGINAL = "original"  # router argmax
    RANDOM = "random"  # fair coin, ignoring the router
    REVERSAL = "reversal"  # opposite of the router argmax


def select_phase(router_choice: PhaseLabel, mode: RoutingMode, rng: Rng) -> PhaseLabel:
    """Apply an ablation override. RANDOM consumes one uniform draw; the
    other modes consume none."""
    if mode is RoutingMode.ORIGINAL:
        return router_choice
    if mode is RoutingMode.REVERSAL:
        return PhaseLabel.OPERATE if router_choice is PhaseLabel.MOVE else PhaseLabel.MOVE
    coin = float(rng.uniform(1)[0])
    return PhaseLabel.MOVE if coin < 0.5 else PhaseLabel.OPERATE


def infer_action(
    model: PolicyModel,
    frame: ContextFrame,
    rng: Rng,
    ode_cfg: OdeConfig,
    mode: RoutingMode = RoutingMode.ORIGINAL,
) -> tuple[ActionChunk, PhaseLabel]:
    """Encode, pool, route, then integrate the selected expert's field from
    x0 ~ N(0, I) and denormalize. Draw order: routing coin (RANDOM mode
    only), then x0."""
    cfg = model.config
    features = encode_context(model, frame)
    pooled = pool_features(features, frame.valid_token_mask)
    y = select_phase(greedy_select(route(model, pooled)), mode, rng)
    expert = model.expert_for(y)
    x0 = rng.normal(cfg.chunk_size)
    flat = integrate(
        lambda s, x: mlp_forward(expert, expert_input(s, x, pooled)).output, x0, ode_cfg
    )
    chunk = model.normalizer.denormalize(flat.reshape(cfg.horizon, cfg.action_dim))
    return ActionChunk(chunk), y


def infer_action_mono(
    model: MonolithicModel, frame: ContextFrame, rng: Rng, ode_cfg: OdeConfig
) -> ActionChunk:
    """Baseline inference: same flow, no routing decision."""
    cfg = model.config
    features = encode_context(model, frame)
    pooled = pool_features(features, frame.valid_token_mask)
    x0 = rng.normal(cfg.chunk_size)
    flat = integrate(
        lambda s, x: mlp_forward(model.expert, expert_input(s, x, pooled)).output, x0, ode_cfg
    )
    return ActionChunk(model.normalizer.denormalize(flat.reshape(cfg.horizon, cfg.action_dim)))
