"""Closed-loop policy evaluation.

A rollout repeatedly builds a context frame from the live state, asks the
policy for an action chunk plus a routing decision, executes the first
``exec_horizon`` rows (receding horizon), and stops as soon as the
interaction fires or the step cap runs out. Success is a closed-ball test
on the interaction-relevant pose: the effector for Press, the object for
PickPlace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..flowmatch import OdeConfig
from ..numcore import Rng
from ..policy.inference import RoutingMode, infer_action, infer_action_mono
from ..policy.model import MonolithicModel, PolicyModel
from ..policy.types import ContextFrame, PhaseLabel
from .demo import _legs
from .env import EnvState, context_frame, env_step, initial_state
from .task import InteractionKind, TaskSpec, kind_from_instruction

DEFAULT_MAX_ROLLOUT_STEPS = 400
DEFAULT_EXEC_HORIZON = 4


class ChunkPolicy(Protocol):
    def __call__(self, frame: ContextFrame, rng: Rng) -> tuple[np.ndarray, PhaseLabel]: ...


@dataclass(frozen=True)
class RolloutOutcome:
    final_pose: np.ndarray  # interaction-relevant pose: effector (Press) / object (PickPlace)
    interaction_achieved: bool
    steps_used: int
    routing_decisions: tuple[PhaseLabel, ...]  # one per executed env step

    def __post_init__(self) -> None:
        object.__setattr__(self, "final_pose", np.asarray(self.final_pose, dtype=np.float64))


def routed_policy(
    model: PolicyModel,
    mode: RoutingMode = RoutingMode.ORIGINAL,
    ode_cfg: OdeConfig | None = None,
) -> ChunkPolicy:
    cfg = ode_cfg if ode_cfg is not None else OdeConfig()

    def policy(frame: ContextFrame, rng: Rng) -> tuple[np.ndarray, PhaseLabel]:
        chunk, label = infer_action(model, frame, rng, cfg, mode=mode)
        return chunk.actions, label

    return policy


def mono_policy(model: MonolithicModel, ode_cfg: OdeConfig | None = None) -> ChunkPolicy:
    cfg = ode_cfg if ode_cfg is not None else OdeConfig()

    def policy(frame: ContextFrame, rng: Rng) -> tuple[np.ndarray, PhaseLabel]:
        chunk = infer_action_mono(model, frame, rng, cfg)
        # a monolithic model has no router; report the majority phase so
        # outcome records stay uniform
        return chunk.actions, PhaseLabel.MOVE

    return policy


@dataclass(frozen=True)
class ScriptedPolicy:
    """The demonstrator repackaged as a chunk policy (evaluation oracle).

    It rebuilds the environment state from one context frame — possible
    because observations carry object/goal offsets and the grasp/done bits —
    then plays the controller forward ``horizon`` steps.
    """

    horizon: int = 8

    def __call__(self, frame: ContextFrame, rng: Rng) -> tuple[np.ndarray, PhaseLabel]:
        task, state = _reconstruct(frame)
        legs = _legs(task)
        actions = np.zeros((self.horizon, 3))
        label: PhaseLabel | None = None
        leg_index = 0
        for row in range(self.horizon):
            while leg_index < len(legs) and legs[leg_index].finished(task, state):
                leg_index += 1
            if leg_index >= len(legs):
                break  # nothing left to do; remaining rows stay zero
            leg = legs[leg_index]
            if label is None:
                label = leg.label
            action = leg.action(task, state)
            actions[row] = action
            state = env_step(task, state, action)
        return actions, label if label is not None else PhaseLabel.OPERATE


def _reconstruct(frame: ContextFrame) -> tuple[TaskSpec, EnvState]:
    agent = frame.proprio_state[:2].copy()
    gripper = float(frame.proprio_state[2])
    obs = frame.observation_features
    object_pos = agent + obs[0:2]
    goal_pos = agent + obs[2:4]
    grasped = bool(obs[12] > 0.5)
    done = bool(obs[13] > 0.5)
    kind = kind_from_instruction(frame.instruction_features)
    task = TaskSpec(
        start_pose=np.array([agent[0], agent[1], gripper]),
        object_pose=object_pos,
        goal_pose=goal_pos if kind is InteractionKind.PICK_PLACE else object_pos.copy(),
        vicinity_radius=0.15,
        success_tolerance=0.02,
        interaction_kind=kind,
        task_code=frame.instruction_features.copy(),
        seed=0,
    )
    state = EnvState(
        agent=agent,
        gripper=gripper,
        object_pos=object_pos,
        grasped=grasped,
        interaction_done=done,
        t=0,
    )
    return task, state


def rollout(
    model: PolicyModel | MonolithicModel | ChunkPolicy,
    task: TaskSpec,
    rng: Rng,
    max_steps: int = DEFAULT_MAX_ROLLOUT_STEPS,
    mode: RoutingMode = RoutingMode.ORIGINAL,
    exec_horizon: int = DEFAULT_EXEC_HORIZON,
    obs_noise: float = 0.0,
    ode_cfg: OdeConfig | None = None,
) -> RolloutOutcome:
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if isinstance(model, PolicyModel):
        policy: ChunkPolicy = routed_policy(model, mode, ode_cfg)
    elif isinstance(model, MonolithicModel):
        policy = mono_policy(model, ode_cfg)
    else:
        policy = model

    state = initial_state(task)
    decisions: list[PhaseLabel] = []
    while state.t < max_steps and not state.interaction_done:
        frame = context_frame(task, state, rng, obs_noise)
        chunk, label = policy(frame, rng)
        chunk = np.asarray(chunk, dtype=np.float64)
        for row in chunk[:exec_horizon]:
            state = env_step(task, state, row)
            decisions.append(label)
            if state.interaction_done or state.t >= max_steps:
                break

    final_pose = (
        state.agent.copy()
        if task.interaction_kind is InteractionKind.PRESS
        else state.object_pos.copy()
    )
    return RolloutOutcome(
        final_pose=final_pose,
        interaction_achieved=state.interaction_done,
        steps_used=state.t,
        routing_decisions=tuple(decisions),
    )


def success(outcome: RolloutOutcome, task: TaskSpec) -> bool:
    """Interaction fired and the relevant pose sits inside the closed
    tolerance ball (boundary counts as success)."""
    target = (
        task.object_pose
        if task.interaction_kind is InteractionKind.PRESS
        else task.goal_pose
    )
    dist = float(np.linalg.norm(outcome.final_pose - target))
    return bool(outcome.interaction_achieved and dist <= task.success_tolerance)


__all__ = [
    "DEFAULT_EXEC_HORIZON",
    "DEFAULT_MAX_ROLLOUT_STEPS",
    "ChunkPolicy",
    "RolloutOutcome",
    "ScriptedPolicy",
    "mono_policy",
    "rollout",
    "routed_policy",
    "success",
]
