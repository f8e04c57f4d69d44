"""Scripted expert demonstrations.

The controller is a closed-loop leg machine: transit legs take coarse
steps (MOVE_SPEED) toward the current target until inside the vicinity
radius; interaction legs creep the last stretch at fine resolution
(<= OPERATE_SPEED) and work the gripper through its engage/release
thresholds. Every emitted frame carries the leg's phase label, which is
what makes these demos usable as routing ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import GenerationError
from ..numcore import Rng
from ..phaselabel.schedule import Schedule
from ..phaselabel.segmenters import _pair_runs_into_subtasks, _runs
from ..policy.types import ContextFrame, PhaseLabel
from .env import GRIP_ENGAGE, EnvState, context_frame, env_step, initial_state
from .task import InteractionKind, TaskSpec

MOVE_SPEED = 0.08
OPERATE_SPEED = 0.01
# one gripper stroke crosses the engage threshold from parked with 3x headroom
# over per-channel execution noise, so most attempts count
GRIP_STEP = 0.03
_RELEASE_STEP = 0.05  # matches the environment's per-step grip clip
_APPROACH_STOP = 0.016  # stop creeping and work the gripper; inside the contact window
_APPROACH_MARGIN = 0.012  # never step past dist - margin, so we park, not orbit
_GRIP_PARKED = 0.005
_GRIP_HOLD_LEVEL = 0.15  # carry plateau: far above the release threshold, so an
# imitator's grip jitter (which mean-reverts to the plateau) cannot drop the load
_JITTER_MIN_DIST = 0.7  # jittered starts keep a long approach leg; the recording
# still sweeps every shorter range on its way in, so coverage is not lost

DEFAULT_MAX_DEMO_STEPS = 400
_MAX_DEMO_ATTEMPTS = 8


@dataclass(frozen=True)
class TrajFrame:
    context: ContextFrame
    action: np.ndarray  # (3,) commanded action: dx, dy, dgrip
    label: PhaseLabel


@dataclass(frozen=True)
class Trajectory:
    task: TaskSpec
    frames: tuple[TrajFrame, ...]

    def __post_init__(self) -> None:
        if not self.frames:
            raise GenerationError("a trajectory cannot be empty")

    @property
    def total_frames(self) -> int:
        return len(self.frames)


def _toward(state: EnvState, target: np.ndarray, magnitude: float) -> np.ndarray:
    delta = target - state.agent
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        return np.zeros(2)
    return delta * (magnitude / dist)


def _creep(state: EnvState, target: np.ndarray) -> np.ndarray:
    dist = float(np.linalg.norm(target - state.agent))
    return _toward(state, target, min(OPERATE_SPEED, max(dist - _APPROACH_MARGIN, 0.0)))


def _park_grip(state: EnvState) -> float:
    """Bleed the gripper back toward zero so drift can never pre-arm it."""
    return -min(GRIP_STEP, state.gripper)


def _hold_grip(state: EnvState) -> float:
    """Pin the gripper at the carry plateau so drift can never un-grasp."""
    return float(np.clip(_GRIP_HOLD_LEVEL - state.gripper, -GRIP_STEP, GRIP_STEP))


def _engage_grip(state: EnvState) -> float:
    """Work the gripper toward a fresh upward crossing of GRIP_ENGAGE.

    Engagement only triggers on the crossing itself, so if a noisy step
    crossed while the effector had drifted out of contact range, the
    gripper must come back below the threshold before another attempt.
    """
    if state.gripper >= GRIP_ENGAGE:
        return -GRIP_STEP
    return GRIP_STEP


class _Leg:
    label: PhaseLabel

    def finished(self, task: TaskSpec, state: EnvState) -> bool:
        raise NotImplementedError

    def action(self, task: TaskSpec, state: EnvState) -> np.ndarray:
        raise NotImplementedError


class _MoveLeg(_Leg):
    label = PhaseLabel.MOVE

    def __init__(self, target_of, carrying: bool = False):
        self._target_of = target_of
        self._carrying = carrying

    def finished(self, task: TaskSpec, state: EnvState) -> bool:
        target = self._target_of(task, state)
        return float(np.linalg.norm(target - state.agent)) <= task.vicinity_radius

    def action(self, task: TaskSpec, state: EnvState) -> np.ndarray:
        target = self._target_of(task, state)
        grip = _hold_grip(state) if self._carrying else _park_grip(state)
        return np.concatenate([_toward(state, target, MOVE_SPEED), [grip]])


class _PressLeg(_Leg):
    label = PhaseLabel.OPERATE

    def finished(self, task: TaskSpec, state: EnvState) -> bool:
        return state.interaction_done and state.gripper <= _GRIP_PARKED

    def action(self, task: TaskSpec, state: EnvState) -> np.ndarray:
        if state.interaction_done:
            return np.array([0.0, 0.0, -GRIP_STEP])
        dist = float(np.linalg.norm(task.object_pose - state.agent))
        if dist > _APPROACH_STOP:
            return np.concatenate([_creep(state, task.object_pose), [_park_grip(state)]])
        # keep correcting position while working the gripper: a crossing
        # only counts when it happens inside the contact window
        return np.concatenate([_creep(state, task.object_pose), [_engage_grip(state)]])


class _GraspLeg(_Leg):
    label = PhaseLabel.OPERATE

    def finished(self, task: TaskSpec, state: EnvState) -> bool:
        return state.grasped

    def action(self, task: TaskSpec, state: EnvState) -> np.ndarray:
        dist = float(np.linalg.norm(state.object_pos - state.agent))
        if dist > _APPROACH_STOP:
            return np.concatenate([_creep(state, state.object_pos), [_park_grip(state)]])
        return np.concatenate([_creep(state, state.object_pos), [_engage_grip(state)]])


class _ReleaseLeg(_Leg):
    label = PhaseLabel.OPERATE

    def finished(self, task: TaskSpec, state: EnvState) -> bool:
        return state.interaction_done and state.gripper <= _GRIP_PARKED

    def action(self, task: TaskSpec, state: EnvState) -> np.ndarray:
        if state.interaction_done:
            return np.array([0.0, 0.0, -_RELEASE_STEP])
        dist = float(np.linalg.norm(task.goal_pose - state.agent))
        if dist > _APPROACH_STOP:
            return np.concatenate([_creep(state, task.goal_pose), [_hold_grip(state)]])
        # drop at full grip speed while still correcting toward the goal:
        # every descent step is one more step of drift the placement has
        # to absorb, so center actively and keep the descent short
        return np.concatenate([_creep(state, task.goal_pose), [-_RELEASE_STEP]])


def _legs(task: TaskSpec) -> list[_Leg]:
    to_object = _MoveLeg(lambda t, s: s.object_pos)
    if task.interaction_kind is InteractionKind.PRESS:
        return [to_object, _PressLeg()]
    to_goal = _MoveLeg(lambda t, s: t.goal_pose, carrying=True)
    return [to_object, _GraspLeg(), to_goal, _ReleaseLeg()]


def _jittered_start(task: TaskSpec, rng: Rng) -> EnvState:
    """A perturbed initial state: the effector parked anywhere in the
    workspace (outside the object's vicinity) with an arbitrary grip level.

    Demos recorded from such states are what teach the policy to home in
    on the object from any bearing, instead of only along the corridor
    between the nominal start and object regions.
    """
    while True:
        agent = rng.uniform(2) * 2.0 - 1.0
        if float(np.linalg.norm(agent - task.object_pose)) >= _JITTER_MIN_DIST:
            break
    gripper = float(rng.uniform(1)[0]) * _GRIP_HOLD_LEVEL
    return replace(initial_state(task), agent=agent, gripper=gripper)


def scripted_demo(
    task: TaskSpec,
    rng: Rng | None = None,
    action_noise: float = 0.0,
    obs_noise: float = 0.0,
    start_jitter: float = 0.0,
    max_steps: int = DEFAULT_MAX_DEMO_STEPS,
) -> Trajectory:
    """Run the controller to completion, recording commanded actions.

    Action noise perturbs execution only: each frame stores the clean
    command for the current state, then the environment steps on command
    plus noise. The controller always reads the true state, so the next
    command corrects the perturbed step -- that is where the corpus gets
    its recovery behaviour from. ``start_jitter`` is the probability
    (drawn first) that the recording begins from a randomized pose rather
    than the task's nominal start.
    """
    if (action_noise > 0.0 or obs_noise > 0.0 or start_jitter > 0.0) and rng is None:
        raise ValueError("demo noise requires an rng")
    legs = _legs(task)
    for _attempt in range(_MAX_DEMO_ATTEMPTS):
        state = initial_state(task)
        if start_jitter > 0.0 and float(rng.uniform(1)[0]) < start_jitter:
            state = _jittered_start(task, rng)
        frames: list[TrajFrame] = []
        leg_index = 0
        while leg_index < len(legs):
            leg = legs[leg_index]
            if leg.finished(task, state):
                leg_index += 1
                continue
            if len(frames) >= max_steps:
                raise GenerationError(
                    f"demo for task seed {task.seed} exceeded {max_steps} steps "
                    f"in leg {leg_index} ({leg.label.json_name})"
                )
            context = context_frame(task, state, rng, obs_noise)
            action = leg.action(task, state)
            frames.append(TrajFrame(context=context, action=action.copy(), label=leg.label))
            executed = action
            if action_noise > 0.0:
                executed = action + action_noise * rng.normal(3)
            state = env_step(task, state, executed)
        if not frames:
            raise GenerationError(f"task seed {task.seed} produced an empty demo")
        if _demo_succeeded(task, state):
            return Trajectory(task=task, frames=tuple(frames))
        # a noisy drop can land the object just outside tolerance; discard
        # and re-record rather than teach the policy a near miss
    raise GenerationError(
        f"task seed {task.seed}: no successful demo in {_MAX_DEMO_ATTEMPTS} attempts"
    )


def _demo_succeeded(task: TaskSpec, state: EnvState) -> bool:
    if not state.interaction_done:
        return False
    if task.interaction_kind is InteractionKind.PRESS:
        return True
    return float(np.linalg.norm(state.object_pos - task.goal_pose)) <= task.success_tolerance


def trajectory_speeds(traj: Trajectory) -> np.ndarray:
    """Per-frame planar speed |dx, dy| of the commanded actions."""
    return np.array([float(np.linalg.norm(f.action[:2])) for f in traj.frames])


def ground_truth_schedule(traj: Trajectory) -> Schedule:
    """Schedule implied by the controller's own frame labels: label runs,
    with each Move run and its following Operate run paired as a subtask."""
    move_flags = np.array([f.label is PhaseLabel.MOVE for f in traj.frames])
    runs = _runs(move_flags)
    return Schedule(
        subtasks=_pair_runs_into_subtasks(runs), total_frames=traj.total_frames
    )


__all__ = [
    "DEFAULT_MAX_DEMO_STEPS",
    "MOVE_SPEED",
    "OPERATE_SPEED",
    "TrajFrame",
    "Trajectory",
    "scripted_demo",
    "trajectory_speeds",
    "ground_truth_schedule",
]
