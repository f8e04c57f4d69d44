"""Pure environment dynamics.

State is a value; ``env_step`` is a pure function of (task, state, action),
so identical seeds reproduce rollouts bit-for-bit. The gripper scalar g in
[0, 1] drives interactions with hysteresis: crossing up through GRIP_ENGAGE
while within the task's contact tolerance triggers a press (Press tasks) or
a grasp (PickPlace); crossing down through GRIP_RELEASE drops a held object
and completes the place. A grasped object tracks the effector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Rng
from ..policy.types import ContextFrame
from .task import InteractionKind, TaskSpec

GRIP_ENGAGE = 0.02
GRIP_RELEASE = 0.012
MAX_XY_STEP = 0.12
MAX_GRIP_STEP = 0.05

OBSERVATION_DIM = 14
PROPRIO_DIM = 3
INSTRUCTION_DIM = 2
ACTION_DIM = 3


@dataclass(frozen=True)
class EnvState:
    agent: np.ndarray  # (2,)
    gripper: float
    object_pos: np.ndarray  # (2,)
    grasped: bool
    interaction_done: bool
    t: int


def initial_state(task: TaskSpec) -> EnvState:
    return EnvState(
        agent=task.start_pose[:2].copy(),
        gripper=float(task.start_pose[2]),
        object_pos=task.object_pose.copy(),
        grasped=False,
        interaction_done=False,
        t=0,
    )


def env_step(task: TaskSpec, state: EnvState, action: np.ndarray) -> EnvState:
    action = np.asarray(action, dtype=np.float64)
    dxy = action[:2]
    speed = float(np.linalg.norm(dxy))
    if speed > MAX_XY_STEP:
        dxy = dxy * (MAX_XY_STEP / speed)
    dg = float(np.clip(action[2], -MAX_GRIP_STEP, MAX_GRIP_STEP))

    agent = np.clip(state.agent + dxy, -1.0, 1.0)
    gripper = float(np.clip(state.gripper + dg, 0.0, 1.0))
    engaged = state.gripper < GRIP_ENGAGE <= gripper
    released = gripper < GRIP_RELEASE <= state.gripper

    object_pos = state.object_pos
    grasped = state.grasped
    done = state.interaction_done
    near_object = float(np.linalg.norm(agent - state.object_pos)) <= task.success_tolerance

    if task.interaction_kind is InteractionKind.PRESS:
        if engaged and near_object:
            done = True
    else:
        if engaged and near_object and not grasped and not done:
            grasped = True
        if grasped:
            object_pos = agent.copy()
        if released and state.grasped:
            grasped = False
            done = True

    return EnvState(
        agent=agent,
        gripper=gripper,
        object_pos=object_pos,
        grasped=grasped,
        interaction_done=done,
        t=state.t + 1,
    )


def _unit(delta: np.ndarray) -> np.ndarray:
    dist = float(np.linalg.norm(delta))
    if dist < 1e-12:
        return np.zeros(2)
    return delta / dist


_LOG_DIST_FLOOR = 0.005


def observation_features(
    task: TaskSpec, state: EnvState, rng: Rng | None = None, obs_noise: float = 0.0
) -> np.ndarray:
    """[object dx, dy, goal dx, dy, object bearing ux, uy, goal bearing ux,
    uy, object distance, goal distance, log object distance, log goal
    distance, grasped, interaction-done].

    Bearings (unit offsets) are redundant with the raw offsets but give
    approach direction at a magnitude-independent scale; near the target
    the raw offsets shrink toward zero while the bearing stays O(1). The
    log distances spread the contact-scale range (millimetres, in robot
    terms) over O(1) feature span, which plain distances squash into a
    sliver. Noise perturbs the two offset vectors, and every derived
    feature comes from the perturbed offsets, so a noisy observation is
    still a geometrically consistent one.
    """
    obj_delta = state.object_pos - state.agent
    goal_delta = task.goal_pose - state.agent
    if obs_noise > 0.0:
        if rng is None:
            raise ValueError("obs_noise > 0 requires an rng")
        noise = obs_noise * rng.normal(4)
        obj_delta = obj_delta + noise[:2]
        goal_delta = goal_delta + noise[2:]
    d_obj = float(np.linalg.norm(obj_delta))
    d_goal = float(np.linalg.norm(goal_delta))
    return np.concatenate(
        [
            obj_delta,
            goal_delta,
            _unit(obj_delta),
            _unit(goal_delta),
            [d_obj, d_goal],
            [np.log(d_obj + _LOG_DIST_FLOOR), np.log(d_goal + _LOG_DIST_FLOOR)],
            [1.0 if state.grasped else 0.0, 1.0 if state.interaction_done else 0.0],
        ]
    )


def context_frame(
    task: TaskSpec, state: EnvState, rng: Rng | None = None, obs_noise: float = 0.0
) -> ContextFrame:
    return ContextFrame(
        instruction_features=task.task_code.copy(),
        observation_features=observation_features(task, state, rng, obs_noise),
        proprio_state=np.array([state.agent[0], state.agent[1], state.gripper]),
    )
