"""Deterministic 2-D move-then-operate environment: task generation,
pure-function dynamics, a scripted demonstrator with ground-truth phase
labels, closed-loop rollouts, and the line-delimited dataset format."""

from .task import InteractionKind, TaskSpec, gen_task
from .env import (
    EnvState,
    GRIP_ENGAGE,
    GRIP_RELEASE,
    context_frame,
    env_step,
    initial_state,
    observation_features,
)
from .demo import Trajectory, TrajFrame, ground_truth_schedule, scripted_demo, trajectory_speeds
from .rollout import (
    RolloutOutcome,
    ScriptedPolicy,
    mono_policy,
    rollout,
    routed_policy,
    success,
)
from .dataset import DatasetView, build_train_samples, read_dataset, write_dataset

__all__ = [
    "InteractionKind",
    "TaskSpec",
    "gen_task",
    "EnvState",
    "GRIP_ENGAGE",
    "GRIP_RELEASE",
    "initial_state",
    "env_step",
    "observation_features",
    "context_frame",
    "Trajectory",
    "TrajFrame",
    "scripted_demo",
    "ground_truth_schedule",
    "trajectory_speeds",
    "RolloutOutcome",
    "rollout",
    "success",
    "ScriptedPolicy",
    "routed_policy",
    "mono_policy",
    "DatasetView",
    "write_dataset",
    "read_dataset",
    "build_train_samples",
]
