"""Task sampling for the 2-D workspace.

Start and target are drawn from opposite corner boxes of the unit
workspace, which guarantees a long relocation leg (>= 1.69) before any fine
interaction; that keeps Move frames the clear majority of every
demonstration without rejection sampling. PickPlace goals share the start
corner, giving the transport leg the same property.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import ContractError
from ..numcore import Rng

# corner boxes: (x_low, y_low); each box spans CORNER_SIZE in both axes
_CORNER_SIZE = 0.4
_CORNERS = ((-1.0, -1.0), (0.6, -1.0), (0.6, 0.6), (-1.0, 0.6))

DEFAULT_VICINITY_RADIUS = 0.15
DEFAULT_SUCCESS_TOLERANCE = 0.02


class InteractionKind(Enum):
    PRESS = "press"
    PICK_PLACE = "pick_place"


def instruction_code(kind: InteractionKind) -> np.ndarray:
    return np.array([1.0, 0.0]) if kind is InteractionKind.PRESS else np.array([0.0, 1.0])


def kind_from_instruction(code: np.ndarray) -> InteractionKind:
    return InteractionKind.PRESS if code[0] >= code[1] else InteractionKind.PICK_PLACE


@dataclass(frozen=True)
class TaskSpec:
    start_pose: np.ndarray  # (3,) x, y, gripper
    object_pose: np.ndarray  # (2,)
    goal_pose: np.ndarray  # (2,)
    vicinity_radius: float
    success_tolerance: float
    interaction_kind: InteractionKind
    task_code: np.ndarray  # instruction-feature vector
    seed: int

    def __post_init__(self) -> None:
        for name in ("start_pose", "object_pose", "goal_pose", "task_code"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.start_pose.shape != (3,):
            raise ContractError("start_pose must be (x, y, gripper)")
        if not (self.success_tolerance < self.vicinity_radius):
            raise ContractError(
                f"success_tolerance {self.success_tolerance} must be < "
                f"vicinity_radius {self.vicinity_radius}"
            )
        for name in ("object_pose", "goal_pose"):
            pose = getattr(self, name)
            if np.any(np.abs(pose) > 1.0):
                raise ContractError(f"{name} {pose} outside the unit workspace")
        if np.any(np.abs(self.start_pose[:2]) > 1.0):
            raise ContractError("start position outside the unit workspace")


def _point_in_corner(rng: Rng, corner: int) -> np.ndarray:
    x0, y0 = _CORNERS[corner]
    u = rng.uniform(2)
    return np.array([x0 + u[0] * _CORNER_SIZE, y0 + u[1] * _CORNER_SIZE])


def gen_task(
    rng: Rng,
    kind: InteractionKind | None = None,
    vicinity_radius: float = DEFAULT_VICINITY_RADIUS,
    success_tolerance: float = DEFAULT_SUCCESS_TOLERANCE,
) -> TaskSpec:
    """Sample one task. Draw order (always 8 uniforms + 1 integer): family
    coin, corner, start, object, goal, seed."""
    family_coin = float(rng.uniform(1)[0])
    if kind is None:
        kind = InteractionKind.PRESS if family_coin < 0.5 else InteractionKind.PICK_PLACE
    corner = min(int(rng.uniform(1)[0] * 4), 3)
    start_xy = _point_in_corner(rng, corner)
    object_xy = _point_in_corner(rng, (corner + 2) % 4)
    goal_xy = _point_in_corner(rng, corner)
    if kind is InteractionKind.PRESS:
        goal_xy = object_xy.copy()  # pressing happens at the object itself
    seed = int(rng.integers(0, 2**31 - 1, 1)[0])
    task = TaskSpec(
        start_pose=np.array([start_xy[0], start_xy[1], 0.0]),
        object_pose=object_xy,
        goal_pose=goal_xy,
        vicinity_radius=vicinity_radius,
        success_tolerance=success_tolerance,
        interaction_kind=kind,
        task_code=instruction_code(kind),
        seed=seed,
    )
    # opposite corner boxes put the object at least 3 vicinity radii away
    assert float(np.linalg.norm(task.object_pose - task.start_pose[:2])) >= 3 * vicinity_radius
    return task
