"""Segmenter backends: programs standing in for the upstream model that
proposes schedules. Each backend is stateless across rounds; the refinement
loop passes the prior schedule, its validation errors, and the round index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from ..errors import ContractError, IoError, ScheduleFormatError
from ..policy.types import PhaseLabel
from .schedule import Phase, Schedule, Subtask, parse_schedule_json
from .validate import ErrorCode, ValidationError


class SegmenterBackend(Protocol):
    def propose(
        self,
        speeds: np.ndarray,
        prior: Schedule | None,
        prior_errors: list[ValidationError],
        round_index: int,
    ) -> Schedule: ...


def _runs(flags: np.ndarray) -> list[tuple[bool, int, int]]:
    """Run-length encode a boolean vector into (value, start, end) triples."""
    out = []
    start = 0
    for i in range(1, flags.size + 1):
        if i == flags.size or flags[i] != flags[start]:
            out.append((bool(flags[start]), start, i - 1))
            start = i
    return out


def _merge_short_runs(runs: list[tuple[bool, int, int]], window: int) -> list[tuple[bool, int, int]]:
    """Absorb runs shorter than the hysteresis window into a neighbor
    (previous when one exists, else next), then re-coalesce."""
    runs = list(runs)
    while len(runs) > 1:
        short = next((i for i, (_, s, e) in enumerate(runs) if e - s + 1 < window), None)
        if short is None:
            break
        value, s, e = runs[short]
        if short > 0:
            pv, ps, _ = runs[short - 1]
            runs[short - 1 : short + 1] = [(pv, ps, e)]
        else:
            nv, _, ne = runs[1]
            runs[0:2] = [(nv, s, ne)]
        # coalesce equal-valued neighbors created by the merge
        i = 0
        while i + 1 < len(runs):
            if runs[i][0] == runs[i + 1][0]:
                runs[i : i + 2] = [(runs[i][0], runs[i][1], runs[i + 1][2])]
            else:
                i += 1
    return runs


def _pair_runs_into_subtasks(runs: Sequence[tuple[bool, int, int]]) -> tuple[Subtask, ...]:
    """Greedy pairing: a Move run followed by an Operate run forms one
    two-phase subtask; anything else stands alone."""

    def phase(run: tuple[bool, int, int]) -> Phase:
        is_move, s, e = run
        return Phase(PhaseLabel.MOVE if is_move else PhaseLabel.OPERATE, s, e)

    subtasks = []
    i = 0
    while i < len(runs):
        if runs[i][0] and i + 1 < len(runs) and not runs[i + 1][0]:
            phases = (phase(runs[i]), phase(runs[i + 1]))
            i += 2
        else:
            phases = (phase(runs[i]),)
            i += 1
        subtasks.append(
            Subtask(index=len(subtasks) + 1, phases=phases, description="auto-segmented")
        )
    return tuple(subtasks)


@dataclass(frozen=True)
class VelocityHeuristic:
    """Threshold on median-smoothed per-step speeds.

    The median filter (centered, edge-clamped) denoises without blurring
    the sharp speed drop at a phase boundary, so a clean step profile maps
    to exact run boundaries. If feedback says the whole trajectory came out
    Operate, the threshold is halved once per round until Move frames appear.
    """

    speed_threshold: float = 0.04
    window: int = 3

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ContractError("hysteresis window must be >= 1")
        if self.speed_threshold <= 0:
            raise ContractError("speed threshold must be positive")

    def propose(
        self,
        speeds: np.ndarray,
        prior: Schedule | None,
        prior_errors: list[ValidationError],
        round_index: int,
    ) -> Schedule:
        speeds = np.asarray(speeds, dtype=np.float64)
        if speeds.ndim != 1 or speeds.size == 0:
            raise ContractError("need a nonempty 1-D speed sequence")
        threshold = self.speed_threshold
        if any(err.code is ErrorCode.NO_MOVE_PHASE for err in prior_errors):
            threshold = self.speed_threshold / (2.0**round_index)
        half = self.window // 2
        padded = np.pad(speeds, half, mode="edge")
        smoothed = np.array(
            [np.median(padded[i : i + self.window]) for i in range(speeds.size)]
        )
        runs = _merge_short_runs(_runs(smoothed >= threshold), self.window)
        return Schedule(subtasks=_pair_runs_into_subtasks(runs), total_frames=speeds.size)


def _canned_valid(total_frames: int) -> Schedule:
    if total_frames == 1:
        phases: tuple[Phase, ...] = (Phase(PhaseLabel.MOVE, 0, 0),)
    else:
        phases = (
            Phase(PhaseLabel.MOVE, 0, total_frames - 2),
            Phase(PhaseLabel.OPERATE, total_frames - 1, total_frames - 1),
        )
    return Schedule((Subtask(index=1, phases=phases, description="canned"),), total_frames)


def _canned_fault(code: ErrorCode, total_frames: int) -> Schedule:
    """A schedule exhibiting exactly the requested structural fault."""
    t = total_frames
    one = Subtask
    if code is ErrorCode.DUPLICATE_PHASE_TYPE:
        mid = max(t // 2 - 1, 0)
        phases = (Phase(PhaseLabel.MOVE, 0, mid), Phase(PhaseLabel.MOVE, mid + 1, t - 1))
        return Schedule((one(1, phases),), t)
    if code is ErrorCode.NO_MOVE_PHASE:
        return Schedule((one(1, (Phase(PhaseLabel.OPERATE, 0, t - 1),)),), t)
    if code is ErrorCode.GAP:
        return Schedule((one(1, (Phase(PhaseLabel.MOVE, 0, t - 2),)),), t)
    if code is ErrorCode.OVERLAP:
        return Schedule(
            (
                one(1, (Phase(PhaseLabel.MOVE, 0, t - 1),)),
                one(2, (Phase(PhaseLabel.OPERATE, t - 1, t - 1),)),
            ),
            t,
        )
    if code is ErrorCode.OUT_OF_RANGE:
        return Schedule((one(1, (Phase(PhaseLabel.MOVE, 0, t),)),), t)
    if code is ErrorCode.DEPTH_EXCEEDED:
        phases = (
            Phase(PhaseLabel.MOVE, 0, 0),
            Phase(PhaseLabel.OPERATE, 1, 1),
            Phase(PhaseLabel.MOVE, 2, t - 1),
        )
        return Schedule((one(1, phases),), t)
    if code is ErrorCode.NON_CHRONOLOGICAL:
        phases = (Phase(PhaseLabel.MOVE, 0, t - 1), Phase(PhaseLabel.OPERATE, 0, t - 1))
        return Schedule((one(1, phases),), t)
    if code is ErrorCode.EMPTY_SCHEDULE:
        return Schedule((), t)
    raise ContractError(f"no canned schedule for fault {code}")


@dataclass
class FaultInjectingMock:
    """Scripted backend for testing the refinement loop: round r emits the
    fault named in script[r], or a valid schedule for a None entry. A script
    entry of MALFORMED_RECORD raises a parse failure instead of returning."""

    script: Sequence[ErrorCode | None]
    calls: int = 0

    def propose(
        self,
        speeds: np.ndarray,
        prior: Schedule | None,
        prior_errors: list[ValidationError],
        round_index: int,
    ) -> Schedule:
        self.calls += 1
        if round_index >= len(self.script):
            raise ContractError(
                f"mock scripted for {len(self.script)} rounds, asked for round {round_index}"
            )
        entry = self.script[round_index]
        total = int(np.asarray(speeds).size)
        if entry is None:
            return _canned_valid(total)
        if entry is ErrorCode.MALFORMED_RECORD:
            raise ScheduleFormatError("mock emitted an unparseable record")
        return _canned_fault(entry, total)


@dataclass(frozen=True)
class ReplayFile:
    """Replays schedules stored in the JSON wire format.

    The file holds either a single schedule array (used for every
    trajectory) or an object mapping trajectory ids to schedule arrays.
    Refinement feedback cannot change a recording, so every round returns
    the same schedule.
    """

    path: Path
    traj_id: str | None = None

    def _select_text(self) -> str:
        try:
            raw = Path(self.path).read_text()
        except OSError as exc:
            raise IoError(f"cannot read schedule file {self.path}: {exc}") from exc
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ScheduleFormatError(f"{self.path}: not valid JSON: {exc}") from exc
        if isinstance(data, list):
            return json.dumps(data)
        if isinstance(data, dict):
            if self.traj_id is None:
                raise ContractError(f"{self.path} maps trajectory ids; a traj_id is required")
            if self.traj_id not in data:
                raise ScheduleFormatError(f"{self.path}: no schedule stored for '{self.traj_id}'")
            return json.dumps(data[self.traj_id])
        raise ScheduleFormatError(f"{self.path}: expected an array or an id->array object")

    def for_trajectory(self, traj_id: str) -> "ReplayFile":
        return ReplayFile(path=self.path, traj_id=traj_id)

    def propose(
        self,
        speeds: np.ndarray,
        prior: Schedule | None,
        prior_errors: list[ValidationError],
        round_index: int,
    ) -> Schedule:
        return parse_schedule_json(self._select_text(), total_frames=int(np.asarray(speeds).size))
