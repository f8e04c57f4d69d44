"""Schedule data model and its JSON wire format.

Constructors are deliberately permissive: the validator is the single place
where structural constraints are judged, so a Schedule object can hold any
shape the parser managed to read. Only genuinely unreadable input (wrong
JSON types, missing keys) is rejected at parse time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import ScheduleFormatError
from ..policy.types import PhaseLabel

_ARMS = ("left", "right", "both", "unknown")


@dataclass(frozen=True)
class Phase:
    phase_type: PhaseLabel
    start_frame_idx: int
    end_frame_idx: int


@dataclass(frozen=True)
class Subtask:
    index: int  # 1-based ordinal
    phases: tuple[Phase, ...]
    description: str = ""
    primary_arm: str = "unknown"


@dataclass(frozen=True)
class Schedule:
    subtasks: tuple[Subtask, ...]
    total_frames: int

    def all_phases(self):
        for st in self.subtasks:
            yield from st.phases


def schedule_to_json(schedule: Schedule) -> str:
    """Serialize to the JSON array wire format (one object per subtask)."""
    out = []
    for st in schedule.subtasks:
        out.append(
            {
                "subtask": st.index,
                "subtask_description": st.description,
                "primary_arm": st.primary_arm,
                "phases": [
                    {
                        "phase_type": ph.phase_type.json_name,
                        "start_frame_idx": ph.start_frame_idx,
                        "end_frame_idx": ph.end_frame_idx,
                    }
                    for ph in st.phases
                ],
            }
        )
    return json.dumps(out, indent=2, sort_keys=True)


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise ScheduleFormatError(f"{where}: missing key '{key}'")
    return record[key]


def _as_frame_index(value, where: str) -> int:
    # bool is an int subclass; reject it explicitly
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScheduleFormatError(f"{where}: frame index must be an integer, got {value!r}")
    return value


def parse_schedule_json(text: str, total_frames: int) -> Schedule:
    """Parse the wire format. Unknown keys (e.g. coordinate-prediction
    fields some upstream pipelines add) are ignored."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScheduleFormatError(f"schedule is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ScheduleFormatError("schedule JSON must be an array of subtask objects")
    subtasks = []
    for pos, record in enumerate(data, start=1):
        where = f"subtask record {pos}"
        if not isinstance(record, dict):
            raise ScheduleFormatError(f"{where}: expected an object")
        index = record.get("subtask", pos)
        if isinstance(index, bool) or not isinstance(index, int):
            raise ScheduleFormatError(f"{where}: 'subtask' must be an integer")
        arm = record.get("primary_arm", "unknown")
        if arm not in _ARMS:
            raise ScheduleFormatError(f"{where}: primary_arm {arm!r} not one of {_ARMS}")
        raw_phases = _require(record, "phases", where)
        if not isinstance(raw_phases, list):
            raise ScheduleFormatError(f"{where}: 'phases' must be an array")
        phases = []
        for ph in raw_phases:
            if not isinstance(ph, dict):
                raise ScheduleFormatError(f"{where}: phase entries must be objects")
            try:
                ptype = PhaseLabel.from_json_name(str(_require(ph, "phase_type", where)))
            except Exception as exc:
                raise ScheduleFormatError(f"{where}: {exc}") from exc
            phases.append(
                Phase(
                    phase_type=ptype,
                    start_frame_idx=_as_frame_index(_require(ph, "start_frame_idx", where), where),
                    end_frame_idx=_as_frame_index(_require(ph, "end_frame_idx", where), where),
                )
            )
        subtasks.append(
            Subtask(
                index=index,
                phases=tuple(phases),
                description=str(record.get("subtask_description", "")),
                primary_arm=arm,
            )
        )
    return Schedule(subtasks=tuple(subtasks), total_frames=total_frames)
