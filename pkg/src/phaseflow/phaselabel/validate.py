"""Deterministic structural validator for schedules.

Every violated constraint is reported (deduplicated per subtask and code),
in an order fixed by (subtask index, code declaration order), so the error
list doubles as machine-readable feedback for refinement backends.

Constraint-to-code mapping:
  - no subtasks at all -> EMPTY_SCHEDULE (nothing else is reported)
  - nonpositive total_frames or a subtask with no phases or a subtask whose
    1-based ``index`` field disagrees with its position -> MALFORMED_RECORD
  - more than two phases in a subtask -> DEPTH_EXCEEDED
  - phase interval outside [0, total_frames-1] -> OUT_OF_RANGE
  - reversed interval, or a second phase that does not start exactly one
    frame after the first ends -> NON_CHRONOLOGICAL (intra-subtask issues)
  - two phases of the same type in one subtask -> DUPLICATE_PHASE_TYPE
  - subtask spans that leave uncovered frames -> GAP (a leading gap is
    charged to subtask 1, a trailing gap to the last subtask, an interior
    gap to the later subtask of the pair)
  - subtask spans that intersect -> OVERLAP (charged to the later subtask)
  - no Move phase anywhere -> NO_MOVE_PHASE (schedule-level, index None)
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..policy.types import PhaseLabel
from .schedule import Schedule


class ErrorCode(Enum):
    GAP = "gap"
    OVERLAP = "overlap"
    OUT_OF_RANGE = "out_of_range"
    DEPTH_EXCEEDED = "depth_exceeded"
    DUPLICATE_PHASE_TYPE = "duplicate_phase_type"
    NON_CHRONOLOGICAL = "non_chronological"
    NO_MOVE_PHASE = "no_move_phase"
    EMPTY_SCHEDULE = "empty_schedule"
    MALFORMED_RECORD = "malformed_record"


_CODE_ORDER = {code: i for i, code in enumerate(ErrorCode)}


@dataclass(frozen=True)
class ValidationError:
    code: ErrorCode
    subtask_index: int | None  # 1-based; None for schedule-level findings
    message: str

    def __post_init__(self) -> None:
        if not self.message:
            raise ValueError("validation error message must be nonempty")

    def to_record(self) -> dict:
        return {"code": self.code.value, "subtask": self.subtask_index, "message": self.message}


def validate(schedule: Schedule) -> list[ValidationError]:
    """Return every violated constraint; an empty list means Valid."""
    found: dict[tuple[int, int], ValidationError] = {}

    def report(code: ErrorCode, subtask_index: int | None, message: str) -> None:
        key = (subtask_index if subtask_index is not None else 0, _CODE_ORDER[code])
        if key not in found:
            found[key] = ValidationError(code, subtask_index, message)

    if not schedule.subtasks:
        return [ValidationError(ErrorCode.EMPTY_SCHEDULE, None, "schedule has no subtasks")]

    last = schedule.total_frames - 1
    if schedule.total_frames < 1:
        report(ErrorCode.MALFORMED_RECORD, None, f"total_frames={schedule.total_frames} must be >= 1")

    for pos, st in enumerate(schedule.subtasks, start=1):
        if st.index != pos:
            report(
                ErrorCode.MALFORMED_RECORD, pos, f"subtask at position {pos} carries index {st.index}"
            )
        if not st.phases:
            report(ErrorCode.MALFORMED_RECORD, pos, f"subtask {pos} has no phases")
            continue
        if len(st.phases) > 2:
            report(ErrorCode.DEPTH_EXCEEDED, pos, f"subtask {pos} has {len(st.phases)} phases (max 2)")
        for ph in st.phases:
            if ph.start_frame_idx > ph.end_frame_idx:
                report(
                    ErrorCode.NON_CHRONOLOGICAL,
                    pos,
                    f"subtask {pos}: phase interval [{ph.start_frame_idx}, {ph.end_frame_idx}] is reversed",
                )
            if ph.start_frame_idx < 0 or ph.end_frame_idx > last:
                report(
                    ErrorCode.OUT_OF_RANGE,
                    pos,
                    f"subtask {pos}: [{ph.start_frame_idx}, {ph.end_frame_idx}] leaves [0, {last}]",
                )
        if len(st.phases) == 2:
            first, second = st.phases[0], st.phases[1]
            if first.phase_type == second.phase_type:
                report(
                    ErrorCode.DUPLICATE_PHASE_TYPE,
                    pos,
                    f"subtask {pos} repeats phase type '{first.phase_type.json_name}'",
                )
            if second.start_frame_idx != first.end_frame_idx + 1:
                report(
                    ErrorCode.NON_CHRONOLOGICAL,
                    pos,
                    f"subtask {pos}: second phase starts at {second.start_frame_idx}, "
                    f"expected {first.end_frame_idx + 1}",
                )

    # coverage over subtask spans (first phase start .. last phase end):
    # concatenating the spans in order must yield 0..last exactly. Subtasks
    # with no phases or a reversed span contribute no frames; both shapes
    # are already reported above, so the walk skips them.
    expected_start = 0
    for pos, st in enumerate(schedule.subtasks, start=1):
        if not st.phases:
            continue
        span_start = st.phases[0].start_frame_idx
        span_end = st.phases[-1].end_frame_idx
        if span_start > span_end:
            continue
        if span_start > expected_start:
            report(
                ErrorCode.GAP,
                pos,
                f"frames [{expected_start}, {span_start - 1}] are uncovered before subtask {pos}",
            )
        elif span_start < expected_start:
            report(
                ErrorCode.OVERLAP,
                pos,
                f"subtask {pos} starts at {span_start}, already covered through {expected_start - 1}",
            )
        expected_start = max(expected_start, span_end + 1)
    if schedule.total_frames >= 1 and expected_start <= last:
        report(
            ErrorCode.GAP,
            len(schedule.subtasks),
            f"frames [{expected_start}, {last}] are uncovered at the end",
        )

    if not any(ph.phase_type is PhaseLabel.MOVE for ph in schedule.all_phases()):
        report(ErrorCode.NO_MOVE_PHASE, None, "schedule contains no Move phase")

    return [found[k] for k in sorted(found)]
