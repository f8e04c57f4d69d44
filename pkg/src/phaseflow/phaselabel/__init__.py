"""Phase auto-labeling: schedule data model, deterministic validator with a
structured error taxonomy, pluggable segmenter backends, the bounded
self-refinement loop, and per-frame label assignment."""

from .schedule import Phase, Schedule, Subtask, parse_schedule_json, schedule_to_json
from .validate import ErrorCode, ValidationError, validate
from .segmenters import (
    FaultInjectingMock,
    ReplayFile,
    SegmenterBackend,
    VelocityHeuristic,
)
from .refine import RefinementFailedError, RefinementResult, refine_loop
from .labels import assign_labels, frame_agreement, read_labels, write_labels

__all__ = [
    "Phase",
    "Subtask",
    "Schedule",
    "schedule_to_json",
    "parse_schedule_json",
    "ErrorCode",
    "ValidationError",
    "validate",
    "SegmenterBackend",
    "VelocityHeuristic",
    "FaultInjectingMock",
    "ReplayFile",
    "RefinementResult",
    "RefinementFailedError",
    "refine_loop",
    "assign_labels",
    "frame_agreement",
    "write_labels",
    "read_labels",
]
