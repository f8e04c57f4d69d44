"""Bounded self-refinement: propose, validate, feed the errors back, retry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, PhaseflowError, ScheduleFormatError
from .schedule import Schedule
from .segmenters import SegmenterBackend
from .validate import ErrorCode, ValidationError, validate


@dataclass
class RefinementResult:
    schedule: Schedule
    rounds_used: int
    error_history: list[list[ValidationError]] = field(default_factory=list)


class RefinementFailedError(PhaseflowError):
    """Budget exhausted without a valid schedule; carries per-round errors."""

    exit_code = 5

    def __init__(self, error_history: list[list[ValidationError]]):
        self.error_history = error_history
        self.rounds_used = len(error_history)
        last = error_history[-1] if error_history else []
        summary = ", ".join(err.code.value for err in last) or "no errors recorded"
        super().__init__(
            f"no valid schedule after {self.rounds_used} rounds (last errors: {summary})"
        )


def refine_loop(backend: SegmenterBackend, speeds: np.ndarray, budget: int) -> RefinementResult:
    """Call the backend at most ``budget`` times, validating each proposal
    and feeding the structured errors into the next round. Returns at the
    first valid schedule; a backend parse failure counts as a round with a
    single malformed-record error."""
    if budget < 1:
        raise ContractError(f"refinement budget must be >= 1, got {budget}")
    speeds = np.asarray(speeds, dtype=np.float64)
    prior: Schedule | None = None
    prior_errors: list[ValidationError] = []
    history: list[list[ValidationError]] = []
    for round_index in range(budget):
        try:
            candidate = backend.propose(speeds, prior, prior_errors, round_index)
        except ScheduleFormatError as exc:
            errors = [ValidationError(ErrorCode.MALFORMED_RECORD, None, str(exc))]
            candidate = None
        else:
            errors = validate(candidate)
        if not errors:
            assert candidate is not None
            return RefinementResult(schedule=candidate, rounds_used=round_index + 1, error_history=history)
        history.append(errors)
        prior = candidate
        prior_errors = errors
    raise RefinementFailedError(history)
