"""Validator, segmenter, refinement-loop, and label-assignment oracles."""

import json

import numpy as np
import pytest

from phaseflow.errors import ContractError, ScheduleFormatError
from phaseflow.phaselabel import (
    ErrorCode,
    FaultInjectingMock,
    Phase,
    RefinementFailedError,
    ReplayFile,
    Schedule,
    Subtask,
    VelocityHeuristic,
    assign_labels,
    frame_agreement,
    parse_schedule_json,
    read_labels,
    refine_loop,
    schedule_to_json,
    validate,
    write_labels,
)
from phaseflow.policy import PhaseLabel

M, O = PhaseLabel.MOVE, PhaseLabel.OPERATE


def sched(total, *subtask_phases):
    subtasks = tuple(
        Subtask(index=i + 1, phases=tuple(phases)) for i, phases in enumerate(subtask_phases)
    )
    return Schedule(subtasks=subtasks, total_frames=total)


APPENDIX_LIKE = sched(121, [Phase(M, 0, 45), Phase(O, 46, 120)])


# ---------------------------------------------------------------------------
# validator examples


def test_reference_two_phase_schedule_is_valid():
    assert validate(APPENDIX_LIKE) == []


def test_duplicate_phase_type_detected():
    s = sched(10, [Phase(M, 0, 4), Phase(M, 5, 9)])
    assert ErrorCode.DUPLICATE_PHASE_TYPE in {e.code for e in validate(s)}


def test_all_operate_schedule_lacks_move():
    s = sched(10, [Phase(O, 0, 9)])
    errs = validate(s)
    assert [e.code for e in errs] == [ErrorCode.NO_MOVE_PHASE]
    assert errs[0].subtask_index is None


def test_gap_between_subtasks_is_localized():
    s = sched(100, [Phase(M, 0, 50)], [Phase(O, 52, 99)])
    errs = validate(s)
    gaps = [e for e in errs if e.code is ErrorCode.GAP]
    assert len(gaps) == 1 and gaps[0].subtask_index == 2
    assert "51" in gaps[0].message


def test_overlap_charged_to_later_subtask():
    s = sched(100, [Phase(M, 0, 50)], [Phase(O, 40, 99)])
    errs = validate(s)
    assert [e.code for e in errs if e.code is ErrorCode.OVERLAP][0] is ErrorCode.OVERLAP
    assert [e.subtask_index for e in errs if e.code is ErrorCode.OVERLAP] == [2]


def test_leading_and_trailing_gaps():
    lead = validate(sched(10, [Phase(M, 2, 9)]))
    assert (ErrorCode.GAP, 1) in {(e.code, e.subtask_index) for e in lead}
    trail = validate(sched(10, [Phase(M, 0, 7)]))
    assert (ErrorCode.GAP, 1) in {(e.code, e.subtask_index) for e in trail}


def test_empty_schedule_short_circuits():
    errs = validate(Schedule((), 10))
    assert [e.code for e in errs] == [ErrorCode.EMPTY_SCHEDULE]


def test_depth_out_of_range_and_reversal():
    s = sched(10, [Phase(M, 0, 3), Phase(O, 4, 6), Phase(M, 7, 9)])
    assert ErrorCode.DEPTH_EXCEEDED in {e.code for e in validate(s)}
    s = sched(10, [Phase(M, 0, 12)])
    assert ErrorCode.OUT_OF_RANGE in {e.code for e in validate(s)}
    s = sched(10, [Phase(M, 5, 2)])
    assert ErrorCode.NON_CHRONOLOGICAL in {e.code for e in validate(s)}


def test_non_abutting_phases_within_subtask():
    s = sched(10, [Phase(M, 0, 4), Phase(O, 6, 9)])
    assert ErrorCode.NON_CHRONOLOGICAL in {e.code for e in validate(s)}


def test_malformed_subtasks():
    s = Schedule((Subtask(index=1, phases=()),), 10)
    assert ErrorCode.MALFORMED_RECORD in {e.code for e in validate(s)}
    s = Schedule((Subtask(index=7, phases=(Phase(M, 0, 9),)),), 10)
    assert ErrorCode.MALFORMED_RECORD in {e.code for e in validate(s)}


def test_validator_is_pure_and_deterministically_ordered():
    s = sched(10, [Phase(O, 2, 1)], [Phase(O, 3, 20), Phase(O, 5, 9)])
    first = validate(s)
    second = validate(s)
    assert first == second
    code_rank = {code: i for i, code in enumerate(ErrorCode)}
    keys = [(e.subtask_index or 0, code_rank[e.code]) for e in first]
    assert keys == sorted(keys)


# ---------------------------------------------------------------------------
# JSON wire format


def test_schedule_json_round_trip():
    text = schedule_to_json(APPENDIX_LIKE)
    back = parse_schedule_json(text, total_frames=121)
    assert back == Schedule(
        (
            Subtask(
                index=1,
                phases=(Phase(M, 0, 45), Phase(O, 46, 120)),
                description="",
                primary_arm="unknown",
            ),
        ),
        121,
    )


def test_parse_ignores_extra_keys_and_validates_types():
    payload = [
        {
            "subtask": 1,
            "subtask_description": "press the button",
            "primary_arm": "right",
            "target_object_axis": [0.1, 0.2],  # extra key: ignored
            "phases": [
                {"phase_type": "move", "start_frame_idx": 0, "end_frame_idx": 45},
                {"phase_type": "operate", "start_frame_idx": 46, "end_frame_idx": 120},
            ],
        }
    ]
    s = parse_schedule_json(json.dumps(payload), 121)
    assert validate(s) == []
    assert s.subtasks[0].primary_arm == "right"


@pytest.mark.parametrize(
    "payload",
    [
        "not json at all {",
        json.dumps({"subtask": 1}),  # object, not array
        json.dumps([{"subtask": 1}]),  # missing phases
        json.dumps([{"subtask": 1, "phases": [{"phase_type": "move", "start_frame_idx": 0}]}]),
        json.dumps([{"subtask": 1, "phases": [{"phase_type": "hop", "start_frame_idx": 0, "end_frame_idx": 1}]}]),
        json.dumps([{"subtask": 1, "phases": [{"phase_type": "move", "start_frame_idx": 0.5, "end_frame_idx": 1}]}]),
        json.dumps([{"subtask": "one", "phases": []}]),
        json.dumps([{"subtask": 1, "primary_arm": "tentacle", "phases": []}]),
    ],
)
def test_parse_rejects_malformed_payloads(payload):
    with pytest.raises(ScheduleFormatError):
        parse_schedule_json(payload, 10)


# ---------------------------------------------------------------------------
# velocity heuristic


def test_heuristic_splits_fast_then_slow_profile():
    speeds = np.concatenate([np.full(30, 0.5), np.full(30, 0.01)])
    s = VelocityHeuristic(speed_threshold=0.1, window=3).propose(speeds, None, [], 0)
    assert len(s.subtasks) == 1
    assert s.subtasks[0].phases == (Phase(M, 0, 29), Phase(O, 30, 59))
    assert validate(s) == []


def test_heuristic_constant_profiles():
    fast = VelocityHeuristic().propose(np.full(20, 0.5), None, [], 0)
    assert len(fast.subtasks) == 1 and fast.subtasks[0].phases == (Phase(M, 0, 19),)
    assert validate(fast) == []
    slow = VelocityHeuristic().propose(np.full(20, 0.001), None, [], 0)
    codes = {e.code for e in validate(slow)}
    assert codes == {ErrorCode.NO_MOVE_PHASE}  # coverage fine, refinement's job


def test_heuristic_merges_chatter_shorter_than_window():
    speeds = np.full(40, 0.5)
    speeds[10] = 0.001  # single-frame dropout
    s = VelocityHeuristic(speed_threshold=0.1, window=3).propose(speeds, None, [], 0)
    assert s.subtasks[0].phases == (Phase(M, 0, 39),)


def test_heuristic_coverage_properties_on_random_speeds():
    rng = np.random.default_rng(0)
    for _ in range(50):
        speeds = np.abs(rng.normal(0.05, 0.05, rng.integers(1, 80)))
        s = VelocityHeuristic().propose(speeds, None, [], 0)
        codes = {e.code for e in validate(s)}
        assert codes <= {ErrorCode.NO_MOVE_PHASE}


# ---------------------------------------------------------------------------
# refinement loop


def test_refine_success_at_each_round_within_budget():
    speeds = np.full(12, 0.5)
    for r in range(1, 4):
        mock = FaultInjectingMock(script=[ErrorCode.DUPLICATE_PHASE_TYPE] * (r - 1) + [None])
        result = refine_loop(mock, speeds, budget=3)
        assert result.rounds_used == r
        assert mock.calls == r
        assert validate(result.schedule) == []
        assert len(result.error_history) == r - 1


def test_refine_fails_beyond_budget_and_respects_call_cap():
    speeds = np.full(12, 0.5)
    mock = FaultInjectingMock(script=[ErrorCode.GAP] * 10)
    with pytest.raises(RefinementFailedError) as exc:
        refine_loop(mock, speeds, budget=3)
    assert mock.calls == 3
    assert exc.value.rounds_used == 3
    assert len(exc.value.error_history) == 3
    assert all(ErrorCode.GAP in {e.code for e in errs} for errs in exc.value.error_history)


def test_refine_feeds_errors_back():
    speeds = np.full(12, 0.5)
    seen = []

    class Spy:
        def propose(self, speeds, prior, prior_errors, round_index):
            seen.append([e.code for e in prior_errors])
            return FaultInjectingMock(script=[ErrorCode.NO_MOVE_PHASE, None]).propose(
                speeds, prior, prior_errors, round_index
            )

    result = refine_loop(Spy(), speeds, budget=2)
    assert result.rounds_used == 2
    assert seen == [[], [ErrorCode.NO_MOVE_PHASE]]


def test_refine_counts_parse_failures_as_malformed_rounds():
    speeds = np.full(12, 0.5)
    mock = FaultInjectingMock(script=[ErrorCode.MALFORMED_RECORD, None])
    result = refine_loop(mock, speeds, budget=2)
    assert result.rounds_used == 2
    assert [e.code for e in result.error_history[0]] == [ErrorCode.MALFORMED_RECORD]


def test_heuristic_plus_refinement_recovers_from_all_slow_profile():
    # constant low speed: threshold halves per round until Move appears
    speeds = np.full(24, 0.011)
    result = refine_loop(VelocityHeuristic(speed_threshold=0.04, window=3), speeds, budget=3)
    assert result.rounds_used == 3
    assert validate(result.schedule) == []


# ---------------------------------------------------------------------------
# label assignment


def test_assign_labels_matches_reference_intervals():
    y = assign_labels(APPENDIX_LIKE)
    assert y.shape == (121,)
    assert np.all(y[:46] == int(M))
    assert np.all(y[46:] == int(O))


def test_assign_labels_single_move_phase():
    y = assign_labels(sched(7, [Phase(M, 0, 6)]))
    assert np.all(y == int(M))


def test_assign_labels_requires_validity():
    with pytest.raises(ContractError):
        assign_labels(sched(10, [Phase(O, 0, 9)]))


def test_label_file_round_trip(tmp_path):
    labels = {"t0/d1": np.array([0, 0, 1, 1]), "t0/d0": np.array([0, 1])}
    path = tmp_path / "labels.jsonl"
    write_labels(path, labels)
    again = tmp_path / "labels2.jsonl"
    write_labels(again, labels)
    assert path.read_bytes() == again.read_bytes()
    back = read_labels(path)
    assert set(back) == set(labels)
    for key in labels:
        np.testing.assert_array_equal(back[key], labels[key])
    assert frame_agreement(back["t0/d1"], labels["t0/d1"]) == 1.0


# ---------------------------------------------------------------------------
# replay backend


def test_replay_file_single_array(tmp_path):
    f = tmp_path / "sched.json"
    f.write_text(schedule_to_json(APPENDIX_LIKE))
    result = refine_loop(ReplayFile(f), np.zeros(121), budget=1)
    y = assign_labels(result.schedule)
    assert np.all(y[:46] == int(M)) and np.all(y[46:] == int(O))


def test_replay_file_per_trajectory_map(tmp_path):
    f = tmp_path / "scheds.json"
    body = {
        "t0/d0": json.loads(schedule_to_json(sched(5, [Phase(M, 0, 4)]))),
        "t1/d0": json.loads(schedule_to_json(sched(5, [Phase(O, 0, 4)]))),
    }
    f.write_text(json.dumps(body))
    ok = refine_loop(ReplayFile(f).for_trajectory("t0/d0"), np.zeros(5), budget=1)
    assert validate(ok.schedule) == []
    with pytest.raises(RefinementFailedError):
        refine_loop(ReplayFile(f).for_trajectory("t1/d0"), np.zeros(5), budget=2)
    with pytest.raises(ScheduleFormatError):
        ReplayFile(f).for_trajectory("missing").propose(np.zeros(5), None, [], 0)


# ---------------------------------------------------------------------------
# small enumeration against the independent oracle (the full T<=6 sweep
# lives in the acceptance suite)

from oracle_schedules import enumerate_schedules, oracle_code_classes, validator_code_classes


def test_validator_agrees_with_oracle_on_small_enumeration():
    checked = 0
    for schedule in enumerate_schedules(max_frames=4):
        assert validator_code_classes(validate(schedule)) == oracle_code_classes(schedule)
        checked += 1
    assert checked > 10_000
