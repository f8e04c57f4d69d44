"""Environment, demonstrator, rollout, and dataset-format tests."""

import numpy as np
import pytest

from phaseflow.errors import GenerationError, IoError
from phaseflow.numcore import Rng
from phaseflow.phaselabel import assign_labels, validate
from phaseflow.policy.model import PolicyConfig, build_policy
from phaseflow.policy.types import PhaseLabel
from phaseflow.simenv import (
    GRIP_ENGAGE,
    GRIP_RELEASE,
    InteractionKind,
    RolloutOutcome,
    ScriptedPolicy,
    TaskSpec,
    Trajectory,
    build_train_samples,
    context_frame,
    env_step,
    gen_task,
    ground_truth_schedule,
    initial_state,
    observation_features,
    read_dataset,
    rollout,
    scripted_demo,
    success,
    trajectory_speeds,
    write_dataset,
)
from phaseflow.simenv.demo import MOVE_SPEED, OPERATE_SPEED
from phaseflow.simenv.env import MAX_GRIP_STEP, MAX_XY_STEP


def _demo_batch(n, seed=31, **kw):
    rng = Rng(seed)
    out = []
    for i in range(n):
        task = gen_task(rng.spawn(i))
        demo_rng = rng.spawn(10_000 + i)
        out.append(scripted_demo(task, rng=demo_rng, **kw) if kw else scripted_demo(task))
    return out


def _press_task():
    return gen_task(Rng(11), kind=InteractionKind.PRESS)


def _pick_task():
    return gen_task(Rng(12), kind=InteractionKind.PICK_PLACE)


# ---------------------------------------------------------------- tasks


def test_gen_task_deterministic():
    a, b = gen_task(Rng(77)), gen_task(Rng(77))
    assert np.array_equal(a.start_pose, b.start_pose)
    assert np.array_equal(a.object_pose, b.object_pose)
    assert np.array_equal(a.goal_pose, b.goal_pose)
    assert a.interaction_kind is b.interaction_kind and a.seed == b.seed


def test_thousand_tasks_satisfy_preconditions():
    rng = Rng(3)
    kinds = set()
    for i in range(1000):
        t = gen_task(rng.spawn(i))
        kinds.add(t.interaction_kind)
        assert np.linalg.norm(t.object_pose - t.start_pose[:2]) >= 3 * t.vicinity_radius
        assert t.success_tolerance < t.vicinity_radius
        for pose in (t.start_pose[:2], t.object_pose, t.goal_pose):
            assert np.all(np.abs(pose) <= 1.0)
        if t.interaction_kind is InteractionKind.PRESS:
            assert np.array_equal(t.goal_pose, t.object_pose)
    assert kinds == {InteractionKind.PRESS, InteractionKind.PICK_PLACE}


def test_task_invariant_rejected():
    with pytest.raises(Exception, match="success_tolerance"):
        TaskSpec(
            start_pose=np.zeros(3),
            object_pose=np.array([0.5, 0.5]),
            goal_pose=np.array([0.5, 0.5]),
            vicinity_radius=0.02,
            success_tolerance=0.15,
            interaction_kind=InteractionKind.PRESS,
            task_code=np.array([1.0, 0.0]),
            seed=0,
        )


# ------------------------------------------------------------- dynamics


def test_env_step_pure_and_deterministic():
    task = _press_task()
    state = initial_state(task)
    action = np.array([0.05, -0.03, 0.01])
    before = state.agent.copy()
    s1 = env_step(task, state, action)
    s2 = env_step(task, state, action)
    assert np.array_equal(state.agent, before)  # input untouched
    assert np.array_equal(s1.agent, s2.agent) and s1.gripper == s2.gripper
    assert s1.t == state.t + 1


def test_env_step_caps_displacement_and_gripper():
    task = _press_task()
    state = initial_state(task)
    huge = np.array([5.0, 5.0, 3.0])
    nxt = env_step(task, state, huge)
    moved = np.linalg.norm(nxt.agent - state.agent)
    assert moved <= MAX_XY_STEP + 1e-12
    assert nxt.gripper == pytest.approx(min(state.gripper + MAX_GRIP_STEP, 1.0))
    low = env_step(task, nxt, np.array([0.0, 0.0, -3.0]))
    assert low.gripper >= 0.0


def _teleport(task, xy, gripper=0.0):
    state = initial_state(task)
    object.__setattr__(state, "agent", np.asarray(xy, dtype=np.float64))
    object.__setattr__(state, "gripper", float(gripper))
    return state


def test_press_fires_only_near_object():
    task = _press_task()
    near = _teleport(task, task.object_pose + np.array([task.success_tolerance / 2, 0.0]))
    fired = env_step(task, near, np.array([0.0, 0.0, GRIP_ENGAGE]))
    assert fired.interaction_done

    far = _teleport(task, task.object_pose + np.array([5 * task.success_tolerance, 0.0]))
    missed = env_step(task, far, np.array([0.0, 0.0, GRIP_ENGAGE]))
    assert not missed.interaction_done


def test_grasp_carry_release_cycle():
    task = _pick_task()
    state = _teleport(task, task.object_pose + np.array([0.01, 0.0]))
    state = env_step(task, state, np.array([0.0, 0.0, GRIP_ENGAGE]))
    assert state.grasped and not state.interaction_done

    carried = env_step(task, state, np.array([0.05, 0.0, 0.0]))
    assert carried.grasped
    assert np.array_equal(carried.object_pos, carried.agent)

    dropped = env_step(task, carried, np.array([0.0, 0.0, -(GRIP_ENGAGE - GRIP_RELEASE / 2)]))
    assert not dropped.grasped and dropped.interaction_done
    assert np.array_equal(dropped.object_pos, dropped.agent)


def test_gripper_hysteresis_no_event_between_thresholds():
    task = _pick_task()
    state = _teleport(task, task.object_pose.copy(), gripper=0.02)
    # wiggling strictly inside (GRIP_RELEASE, GRIP_ENGAGE) triggers nothing
    for dg in (0.005, -0.005, 0.005, -0.005):
        state = env_step(task, state, np.array([0.0, 0.0, dg]))
        assert not state.grasped and not state.interaction_done


def test_no_regrasp_after_done():
    task = _pick_task()
    state = _teleport(task, task.object_pose.copy())
    state = env_step(task, state, np.array([0.0, 0.0, GRIP_ENGAGE]))
    state = env_step(task, state, np.array([0.0, 0.0, -GRIP_ENGAGE]))
    assert state.interaction_done and not state.grasped
    again = env_step(task, state, np.array([0.0, 0.0, GRIP_ENGAGE]))
    assert not again.grasped and again.interaction_done


# ----------------------------------------------------------------- demos


def test_noiseless_press_demo_piecewise_magnitudes():
    demo = scripted_demo(_press_task())
    speeds = trajectory_speeds(demo)
    moves = np.array([f.label is PhaseLabel.MOVE for f in demo.frames])
    assert np.allclose(speeds[moves], MOVE_SPEED, atol=1e-12)
    assert np.all(speeds[~moves] <= OPERATE_SPEED + 1e-9)
    assert moves.any() and (~moves).any()


def test_demo_amplitude_separation_over_batch():
    demos = _demo_batch(100)
    move_speeds, op_speeds = [], []
    for demo in demos:
        speeds = trajectory_speeds(demo)
        for f, s in zip(demo.frames, speeds):
            (move_speeds if f.label is PhaseLabel.MOVE else op_speeds).append(s)
    assert np.mean(move_speeds) >= 5 * np.mean(op_speeds)


def test_demo_move_frame_dominance():
    demos = _demo_batch(100)
    move = sum(sum(1 for f in d.frames if f.label is PhaseLabel.MOVE) for d in demos)
    total = sum(d.total_frames for d in demos)
    assert move / total >= 0.60


def test_demo_schedules_always_validate():
    for demo in _demo_batch(60):
        schedule = ground_truth_schedule(demo)
        assert validate(schedule) == []
        assert all(len(st.phases) <= 2 for st in schedule.subtasks)
        labels = assign_labels(schedule)
        assert np.array_equal(labels, np.array([int(f.label) for f in demo.frames]))


def test_demo_subtask_structure_by_family():
    press = ground_truth_schedule(scripted_demo(_press_task()))
    assert len(press.subtasks) == 1
    assert [p.phase_type for p in press.subtasks[0].phases] == [
        PhaseLabel.MOVE,
        PhaseLabel.OPERATE,
    ]
    pick = ground_truth_schedule(scripted_demo(_pick_task()))
    assert len(pick.subtasks) == 2
    for st in pick.subtasks:
        assert [p.phase_type for p in st.phases] == [PhaseLabel.MOVE, PhaseLabel.OPERATE]


def test_noisy_demo_deterministic_and_valid():
    task = gen_task(Rng(5))
    d1 = scripted_demo(task, rng=Rng(9), action_noise=0.005, obs_noise=0.005)
    d2 = scripted_demo(task, rng=Rng(9), action_noise=0.005, obs_noise=0.005)
    assert d1.total_frames == d2.total_frames
    for a, b in zip(d1.frames, d2.frames):
        assert np.array_equal(a.action, b.action)
        assert np.array_equal(a.context.observation_features, b.context.observation_features)
        assert a.label is b.label
    assert validate(ground_truth_schedule(d1)) == []


def test_demo_step_cap_raises_generation_error():
    with pytest.raises(GenerationError, match="exceeded 5 steps"):
        scripted_demo(_pick_task(), max_steps=5)


# --------------------------------------------------------------- rollouts


def test_scripted_policy_succeeds_on_every_noiseless_task():
    rng = Rng(21)
    for i in range(50):
        task = gen_task(rng.spawn(i))
        outcome = rollout(ScriptedPolicy(), task, rng.spawn(900 + i))
        assert outcome.steps_used <= 400
        assert success(outcome, task), (i, task.interaction_kind)


def test_zero_weight_model_fails():
    cfg = PolicyConfig(action_dim=3, horizon=8, instruction_dim=2, observation_dim=14, proprio_dim=3)
    model = build_policy(cfg, Rng(0))
    for group in (model.encoder, model.router, model.expert_move, model.expert_operate):
        for w, b in zip(group.weights, group.biases):
            w[:] = 0.0
            b[:] = 0.0
    task = _press_task()
    outcome = rollout(model, task, Rng(33), max_steps=120)
    assert not success(outcome, task)


def test_rollout_deterministic():
    cfg = PolicyConfig(action_dim=3, horizon=8, instruction_dim=2, observation_dim=14, proprio_dim=3)
    model = build_policy(cfg, Rng(4))
    task = _pick_task()
    a = rollout(model, task, Rng(55), max_steps=60)
    b = rollout(model, task, Rng(55), max_steps=60)
    assert a.steps_used == b.steps_used
    assert a.interaction_achieved == b.interaction_achieved
    assert np.array_equal(a.final_pose, b.final_pose)
    assert a.routing_decisions == b.routing_decisions


def test_rollout_respects_step_cap():
    outcome = rollout(ScriptedPolicy(), _pick_task(), Rng(1), max_steps=7)
    assert outcome.steps_used <= 7
    assert len(outcome.routing_decisions) == outcome.steps_used


def test_success_boundary_is_closed():
    # tolerance 0.25 and poses on exact binary fractions so the distance
    # computes to the boundary with zero roundoff
    task = TaskSpec(
        start_pose=np.array([0.9, 0.9, 0.0]),
        object_pose=np.array([0.0, 0.0]),
        goal_pose=np.array([0.0, 0.0]),
        vicinity_radius=0.5,
        success_tolerance=0.25,
        interaction_kind=InteractionKind.PRESS,
        task_code=np.array([1.0, 0.0]),
        seed=0,
    )

    def outcome(pose, achieved=True):
        return RolloutOutcome(
            final_pose=pose, interaction_achieved=achieved, steps_used=10, routing_decisions=()
        )

    assert success(outcome(np.array([0.25, 0.0])), task)  # exactly on the ball
    assert not success(outcome(np.array([0.5, 0.0])), task)  # off by 2x tolerance
    assert not success(outcome(np.array([0.0, 0.0]), achieved=False), task)


def test_pick_place_success_scores_object_not_agent():
    task = _pick_task()
    outcome = rollout(ScriptedPolicy(), task, Rng(2))
    assert success(outcome, task)
    assert np.linalg.norm(outcome.final_pose - task.goal_pose) <= task.success_tolerance


# --------------------------------------------------------------- datasets


def _tiny_dataset(path, n=4, seed=13):
    rng = Rng(seed)
    pairs = []
    for i in range(n):
        task = gen_task(rng.spawn(i))
        demo = scripted_demo(task, rng=rng.spawn(100 + i), action_noise=0.003, obs_noise=0.003)
        pairs.append((f"t{i:03d}/d00", demo))
    write_dataset(path, pairs, meta={"seed": seed, "demos": n})
    return pairs


def test_dataset_round_trip(tmp_path):
    path = tmp_path / "demos.jsonl"
    pairs = _tiny_dataset(path)
    view = read_dataset(path)
    assert view.counts["demos"] == len(pairs)
    assert set(view.trajectories) == {tid for tid, _ in pairs}
    for tid, demo in pairs:
        records = view.trajectories[tid]
        assert len(records) == demo.total_frames
        for rec, frame in zip(records, demo.frames):
            assert np.array_equal(rec.action, frame.action)
            assert np.array_equal(rec.observation, frame.context.observation_features)
            assert rec.label is frame.label


def test_dataset_header_stats_match_recomputation(tmp_path):
    path = tmp_path / "demos.jsonl"
    pairs = _tiny_dataset(path)
    view = read_dataset(path)
    rows = np.concatenate([[f.action for f in d.frames] for _, d in pairs])
    assert np.allclose(view.normalizer.mean, rows.mean(axis=0), atol=1e-15)
    assert np.allclose(view.normalizer.std, rows.std(axis=0), atol=1e-15)


def test_dataset_byte_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    _tiny_dataset(p1)
    _tiny_dataset(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_read_errors(tmp_path):
    with pytest.raises(IoError, match="cannot read"):
        read_dataset(tmp_path / "missing.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind":"something-else","format_version":9}\n')
    with pytest.raises(IoError, match="unsupported header"):
        read_dataset(bad)


def test_build_train_samples_windows_and_overrides(tmp_path):
    path = tmp_path / "demos.jsonl"
    _tiny_dataset(path, n=2)
    view = read_dataset(path)
    horizon = 8
    samples = build_train_samples(view, horizon)
    assert len(samples) == view.n_frames

    tid, records = next(iter(view.trajectories.items()))
    t_total = len(records)
    first = samples[0]  # samples preserve trajectory order
    assert first.valid_rows == min(horizon, t_total)
    # windows are normalized: denormalizing recovers raw actions
    raw = view.normalizer.denormalize(first.chunk.actions[: first.valid_rows])
    expected = np.stack([records[k].action for k in range(first.valid_rows)])
    assert np.allclose(raw, expected, atol=1e-12)

    # tail window: padding rows zeroed, valid_rows shrinks to 1
    tail = samples[t_total - 1]
    assert tail.valid_rows == 1
    assert np.array_equal(tail.chunk.actions[1:], np.zeros((horizon - 1, 3)))

    flipped = {tid: [PhaseLabel.OPERATE] * t_total}
    overridden = build_train_samples(view, horizon, label_overrides=flipped)
    assert all(s.label is PhaseLabel.OPERATE for s in overridden[:t_total])

    with pytest.raises(ValueError, match="override labels"):
        build_train_samples(view, horizon, label_overrides={tid: [PhaseLabel.MOVE]})


def test_trajectory_nonempty_guard():
    with pytest.raises(Exception, match="empty"):
        Trajectory(task=_press_task(), frames=())


def test_context_frame_shapes():
    task = _pick_task()
    frame = context_frame(task, initial_state(task))
    assert frame.instruction_features.shape == (2,)
    assert frame.observation_features.shape == (14,)
    assert frame.proprio_state.shape == (3,)
    assert frame.valid_token_mask.all()


def test_observation_geometry_consistent():
    # bearings and distances must always agree with the offsets they came
    # from, noisy or not
    task = _pick_task()
    state = initial_state(task)
    rng = Rng(77)
    for noise in (0.0, 0.05):
        obs = observation_features(task, state, rng, noise)
        for base, unit, dist in ((0, 4, 8), (2, 6, 9)):
            delta = obs[base : base + 2]
            d = float(np.linalg.norm(delta))
            assert obs[dist] == pytest.approx(d, abs=1e-12)
            assert np.allclose(obs[unit : unit + 2] * d, delta, atol=1e-12)
