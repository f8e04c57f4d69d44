"""Acceptance gates, one test per criterion.

Each test prints one ``criterion NN (...): PASS`` line with the measured
quantities (visible with ``pytest -s``; the per-test PASSED/FAILED lines of
``pytest -v`` carry the same verdicts). Criteria 9 and 10 share one
module-scoped end-to-end pipeline run over three seeds at the default
configuration; everything else runs on purpose-built inputs.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from oracle_schedules import (
    enumerate_schedules,
    oracle_code_classes,
    validator_code_classes,
)
from phaseflow.flowmatch import OdeConfig, integrate, interpolate, target_velocity
from phaseflow.harness import (
    RunConfig,
    cmd_ablate,
    cmd_eval,
    cmd_gen_data,
    cmd_label,
    cmd_report,
    cmd_train,
)
from phaseflow.numcore import Rng
from phaseflow.phaselabel import (
    ErrorCode,
    FaultInjectingMock,
    Phase,
    RefinementFailedError,
    Schedule,
    Subtask,
    refine_loop,
    validate,
)
from phaseflow.policy import (
    ActionChunk,
    ContextFrame,
    OptState,
    PhaseLabel,
    PolicyConfig,
    build_policy,
    compute_losses,
    compute_losses_and_grads,
    prepare_batch,
    train_step,
)
from phaseflow.policy.training import TrainSample

SEEDS = (1, 2, 3)


def _pass(num: int, name: str, detail: str = "") -> None:
    tail = f" -- {detail}" if detail else ""
    print(f"criterion {num:02d} ({name}): PASS{tail}")


# ---------------------------------------------------------------------------
# shared model scaffolding for the gradient criteria

GRAD_CFG = PolicyConfig(
    action_dim=3,
    horizon=4,
    instruction_dim=2,
    observation_dim=5,
    proprio_dim=3,
    encoder_dim=8,
    encoder_hidden=(10,),
    router_hidden=(6,),
    expert_hidden=(12,),
    lambda_router=1.0,
)

_GROUPS = ("encoder", "router", "expert_move", "expert_operate")


def _random_samples(rng: Rng, labels) -> list[TrainSample]:
    out = []
    for i, y in enumerate(labels):
        frame = ContextFrame(
            instruction_features=rng.normal(GRAD_CFG.instruction_dim),
            observation_features=rng.normal(GRAD_CFG.observation_dim),
            proprio_state=rng.normal(GRAD_CFG.proprio_dim),
            valid_token_mask=np.array((True, True, i % 3 != 0)),
        )
        chunk = ActionChunk(
            rng.normal(GRAD_CFG.chunk_size).reshape(GRAD_CFG.horizon, GRAD_CFG.action_dim)
        )
        valid = GRAD_CFG.horizon - (i % 2)
        out.append(TrainSample(frame=frame, chunk=chunk, label=y, valid_rows=valid))
    return out


def _vector(holder) -> np.ndarray:
    return np.concatenate([getattr(holder, g).to_vector() for g in _GROUPS])


def _with_vector(model, vec: np.ndarray):
    groups, at = {}, 0
    for g in _GROUPS:
        params = getattr(model, g)
        groups[g] = params.with_vector(vec[at : at + params.n_params])
        at += params.n_params
    return model.with_groups(**groups)


def test_criterion_01_gradient_matches_central_differences():
    started = time.perf_counter()
    worst = 0.0
    for batch_seed in (101, 202, 303):
        rng = Rng(batch_seed)
        model = build_policy(GRAD_CFG, rng)
        labels = [PhaseLabel.MOVE, PhaseLabel.OPERATE, PhaseLabel.OPERATE, PhaseLabel.MOVE]
        pb = prepare_batch(GRAD_CFG, _random_samples(rng, labels), rng)
        _, grads = compute_losses_and_grads(model, pb)
        analytic = _vector(grads)
        base = _vector(model)
        eps = 1e-5
        fd = np.zeros_like(base)
        for k in range(base.size):
            bump = base.copy()
            bump[k] = base[k] + eps
            hi = compute_losses(_with_vector(model, bump), pb).total_loss
            bump[k] = base[k] - eps
            lo = compute_losses(_with_vector(model, bump), pb).total_loss
            fd[k] = (hi - lo) / (2 * eps)
        rel = float(np.linalg.norm(analytic - fd) / np.linalg.norm(fd))
        worst = max(worst, rel)
        assert rel < 1e-4
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    _pass(1, "gradient check", f"worst relative error {worst:.2e} in {elapsed:.1f}s")


def test_criterion_02_inactive_expert_is_untouched():
    rng = Rng(42)
    model = build_policy(GRAD_CFG, rng)
    opt = OptState.for_model(model, lr=1e-3)
    for round_idx in range(100):
        active = PhaseLabel.MOVE if round_idx % 2 == 0 else PhaseLabel.OPERATE
        idle = PhaseLabel.OPERATE if active is PhaseLabel.MOVE else PhaseLabel.MOVE
        samples = _random_samples(rng, [active] * 4)
        _, grads = compute_losses_and_grads(model, prepare_batch(GRAD_CFG, samples, rng))
        idle_name = f"expert_{idle.json_name}"
        assert not np.any(getattr(grads, idle_name).to_vector())
        before = getattr(model, idle_name).to_vector().copy()
        model, opt, _ = train_step(model, opt, samples, rng)
        after = getattr(model, idle_name).to_vector()
        np.testing.assert_array_equal(before, after)
    _pass(2, "update orthogonalization", "100 single-phase batches, idle expert bit-identical")


def test_criterion_03_interpolant_endpoints_and_identity():
    rng = Rng(7)
    draws = 0
    for chunk_seed in range(100):
        x0 = rng.normal(1000)
        a = rng.normal(1000)
        sigma = float(rng.uniform(1)[0])
        u = target_velocity(x0, a)
        x_sigma = interpolate(x0, a, sigma)
        assert np.array_equal(interpolate(x0, a, 0.0), x0)
        assert np.array_equal(interpolate(x0, a, 1.0), a)
        assert np.max(np.abs(a - (x_sigma + (1.0 - sigma) * u))) < 1e-12
        draws += x0.size
    assert draws == 100_000
    _pass(3, "flow interpolant", "endpoints exact, identity within 1e-12 over 1e5 draws")


def test_criterion_04_ode_oracle():
    rng = Rng(12)
    x0 = rng.normal(6)
    drift = rng.normal(6)
    # one Euler step integrates a constant field with no discretization error
    exact = integrate(lambda s, x: drift, x0, OdeConfig(num_steps=1))
    assert np.array_equal(exact, x0 + drift)
    # multi-step runs differ only by accumulation roundoff, never by method error
    from_zero = integrate(lambda s, x: drift, np.zeros(6), OdeConfig(num_steps=8))
    np.testing.assert_allclose(from_zero, drift, rtol=0.0, atol=1e-14)

    # linear field x' = x grows x0 by e; Euler reaches (1 + 1/n)^n
    def rel_err(steps: int) -> float:
        out = integrate(lambda s, x: x, x0, OdeConfig(num_steps=steps))
        return float(np.max(np.abs(out - np.e * x0) / np.abs(np.e * x0)))

    err_100 = rel_err(100)
    assert err_100 < 0.02
    ratio = err_100 / rel_err(200)
    assert 1.7 <= ratio <= 2.3
    _pass(4, "ODE oracle", f"linear-field error {err_100:.4%}, halving ratio {ratio:.2f}")


def test_criterion_05_validator_agrees_with_brute_force():
    checked = 0
    for schedule in enumerate_schedules(6):
        assert validator_code_classes(validate(schedule)) == oracle_code_classes(schedule)
        checked += 1

    M, O = PhaseLabel.MOVE, PhaseLabel.OPERATE

    def sched(total, *subtask_phases, indices=None):
        subtasks = tuple(
            Subtask(index=(indices[i] if indices else i + 1), phases=tuple(ph))
            for i, ph in enumerate(subtask_phases)
        )
        return Schedule(subtasks=subtasks, total_frames=total)

    fixtures = {
        ErrorCode.GAP: sched(6, [Phase(M, 0, 1)], [Phase(O, 3, 5)]),
        ErrorCode.OVERLAP: sched(6, [Phase(M, 0, 3)], [Phase(O, 2, 5)]),
        ErrorCode.OUT_OF_RANGE: sched(4, [Phase(M, 0, 5)]),
        ErrorCode.DEPTH_EXCEEDED: sched(6, [Phase(M, 0, 1), Phase(O, 2, 3), Phase(M, 4, 5)]),
        ErrorCode.DUPLICATE_PHASE_TYPE: sched(6, [Phase(M, 0, 2), Phase(M, 3, 5)]),
        ErrorCode.NON_CHRONOLOGICAL: sched(6, [Phase(M, 3, 1)]),
        ErrorCode.NO_MOVE_PHASE: sched(6, [Phase(O, 0, 5)]),
        ErrorCode.EMPTY_SCHEDULE: Schedule(subtasks=(), total_frames=6),
        ErrorCode.MALFORMED_RECORD: sched(6, [Phase(M, 0, 5)], indices=[4]),
    }
    for code, fixture in fixtures.items():
        hit = {err.code for err in validate(fixture)}
        assert code in hit, f"fixture for {code} reported {hit}"
    _pass(5, "validator oracle", f"{checked} enumerated schedules, all 9 codes exercised")


def test_criterion_06_refinement_round_and_budget_accounting():
    speeds = np.concatenate([np.full(30, 0.5), np.full(30, 0.005)])
    budget = 3
    for succeed_at in range(1, budget + 1):
        script = [ErrorCode.NO_MOVE_PHASE] * (succeed_at - 1) + [None]
        backend = FaultInjectingMock(script=script)
        result = refine_loop(backend, speeds, budget=budget)
        assert result.rounds_used == succeed_at
        assert backend.calls == succeed_at
        assert validate(result.schedule) == []

    stubborn = FaultInjectingMock(script=[ErrorCode.NO_MOVE_PHASE] * (budget + 2))
    with pytest.raises(RefinementFailedError) as err:
        refine_loop(stubborn, speeds, budget=budget)
    assert stubborn.calls == budget
    assert err.value.rounds_used == budget
    _pass(6, "refinement loop", f"success at rounds 1..{budget}, hard stop at the budget")


def test_criterion_07_heuristic_labels_match_ground_truth(tmp_path):
    cfg = RunConfig(
        seed=5,
        out_dir=str(tmp_path / "clean"),
        n_tasks=50,
        demos_per_task=2,
        action_noise=0.0,
        start_jitter=0.0,
    )
    cmd_gen_data(cfg)
    summary = cmd_label(cfg)
    assert summary.labeled == 100
    assert summary.failed == 0  # every schedule validated within the budget
    assert summary.agreement >= 0.98
    _pass(7, "labeling fidelity", f"frame agreement {summary.agreement:.4f} on 100 clean demos")


def test_criterion_08_router_reaches_99pct_within_2000_steps(tmp_path):
    cfg = RunConfig(seed=1, out_dir=str(tmp_path / "router"), train_steps=2000)
    cmd_gen_data(cfg)
    labels = cmd_label(cfg)
    trained = cmd_train(cfg, labels=labels.labels_path)
    assert trained.holdout_router_accuracy >= 0.99
    _pass(
        8,
        "router learnability",
        f"holdout accuracy {trained.holdout_router_accuracy:.4f} after 2000 steps",
    )


# ---------------------------------------------------------------------------
# end-to-end criteria: one default-budget pipeline per seed


@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("default-budget")
    runs = []
    for seed in SEEDS:
        cfg = RunConfig(seed=seed, out_dir=str(root / f"seed{seed}"))
        cmd_gen_data(cfg)
        labels = cmd_label(cfg)
        started = time.perf_counter()
        cmd_train(cfg, labels=labels.labels_path)
        train_seconds = time.perf_counter() - started
        _, ablation = cmd_ablate(cfg)
        cmd_train(cfg, arch="monolithic")
        _, mono_rows = cmd_eval(cfg, checkpoint=Path(cfg.out_dir) / "checkpoint_monolithic.ckpt")
        runs.append(
            {
                "seed": seed,
                "train_seconds": train_seconds,
                "mode_rate": {
                    r.routing_mode: r.success_rate
                    for r in ablation
                    if r.task_family == "average"
                },
                "mode_trials": {
                    r.routing_mode: r.trials for r in ablation if r.task_family == "average"
                },
                "dual_pick": next(
                    r.success_rate
                    for r in ablation
                    if r.task_family == "pick_place" and r.routing_mode == "original"
                ),
                "mono_pick": next(
                    r.success_rate for r in mono_rows if r.task_family == "pick_place"
                ),
            }
        )
    return runs


def test_criterion_09_routing_ablation_ordering(default_runs):
    details = []
    for run in default_runs:
        assert run["train_seconds"] < 20 * 60
        assert all(trials >= 200 for trials in run["mode_trials"].values())
        rate = run["mode_rate"]
        orig_vs_random = 100 * (rate["original"] - rate["random"])
        random_vs_reversal = 100 * (rate["random"] - rate["reversal"])
        assert orig_vs_random >= 15.0, f"seed {run['seed']}: O-R margin {orig_vs_random:.1f}"
        assert random_vs_reversal >= 5.0, f"seed {run['seed']}: R-V margin {random_vs_reversal:.1f}"
        details.append(
            f"seed {run['seed']}: {100 * rate['original']:.1f}/{100 * rate['random']:.1f}"
            f"/{100 * rate['reversal']:.1f}%"
        )
    _pass(9, "ablation ordering", "original/random/reversal " + "; ".join(details))


def test_criterion_10_dual_beats_monolithic_on_pick_place(default_runs):
    margins = []
    for run in default_runs:
        margin = 100 * (run["dual_pick"] - run["mono_pick"])
        assert run["dual_pick"] >= run["mono_pick"], (
            f"seed {run['seed']}: dual {run['dual_pick']:.2f} < mono {run['mono_pick']:.2f}"
        )
        margins.append(f"seed {run['seed']}: {margin:+.1f} pts")
    _pass(10, "dual vs monolithic", "pick_place margins " + "; ".join(margins))


def test_criterion_11_reruns_reproduce_artifacts_byte_for_byte(tmp_path):
    cfg = RunConfig(
        seed=3,
        out_dir=str(tmp_path / "rerun"),
        n_tasks=3,
        demos_per_task=2,
        encoder_dim=16,
        encoder_hidden=(16,),
        router_hidden=(8,),
        expert_hidden=(16,),
        train_steps=30,
        trials_per_family=3,
        eval_workers=3,
    )

    def run_all() -> dict[str, bytes]:
        cmd_gen_data(cfg)
        labels = cmd_label(cfg)
        trained = cmd_train(cfg, labels=labels.labels_path)
        cmd_eval(cfg, mode="original")
        cmd_ablate(cfg)
        cmd_report(cfg, loss_csv=trained.loss_csv_path)
        out = Path(cfg.out_dir)
        return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()}

    first = run_all()
    second = run_all()
    assert set(first) == set(second)
    assert sorted(first) == sorted(
        [
            "dataset.jsonl",
            "labels.jsonl",
            "refine_log.json",
            "checkpoint_dual.ckpt",
            "loss_dual.csv",
            "loss_dual.svg",
            "report_original.csv",
            "ablation.csv",
        ]
    )
    for name in first:
        assert first[name] == second[name], f"{name} differs between identical runs"
    _pass(11, "determinism", f"{len(first)} artifacts byte-identical across reruns")
