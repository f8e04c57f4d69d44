"""Experiment commands behind the CLI.

Every command derives all randomness from RunConfig.seed through namespaced
child streams (tasks, demos, model init, training, evaluation), so rerunning
a command with the same config reproduces its artifacts byte for byte.
Evaluation tasks live in a separate stream namespace from training tasks and
never overlap them.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ContractError, IoError
from ..flowmatch import OdeConfig
from ..numcore import Rng
from ..phaselabel import (
    RefinementFailedError,
    ReplayFile,
    SegmenterBackend,
    VelocityHeuristic,
    assign_labels,
    frame_agreement,
    read_labels,
    refine_loop,
    write_labels,
)
from ..policy.checkpoint import load_policy, save_policy
from ..policy.inference import RoutingMode
from ..policy.model import (
    MonolithicModel,
    PolicyConfig,
    PolicyModel,
    build_monolithic,
    build_policy,
    encode_context,
    greedy_select,
    pool_features,
    route,
)
from ..policy.training import (
    OptState,
    TrainSample,
    sample_balanced,
    sample_uniform,
    train_step,
    train_step_mono,
)
from ..policy.types import PhaseLabel
from ..simenv import (
    InteractionKind,
    ScriptedPolicy,
    build_train_samples,
    gen_task,
    read_dataset,
    rollout,
    scripted_demo,
    success,
    write_dataset,
)
from ..simenv.dataset import DatasetView
from ..simenv.env import ACTION_DIM, INSTRUCTION_DIM, OBSERVATION_DIM, PROPRIO_DIM
from ..simenv.rollout import ChunkPolicy, mono_policy, routed_policy
from .config import FORMAT_VERSION, RunConfig
from .reportio import (
    ReportRow,
    loss_curve_svg,
    simulated_wall_clock,
    write_loss_csv,
    write_report_csv,
)

# spawn-key namespaces under the root seed
_NS_TASK = 1
_NS_DEMO = 2
_NS_MODEL = 3
_NS_TRAIN = 4
_NS_EVAL_TASK = 5
_NS_EVAL_ROLLOUT = 6

_FAMILIES = (
    ("press", InteractionKind.PRESS),
    ("pick_place", InteractionKind.PICK_PLACE),
)

_MODES = (
    ("original", RoutingMode.ORIGINAL),
    ("random", RoutingMode.RANDOM),
    ("reversal", RoutingMode.REVERSAL),
)


def policy_config(cfg: RunConfig) -> PolicyConfig:
    return PolicyConfig(
        action_dim=ACTION_DIM,
        horizon=cfg.horizon,
        instruction_dim=INSTRUCTION_DIM,
        observation_dim=OBSERVATION_DIM,
        proprio_dim=PROPRIO_DIM,
        encoder_dim=cfg.encoder_dim,
        encoder_hidden=cfg.encoder_hidden,
        router_hidden=cfg.router_hidden,
        expert_hidden=cfg.expert_hidden,
        lambda_router=cfg.lambda_router,
    )


def _paths(cfg: RunConfig) -> dict[str, Path]:
    out = Path(cfg.out_dir)
    return {
        "dataset": out / "dataset.jsonl",
        "labels": out / "labels.jsonl",
        "refine_log": out / "refine_log.json",
        "ckpt_dual": out / "checkpoint_dual.ckpt",
        "ckpt_mono": out / "checkpoint_monolithic.ckpt",
        "loss_dual": out / "loss_dual.csv",
        "loss_mono": out / "loss_monolithic.csv",
        "ablation": out / "ablation.csv",
    }


# ------------------------------------------------------------- gen-data


def cmd_gen_data(cfg: RunConfig) -> Path:
    """Sample tasks, run the scripted demonstrator, write the dataset."""
    root = Rng(cfg.seed)
    pairs = []
    for i in range(cfg.n_tasks):
        task = gen_task(root.spawn(_NS_TASK, i))
        for j in range(cfg.demos_per_task):
            demo_rng = root.spawn(_NS_DEMO, i, j)
            demo = scripted_demo(
                task,
                rng=demo_rng,
                action_noise=cfg.action_noise,
                obs_noise=cfg.obs_noise,
                start_jitter=cfg.start_jitter,
            )
            pairs.append((f"t{i:03d}/d{j:02d}", demo))
    path = _paths(cfg)["dataset"]
    meta = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "tasks": cfg.n_tasks,
        "demos_per_task": cfg.demos_per_task,
    }
    write_dataset(path, pairs, meta=meta)
    return path


# ---------------------------------------------------------------- label


@dataclass
class LabelSummary:
    labels_path: Path
    log_path: Path
    labeled: int
    failed: int
    agreement: float  # vs dataset ground truth, over successfully labeled frames


def _make_backend(cfg: RunConfig) -> SegmenterBackend:
    choice = cfg.label_backend
    if choice == "heuristic":
        return VelocityHeuristic()
    if choice.startswith("replay:"):
        return ReplayFile(path=Path(choice.split(":", 1)[1]))
    raise ConfigError(f"unknown label backend {choice!r} (use heuristic or replay:<path>)")


def cmd_label(
    cfg: RunConfig,
    dataset: str | Path | None = None,
    backend: SegmenterBackend | None = None,
) -> LabelSummary:
    """Label every trajectory via bounded refinement. All outcomes, including
    per-trajectory failures, are written to the refinement log; any failure
    raises after the log is flushed."""
    paths = _paths(cfg)
    view = read_dataset(dataset if dataset is not None else paths["dataset"])
    if backend is None:
        backend = _make_backend(cfg)

    labels_out: dict[str, np.ndarray] = {}
    log: dict[str, dict] = {}
    first_failure: RefinementFailedError | None = None
    agree_frames = total_frames = 0
    for traj_id, records in view.trajectories.items():
        speeds = np.array([float(np.linalg.norm(r.action[:2])) for r in records])
        traj_backend = (
            backend.for_trajectory(traj_id) if isinstance(backend, ReplayFile) else backend
        )
        try:
            result = refine_loop(traj_backend, speeds, budget=cfg.refine_budget)
        except RefinementFailedError as exc:
            if first_failure is None:
                first_failure = exc
            log[traj_id] = {
                "status": "failed",
                "rounds_used": exc.rounds_used,
                "errors": [
                    [str(e) for e in round_errors] for round_errors in exc.error_history
                ],
            }
            continue
        labels = assign_labels(result.schedule)
        truth = np.array([int(r.label) for r in records])
        labels_out[traj_id] = labels
        agree_frames += int((labels == truth).sum())
        total_frames += labels.size
        log[traj_id] = {
            "status": "ok",
            "rounds_used": result.rounds_used,
            "agreement_vs_ground_truth": frame_agreement(labels, truth),
        }

    overall = agree_frames / total_frames if total_frames else 0.0
    log_payload = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "trajectories": log,
        "labeled": len(labels_out),
        "failed": len(view.trajectories) - len(labels_out),
        "agreement_vs_ground_truth": overall,
    }
    try:
        paths["refine_log"].parent.mkdir(parents=True, exist_ok=True)
        paths["refine_log"].write_text(json.dumps(log_payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write refinement log: {exc}") from exc
    if labels_out:
        write_labels(paths["labels"], labels_out)

    summary = LabelSummary(
        labels_path=paths["labels"],
        log_path=paths["refine_log"],
        labeled=len(labels_out),
        failed=len(view.trajectories) - len(labels_out),
        agreement=overall,
    )
    if first_failure is not None:
        raise first_failure  # the log above records every outcome
    return summary


# ---------------------------------------------------------------- train


@dataclass
class TrainSummary:
    checkpoint_path: Path
    loss_csv_path: Path
    first_window_action_loss: float
    final_window_action_loss: float
    holdout_router_accuracy: float
    steps_run: int


def _split_holdout(view: DatasetView, every: int) -> tuple[DatasetView, DatasetView]:
    ids = list(view.trajectories)
    held = {tid for k, tid in enumerate(ids) if k % every == every - 1}
    if len(held) == len(ids):  # never hold out everything
        held = set()
    train = {tid: view.trajectories[tid] for tid in ids if tid not in held}
    hold = {tid: view.trajectories[tid] for tid in ids if tid in held}
    return (
        replace(view, trajectories=train),
        replace(view, trajectories=hold),
    )


def _by_label(samples: list[TrainSample]) -> dict[PhaseLabel, list[TrainSample]]:
    out: dict[PhaseLabel, list[TrainSample]] = {PhaseLabel.MOVE: [], PhaseLabel.OPERATE: []}
    for s in samples:
        out[s.label].append(s)
    return out


def router_accuracy(model: PolicyModel, samples: list[TrainSample]) -> float:
    if not samples:
        return 0.0
    hits = 0
    for s in samples:
        pooled = pool_features(encode_context(model, s.frame), s.frame.valid_token_mask)
        hits += greedy_select(route(model, pooled)) is s.label
    return hits / len(samples)


def cmd_train(
    cfg: RunConfig,
    dataset: str | Path | None = None,
    labels: str | Path | None = None,
    arch: str = "dual",
    resume_from: str | Path | None = None,
) -> TrainSummary:
    if arch not in ("dual", "monolithic"):
        raise ConfigError(f"arch must be dual or monolithic, got {arch!r}")
    paths = _paths(cfg)
    view = read_dataset(dataset if dataset is not None else paths["dataset"])

    overrides = None
    if arch == "dual" and labels is not None:
        overrides = read_labels(labels)
        missing = set(view.trajectories) - set(overrides)
        if missing:
            raise ContractError(
                f"label file covers {len(overrides)} trajectories but the dataset "
                f"has {len(view.trajectories)}; missing e.g. {sorted(missing)[:3]}"
            )
        label_map = {tid: [PhaseLabel(int(v)) for v in arr] for tid, arr in overrides.items()}
    else:
        label_map = None

    train_view, holdout_view = _split_holdout(view, cfg.holdout_every)
    try:
        train_samples = build_train_samples(train_view, cfg.horizon, label_map)
        holdout_samples = build_train_samples(holdout_view, cfg.horizon)
    except ValueError as exc:
        raise ContractError(str(exc)) from exc
    pools = _by_label(train_samples)

    pcfg = policy_config(cfg)
    dual = arch == "dual"
    if resume_from is not None:
        loaded = load_policy(resume_from)
        if (loaded.meta.get("arch") == "dual") != dual:
            raise ContractError(
                f"checkpoint {resume_from} holds a {loaded.meta.get('arch')} model, "
                f"cannot resume as {arch}"
            )
        model = loaded.model
        opt = loaded.opt
        trng = loaded.rng
        start_step = loaded.step or 0
        if opt is None or trng is None:
            raise ContractError(f"checkpoint {resume_from} lacks optimizer/rng state")
    else:
        init_rng = Rng(cfg.seed).spawn(_NS_MODEL, 0 if dual else 1)
        model = (
            build_policy(pcfg, init_rng, view.normalizer)
            if dual
            else build_monolithic(pcfg, init_rng, view.normalizer)
        )
        opt = (
            OptState.for_model(model, lr=cfg.learning_rate)
            if dual
            else OptState.for_monolithic(model, lr=cfg.learning_rate)
        )
        trng = Rng(cfg.seed).spawn(_NS_TRAIN, 0 if dual else 1)
        start_step = 0

    loss_records = []
    for step in range(start_step, cfg.train_steps):
        if cfg.balanced_sampling:
            batch = sample_balanced(pools, trng, cfg.batch_size)
        else:
            batch = sample_uniform(train_samples, trng, cfg.batch_size)
        if dual:
            model, opt, report = train_step(model, opt, batch, trng)
        else:
            model, opt, report = train_step_mono(model, opt, batch, trng)
        loss_records.append(
            {
                "step": step,
                "action_loss": report.action_loss,
                "router_loss": report.router_loss,
                "total_loss": report.total_loss,
                "router_accuracy": report.router_accuracy,
            }
        )

    ckpt_path = paths["ckpt_dual"] if dual else paths["ckpt_mono"]
    loss_path = paths["loss_dual"] if dual else paths["loss_mono"]
    extra = {"run_config": cfg.to_dict(), "format_version": FORMAT_VERSION}
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    save_policy(ckpt_path, model, opt=opt, rng=trng, step=cfg.train_steps, extra_meta=extra)
    write_loss_csv(loss_path, loss_records, cfg)

    window = min(10, max(1, len(loss_records)))
    first = float(np.mean([r["action_loss"] for r in loss_records[:window]])) if loss_records else float("nan")
    final = float(np.mean([r["action_loss"] for r in loss_records[-window:]])) if loss_records else float("nan")
    holdout_acc = router_accuracy(model, holdout_samples) if dual else 0.0
    return TrainSummary(
        checkpoint_path=ckpt_path,
        loss_csv_path=loss_path,
        first_window_action_loss=first,
        final_window_action_loss=final,
        holdout_router_accuracy=holdout_acc,
        steps_run=cfg.train_steps - start_step,
    )


# ----------------------------------------------------------------- eval


def _family_rows(
    cfg: RunConfig,
    policy: ChunkPolicy,
    mode_name: str,
    experiment_id: str,
) -> list[ReportRow]:
    """Fresh tasks per family, one rollout each, fanned out over worker
    threads with pre-spawned per-rollout streams and index-ordered reduction."""
    root = Rng(cfg.seed)
    mode_idx = {"original": 0, "random": 1, "reversal": 2, "monolithic": 3, "oracle": 4}.get(
        mode_name, 9
    )
    jobs = []
    for f_idx, (family, kind) in enumerate(_FAMILIES):
        for trial in range(cfg.trials_per_family):
            task = gen_task(root.spawn(_NS_EVAL_TASK, f_idx, trial), kind=kind)
            roll_rng = root.spawn(_NS_EVAL_ROLLOUT, mode_idx, f_idx, trial)
            jobs.append((f_idx, task, roll_rng))

    def run(job):
        _, task, rng = job
        outcome = rollout(
            policy,
            task,
            rng,
            max_steps=cfg.max_rollout_steps,
            exec_horizon=cfg.exec_horizon,
            obs_noise=cfg.obs_noise,
        )
        return outcome

    with ThreadPoolExecutor(max_workers=cfg.eval_workers) as pool:
        outcomes = list(pool.map(run, jobs))

    rows = []
    for f_idx, (family, _) in enumerate(_FAMILIES):
        picked = [
            (job, out) for job, out in zip(jobs, outcomes) if job[0] == f_idx
        ]
        successes = sum(1 for job, out in picked if success(out, job[1]))
        steps = sum(out.steps_used for _, out in picked)
        rows.append(
            ReportRow(
                experiment_id=experiment_id,
                task_family=family,
                routing_mode=mode_name,
                successes=successes,
                trials=cfg.trials_per_family,
                seed=cfg.seed,
                wall_clock_s=simulated_wall_clock(steps),
            )
        )
    return rows


def _policy_for(model, mode: RoutingMode, ode: OdeConfig) -> ChunkPolicy:
    if isinstance(model, PolicyModel):
        return routed_policy(model, mode, ode)
    if isinstance(model, MonolithicModel):
        return mono_policy(model, ode)
    return model  # already a chunk policy (e.g. the scripted oracle)


def eval_policy(
    cfg: RunConfig, policy_like, mode_name: str, experiment_id: str
) -> list[ReportRow]:
    mode = dict(_MODES).get(mode_name, RoutingMode.ORIGINAL)
    ode = OdeConfig(num_steps=cfg.ode_steps)
    policy = _policy_for(policy_like, mode, ode)
    return _family_rows(cfg, policy, mode_name, experiment_id)


def cmd_eval(
    cfg: RunConfig,
    checkpoint: str | Path | None = None,
    mode: str | None = None,
    use_oracle: bool = False,
) -> tuple[Path, list[ReportRow]]:
    if cfg.trials_per_family < 1:
        raise ConfigError("trials_per_family must be >= 1")
    paths = _paths(cfg)
    mode_name = mode if mode is not None else cfg.ablation_mode
    if use_oracle:
        rows = eval_policy(cfg, ScriptedPolicy(horizon=cfg.horizon), "oracle", "oracle")
        out = Path(cfg.out_dir) / "report_oracle.csv"
    else:
        ckpt = Path(checkpoint) if checkpoint is not None else paths["ckpt_dual"]
        loaded = load_policy(ckpt)
        if isinstance(loaded.model, MonolithicModel):
            mode_name = "monolithic"
        elif mode_name not in dict(_MODES):
            raise ConfigError(f"eval mode must be one of {[m for m, _ in _MODES]}")
        rows = eval_policy(cfg, loaded.model, mode_name, f"{ckpt.stem}-s{cfg.seed}")
        out = Path(cfg.out_dir) / f"report_{mode_name}.csv"
    write_report_csv(out, rows, cfg)
    return out, rows


# --------------------------------------------------------------- ablate


def cmd_ablate(
    cfg: RunConfig, checkpoint: str | Path | None = None
) -> tuple[Path, list[ReportRow]]:
    """Three-mode comparison off one checkpoint: each mode changes only the
    inference-time override, never the weights."""
    paths = _paths(cfg)
    ckpt = Path(checkpoint) if checkpoint is not None else paths["ckpt_dual"]
    loaded = load_policy(ckpt)
    if not isinstance(loaded.model, PolicyModel):
        raise ConfigError("ablation requires a dual-expert checkpoint")
    all_rows: list[ReportRow] = []
    for mode_name, _ in _MODES:
        rows = eval_policy(cfg, loaded.model, mode_name, f"{ckpt.stem}-s{cfg.seed}")
        combined = ReportRow(
            experiment_id=rows[0].experiment_id,
            task_family="average",
            routing_mode=mode_name,
            successes=sum(r.successes for r in rows),
            trials=sum(r.trials for r in rows),
            seed=cfg.seed,
            wall_clock_s=round(sum(r.wall_clock_s for r in rows), 3),
        )
        all_rows.extend(rows + [combined])
    out = paths["ablation"]
    write_report_csv(out, all_rows, cfg)
    return out, all_rows


# --------------------------------------------------------------- report


def cmd_report(cfg: RunConfig, loss_csv: str | Path | None = None) -> Path:
    source = Path(loss_csv) if loss_csv is not None else _paths(cfg)["loss_dual"]
    out = source.with_suffix(".svg")
    loss_curve_svg(source, out)
    return out
