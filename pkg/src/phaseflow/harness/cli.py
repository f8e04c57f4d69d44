"""Command-line interface.

Usage pattern: ``phaseflow <command> [--config FILE] [--set key=value ...]``.
Flags override config-file keys; the config file is flat ``key = value``
text. Exit codes: 0 success, 2 configuration/usage, 3 I/O, 4 numeric,
5 refinement failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from ..errors import ConfigError, PhaseflowError
from .commands import (
    cmd_ablate,
    cmd_eval,
    cmd_gen_data,
    cmd_label,
    cmd_report,
    cmd_train,
)
from .config import RunConfig, load_config


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--out", help="shorthand for --set out_dir=DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaseflow",
        description="Phase-routed dual-expert flow policy: data, labels, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a demonstration dataset")
    _add_common(p)

    p = sub.add_parser("label", help="auto-label a dataset via bounded refinement")
    _add_common(p)
    p.add_argument("--dataset", help="dataset path (default: <out_dir>/dataset.jsonl)")
    p.add_argument("--backend", help="heuristic | replay:<schedule.json>")

    p = sub.add_parser("train", help="train a policy")
    _add_common(p)
    p.add_argument("--dataset", help="dataset path")
    p.add_argument("--labels", help="label file from the label command")
    p.add_argument("--arch", choices=("dual", "monolithic"), default="dual")
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint path")
    p.add_argument("--mode", help="original | random | reversal")
    p.add_argument("--oracle", action="store_true", help="evaluate the scripted oracle instead")

    p = sub.add_parser("ablate", help="run the three-mode routing comparison")
    _add_common(p)
    p.add_argument("--checkpoint", help="dual-expert checkpoint path")

    p = sub.add_parser("report", help="render the loss-curve SVG from a loss CSV")
    _add_common(p)
    p.add_argument("--loss-csv", dest="loss_csv", help="loss CSV path")

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "backend", None):
        overrides["label_backend"] = args.backend
    return load_config(args.config, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "gen-data":
            path = cmd_gen_data(cfg)
            print(f"dataset written: {path}")
        elif args.command == "label":
            summary = cmd_label(cfg, dataset=args.dataset)
            print(
                f"labeled {summary.labeled} trajectories "
                f"(agreement vs ground truth: {summary.agreement:.4f}); "
                f"log: {summary.log_path}"
            )
        elif args.command == "train":
            summary = cmd_train(
                cfg,
                dataset=args.dataset,
                labels=args.labels,
                arch=args.arch,
                resume_from=args.resume,
            )
            print(
                f"trained {summary.steps_run} steps; action loss "
                f"{summary.first_window_action_loss:.4f} -> {summary.final_window_action_loss:.4f}; "
                f"holdout router accuracy {summary.holdout_router_accuracy:.4f}; "
                f"checkpoint: {summary.checkpoint_path}"
            )
        elif args.command == "eval":
            out, rows = cmd_eval(
                cfg, checkpoint=args.checkpoint, mode=args.mode, use_oracle=args.oracle
            )
            for row in rows:
                print(
                    f"{row.routing_mode:10s} {row.task_family:10s} "
                    f"{row.successes}/{row.trials} = {row.success_rate:.3f}"
                )
            print(f"report written: {out}")
        elif args.command == "ablate":
            out, rows = cmd_ablate(cfg, checkpoint=args.checkpoint)
            for row in rows:
                print(
                    f"{row.routing_mode:10s} {row.task_family:10s} "
                    f"{row.successes}/{row.trials} = {row.success_rate:.3f}"
                )
            print(f"ablation report written: {out}")
        elif args.command == "report":
            out = cmd_report(cfg, loss_csv=args.loss_csv)
            print(f"plot written: {out}")
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except PhaseflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
