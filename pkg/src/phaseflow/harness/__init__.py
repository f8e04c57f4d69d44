"""Experiment harness: run configuration, commands, report artifacts, CLI."""

from .config import FORMAT_VERSION, RunConfig, config_json, load_config, parse_config_text
from .reportio import (
    LOSS_FIELDS,
    REPORT_FIELDS,
    ReportRow,
    loss_curve_svg,
    read_loss_csv,
    read_report_csv,
    simulated_wall_clock,
    write_loss_csv,
    write_report_csv,
)
from .commands import (
    LabelSummary,
    TrainSummary,
    cmd_ablate,
    cmd_eval,
    cmd_gen_data,
    cmd_label,
    cmd_report,
    cmd_train,
    eval_policy,
    policy_config,
    router_accuracy,
)
from .cli import build_parser, main

__all__ = [
    "FORMAT_VERSION",
    "RunConfig",
    "load_config",
    "parse_config_text",
    "config_json",
    "ReportRow",
    "REPORT_FIELDS",
    "LOSS_FIELDS",
    "write_report_csv",
    "read_report_csv",
    "write_loss_csv",
    "read_loss_csv",
    "loss_curve_svg",
    "simulated_wall_clock",
    "LabelSummary",
    "TrainSummary",
    "cmd_gen_data",
    "cmd_label",
    "cmd_train",
    "cmd_eval",
    "cmd_ablate",
    "cmd_report",
    "eval_policy",
    "policy_config",
    "router_accuracy",
    "build_parser",
    "main",
]
