"""Report artifacts: success-rate CSVs, per-step loss CSVs, loss-curve SVG.

Artifacts embed the resolved run config and a format version as '#'-prefixed
metadata lines above the CSV header; readers in this module understand them
and plain spreadsheet tools can skip them. Wall-clock fields hold a simulated
duration derived from deterministic step counts, so artifacts stay
byte-identical across machines and runs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ContractError, IoError
from .config import FORMAT_VERSION, RunConfig, config_json

SIMULATED_SECONDS_PER_STEP = 0.05

REPORT_FIELDS = (
    "experiment_id",
    "task_family",
    "routing_mode",
    "success_rate",
    "successes",
    "trials",
    "seed",
    "wall_clock_s",
)

LOSS_FIELDS = ("step", "action_loss", "router_loss", "total_loss", "router_accuracy")


@dataclass(frozen=True)
class ReportRow:
    experiment_id: str
    task_family: str  # "press" | "pick_place" | "average"
    routing_mode: str  # "original" | "random" | "reversal" | "monolithic"
    successes: int
    trials: int
    seed: int
    wall_clock_s: float

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ContractError(f"a report row needs >= 1 trials, got {self.trials}")
        if not 0 <= self.successes <= self.trials:
            raise ContractError(
                f"successes {self.successes} outside [0, trials={self.trials}]"
            )

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


def simulated_wall_clock(total_env_steps: int) -> float:
    return round(total_env_steps * SIMULATED_SECONDS_PER_STEP, 3)


def _meta_lines(cfg: RunConfig) -> list[str]:
    return [
        f"# format_version: {FORMAT_VERSION}",
        f"# config: {config_json(cfg)}",
    ]


def write_report_csv(path: str | Path, rows: list[ReportRow], cfg: RunConfig) -> None:
    buf = io.StringIO()
    for line in _meta_lines(cfg):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for row in rows:
        writer.writerow(
            [
                row.experiment_id,
                row.task_family,
                row.routing_mode,
                repr(row.success_rate),
                row.successes,
                row.trials,
                row.seed,
                repr(row.wall_clock_s),
            ]
        )
    _write_text(Path(path), buf.getvalue())


def read_report_csv(path: str | Path) -> tuple[dict, list[ReportRow]]:
    meta, header, records = _read_csv(Path(path))
    if tuple(header) != REPORT_FIELDS:
        raise IoError(f"{path}: unexpected report header {header}")
    rows = []
    for rec in records:
        row = ReportRow(
            experiment_id=rec[0],
            task_family=rec[1],
            routing_mode=rec[2],
            successes=int(rec[4]),
            trials=int(rec[5]),
            seed=int(rec[6]),
            wall_clock_s=float(rec[7]),
        )
        if float(rec[3]) != row.success_rate:
            raise IoError(
                f"{path}: stored success_rate {rec[3]} != successes/trials "
                f"{row.success_rate!r}"
            )
        rows.append(row)
    return meta, rows


def write_loss_csv(path: str | Path, records: list[dict], cfg: RunConfig) -> None:
    buf = io.StringIO()
    for line in _meta_lines(cfg):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOSS_FIELDS)
    for rec in records:
        writer.writerow(
            [
                rec["step"],
                repr(float(rec["action_loss"])),
                repr(float(rec["router_loss"])),
                repr(float(rec["total_loss"])),
                repr(float(rec["router_accuracy"])),
            ]
        )
    _write_text(Path(path), buf.getvalue())


def read_loss_csv(path: str | Path) -> tuple[dict, list[dict]]:
    meta, header, records = _read_csv(Path(path))
    if tuple(header) != LOSS_FIELDS:
        raise IoError(f"{path}: unexpected loss header {header}")
    out = []
    for rec in records:
        out.append(
            {
                "step": int(rec[0]),
                "action_loss": float(rec[1]),
                "router_loss": float(rec[2]),
                "total_loss": float(rec[3]),
                "router_accuracy": float(rec[4]),
            }
        )
    return meta, out


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_csv(path: Path) -> tuple[dict, list[str], list[list[str]]]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    meta: dict = {}
    data_lines = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(":")
            value = value.strip()
            if key == "config":
                meta["config"] = json.loads(value)
            elif key == "format_version":
                meta["format_version"] = int(value)
        elif line.strip():
            data_lines.append(line)
    if not data_lines:
        raise IoError(f"{path}: no CSV content")
    reader = csv.reader(data_lines)
    rows = list(reader)
    return meta, rows[0], rows[1:]


# ------------------------------------------------------------------ SVG


_SVG_W, _SVG_H = 640, 360
_MARGIN = 48
_SERIES = (
    ("action_loss", "#c0392b"),
    ("router_loss", "#2471a3"),
    ("total_loss", "#1e8449"),
)


def loss_curve_svg(loss_csv: str | Path, out_path: str | Path) -> None:
    """A dependency-free polyline plot of the loss columns; output is a pure
    function of the CSV contents."""
    meta, records = read_loss_csv(loss_csv)
    if not records:
        raise IoError(f"{loss_csv}: nothing to plot")
    steps = [r["step"] for r in records]
    lo_x, hi_x = min(steps), max(steps)
    span_x = max(hi_x - lo_x, 1)
    values = [r[name] for name in ("action_loss", "router_loss", "total_loss") for r in records]
    lo_y, hi_y = min(values), max(values)
    span_y = max(hi_y - lo_y, 1e-12)

    def px(step: int) -> float:
        return _MARGIN + (step - lo_x) / span_x * (_SVG_W - 2 * _MARGIN)

    def py(v: float) -> float:
        return _SVG_H - _MARGIN - (v - lo_y) / span_y * (_SVG_H - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f"<!-- format_version: {meta.get('format_version', FORMAT_VERSION)} -->",
        f"<!-- config: {json.dumps(meta.get('config', {}), sort_keys=True)} -->",
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{_SVG_H - _MARGIN}" x2="{_SVG_W - _MARGIN}" '
        f'y2="{_SVG_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_SVG_H - _MARGIN}" '
        f'stroke="black"/>',
    ]
    for idx, (name, color) in enumerate(_SERIES):
        points = " ".join(
            f"{px(r['step']):.2f},{py(r[name]):.2f}" for r in records
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )
        parts.append(
            f'<text x="{_SVG_W - _MARGIN - 110}" y="{_MARGIN + 16 * idx}" '
            f'fill="{color}" font-size="12">{name}</text>'
        )
    parts.append(
        f'<text x="{_MARGIN}" y="{_SVG_H - 12}" font-size="12">step '
        f"({lo_x}..{hi_x}), loss ({lo_y:.4g}..{hi_y:.4g})</text>"
    )
    parts.append("</svg>")
    _write_text(Path(out_path), "\n".join(parts) + "\n")
