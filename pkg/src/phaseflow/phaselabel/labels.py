"""Per-frame label assignment from a valid schedule, plus label-file I/O."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractError, IoError
from ..policy.types import PhaseLabel
from .schedule import Schedule
from .validate import validate


def assign_labels(schedule: Schedule) -> np.ndarray:
    """One label per frame; requires a schedule that validates cleanly.
    Coverage + no-overlap make the assignment total and single-valued."""
    errors = validate(schedule)
    if errors:
        raise ContractError(
            f"cannot assign labels from an invalid schedule: {[e.code.value for e in errors]}"
        )
    labels = np.full(schedule.total_frames, -1, dtype=np.int64)
    for phase in schedule.all_phases():
        labels[phase.start_frame_idx : phase.end_frame_idx + 1] = int(phase.phase_type)
    assert np.all(labels >= 0), "valid schedule left frames unlabeled"
    return labels


def frame_agreement(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractError(f"label arrays differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ContractError("cannot score empty label arrays")
    return float(np.mean(a == b))


def write_labels(path: str | Path, labels_by_traj: dict[str, np.ndarray]) -> None:
    """One JSON record per frame: {"traj", "frame", "label"}; trajectories
    ordered by id so the file is byte-deterministic."""
    lines = []
    for traj_id in sorted(labels_by_traj):
        for frame_idx, label in enumerate(labels_by_traj[traj_id]):
            lines.append(
                json.dumps(
                    {
                        "traj": traj_id,
                        "frame": frame_idx,
                        "label": PhaseLabel(int(label)).json_name,
                    },
                    sort_keys=True,
                )
            )
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write label file {path}: {exc}") from exc


def read_labels(path: str | Path) -> dict[str, np.ndarray]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read label file {path}: {exc}") from exc
    grouped: dict[str, list[tuple[int, int]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            grouped.setdefault(rec["traj"], []).append(
                (int(rec["frame"]), int(PhaseLabel.from_json_name(rec["label"])))
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise IoError(f"{path}:{lineno}: bad label record: {exc}") from exc
    out = {}
    for traj_id, pairs in grouped.items():
        pairs.sort()
        frames = [f for f, _ in pairs]
        if frames != list(range(len(frames))):
            raise IoError(f"{path}: trajectory '{traj_id}' has missing or duplicate frames")
        out[traj_id] = np.array([label for _, label in pairs], dtype=np.int64)
    return out
