"""Line-delimited dataset files.

Layout: a header object on the first line (format version, config echo,
per-dimension action normalization stats, bookkeeping counts), then one
object per frame, written in trajectory order. All floats go through
``repr``-faithful JSON, so a fixed seed produces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import IoError
from ..policy.types import ActionChunk, ContextFrame, Normalizer, PhaseLabel
from .demo import Trajectory

FORMAT_VERSION = 1
_HEADER_KIND = "phase-routed-demos"


@dataclass(frozen=True)
class FrameRecord:
    traj_id: str
    frame_index: int
    instruction: np.ndarray
    observation: np.ndarray
    proprio: np.ndarray
    action: np.ndarray
    label: PhaseLabel

    def context(self) -> ContextFrame:
        return ContextFrame(
            instruction_features=self.instruction.copy(),
            observation_features=self.observation.copy(),
            proprio_state=self.proprio.copy(),
        )


@dataclass(frozen=True)
class DatasetView:
    meta: dict
    normalizer: Normalizer
    counts: dict
    trajectories: dict[str, tuple[FrameRecord, ...]]  # insertion = file order

    @property
    def n_frames(self) -> int:
        return sum(len(v) for v in self.trajectories.values())


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _floats(arr: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(arr).ravel()]


def fit_action_normalizer(trajectories: Sequence[Trajectory]) -> Normalizer:
    rows = np.concatenate([[f.action for f in t.frames] for t in trajectories])
    return Normalizer.fit(rows)


def write_dataset(
    path: str | Path,
    trajectories: Sequence[tuple[str, Trajectory]],
    meta: Mapping | None = None,
) -> None:
    """``trajectories`` pairs a stable id (e.g. "t003/d01") with a demo."""
    if not trajectories:
        raise ValueError("refusing to write an empty dataset")
    normalizer = fit_action_normalizer([t for _, t in trajectories])
    header = {
        "kind": _HEADER_KIND,
        "format_version": FORMAT_VERSION,
        "meta": dict(meta or {}),
        "action_mean": _floats(normalizer.mean),
        "action_std": _floats(normalizer.std),
        "counts": {
            "demos": len(trajectories),
            "frames": sum(t.total_frames for _, t in trajectories),
        },
    }
    lines = [_dumps(header)]
    for traj_id, traj in trajectories:
        for idx, frame in enumerate(traj.frames):
            lines.append(
                _dumps(
                    {
                        "traj": traj_id,
                        "frame": idx,
                        "instruction": _floats(frame.context.instruction_features),
                        "observation": _floats(frame.context.observation_features),
                        "proprio": _floats(frame.context.proprio_state),
                        "action": _floats(frame.action),
                        "label": frame.label.json_name,
                    }
                )
            )
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write dataset to {target}: {exc}") from exc


def read_dataset(path: str | Path) -> DatasetView:
    source = Path(path)
    try:
        text = source.read_text()
    except OSError as exc:
        raise IoError(f"cannot read dataset {source}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise IoError(f"dataset {source} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise IoError(f"dataset {source}: bad header: {exc}") from exc
    if header.get("kind") != _HEADER_KIND or header.get("format_version") != FORMAT_VERSION:
        raise IoError(
            f"dataset {source}: unsupported header "
            f"(kind={header.get('kind')!r}, version={header.get('format_version')!r})"
        )
    trajectories: dict[str, list[FrameRecord]] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(raw)
            record = FrameRecord(
                traj_id=rec["traj"],
                frame_index=int(rec["frame"]),
                instruction=np.array(rec["instruction"], dtype=np.float64),
                observation=np.array(rec["observation"], dtype=np.float64),
                proprio=np.array(rec["proprio"], dtype=np.float64),
                action=np.array(rec["action"], dtype=np.float64),
                label=PhaseLabel.from_json_name(rec["label"]),
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise IoError(f"dataset {source}: line {lineno}: {exc}") from exc
        trajectories.setdefault(record.traj_id, []).append(record)
    normalizer = Normalizer(
        mean=np.array(header["action_mean"], dtype=np.float64),
        std=np.array(header["action_std"], dtype=np.float64),
    )
    return DatasetView(
        meta=header.get("meta", {}),
        normalizer=normalizer,
        counts=header.get("counts", {}),
        trajectories={k: tuple(v) for k, v in trajectories.items()},
    )


def build_train_samples(
    view: DatasetView,
    horizon: int,
    label_overrides: Mapping[str, Sequence[PhaseLabel]] | None = None,
):
    """Sliding-window supervised examples: one per frame, the window padded
    with zero rows past the trajectory end (excluded via valid_rows). The
    chunk's routing label is the label of its first frame; ``label_overrides``
    substitutes auto-generated labels for the recorded ground truth."""
    from ..policy.training import TrainSample

    samples = []
    for traj_id, frames in view.trajectories.items():
        t_total = len(frames)
        labels: Sequence[PhaseLabel]
        if label_overrides is not None and traj_id in label_overrides:
            labels = label_overrides[traj_id]
            if len(labels) != t_total:
                raise ValueError(
                    f"{traj_id}: {len(labels)} override labels for {t_total} frames"
                )
        else:
            labels = [f.label for f in frames]
        actions = np.stack([f.action for f in frames])
        for t in range(t_total):
            valid = min(horizon, t_total - t)
            window = np.zeros((horizon, actions.shape[1]))
            window[:valid] = actions[t : t + valid]
            normalized = view.normalizer.normalize(window)
            normalized[valid:] = 0.0
            samples.append(
                TrainSample(
                    frame=frames[t].context(),
                    chunk=ActionChunk(normalized),
                    label=labels[t],
                    valid_rows=valid,
                )
            )
    return samples


__all__ = [
    "FORMAT_VERSION",
    "DatasetView",
    "FrameRecord",
    "build_train_samples",
    "fit_action_normalizer",
    "read_dataset",
    "write_dataset",
]
