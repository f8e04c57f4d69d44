"""Run configuration: one flat key-value file, overridable by CLI flags.

Every output artifact embeds the full resolved config, so a run can be
reproduced from any of its products. Parsing is strict: unknown keys and
untypeable values are config errors, not warnings.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigError, IoError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    # reproducibility
    seed: int = 0
    out_dir: str = "runs/default"
    # dataset
    n_tasks: int = 40
    demos_per_task: int = 3
    action_noise: float = 0.0075
    obs_noise: float = 0.0
    start_jitter: float = 0.35  # fraction of demos recorded from a random pose
    # model widths
    encoder_dim: int = 32
    encoder_hidden: tuple[int, ...] = (32,)
    router_hidden: tuple[int, ...] = (16,)
    expert_hidden: tuple[int, ...] = (128,)
    # objective / sampler
    lambda_router: float = 1.0
    ode_steps: int = 10
    horizon: int = 8
    exec_horizon: int = 2
    # optimization
    train_steps: int = 10000
    batch_size: int = 32
    learning_rate: float = 3e-3
    balanced_sampling: bool = True
    holdout_every: int = 5  # every k-th trajectory goes to the router holdout
    # labeling
    label_backend: str = "heuristic"
    refine_budget: int = 3
    # evaluation
    ablation_mode: str = "original"
    trials_per_family: int = 100
    max_rollout_steps: int = 400
    eval_workers: int = 4

    def __post_init__(self) -> None:
        counts = {
            "n_tasks": self.n_tasks,
            "demos_per_task": self.demos_per_task,
            "encoder_dim": self.encoder_dim,
            "ode_steps": self.ode_steps,
            "horizon": self.horizon,
            "exec_horizon": self.exec_horizon,
            "train_steps": self.train_steps,
            "batch_size": self.batch_size,
            "refine_budget": self.refine_budget,
            "trials_per_family": self.trials_per_family,
            "max_rollout_steps": self.max_rollout_steps,
            "eval_workers": self.eval_workers,
            "holdout_every": self.holdout_every,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name} must be a positive count, got {value}")
        for name in ("encoder_hidden", "router_hidden", "expert_hidden"):
            widths = getattr(self, name)
            object.__setattr__(self, name, tuple(int(w) for w in widths))
            if any(w < 1 for w in getattr(self, name)):
                raise ConfigError(f"{name} widths must be positive, got {widths}")
        if self.lambda_router < 0:
            raise ConfigError(f"lambda_router must be >= 0, got {self.lambda_router}")
        if not 0.0 <= self.start_jitter <= 1.0:
            raise ConfigError(f"start_jitter must be in [0, 1], got {self.start_jitter}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.ablation_mode not in ("original", "random", "reversal"):
            raise ConfigError(
                f"ablation_mode must be original|random|reversal, got {self.ablation_mode!r}"
            )
        if self.exec_horizon > self.horizon:
            raise ConfigError(
                f"exec_horizon {self.exec_horizon} cannot exceed horizon {self.horizon}"
            )

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: Any) -> Any:
    """Turn a string (or JSON-ish value) into the field's declared type."""
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    ftype = _FIELDS[name].type
    if not isinstance(raw, str):
        value = raw
    else:
        text = raw.strip()
        try:
            if ftype == "int":
                value = int(text)
            elif ftype == "float":
                value = float(text)
            elif ftype == "bool":
                lowered = text.lower()
                if lowered in ("true", "1", "yes", "on"):
                    value = True
                elif lowered in ("false", "0", "no", "off"):
                    value = False
                else:
                    raise ValueError(f"not a boolean: {text!r}")
            elif ftype.startswith("tuple"):
                value = tuple(int(p) for p in text.split(",") if p.strip())
            else:
                value = text
        except ValueError as exc:
            raise ConfigError(f"config key {name!r}: {exc}") from exc
    if isinstance(value, list):
        value = tuple(value)
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Flat ``key = value`` lines; '#' starts a comment; blanks ignored."""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        values[key] = _coerce(key, raw)
    return values


def load_config(
    path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> RunConfig:
    """File values first, then overrides on top, then defaults for the rest."""
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise IoError(f"cannot read config {p}: {exc}") from exc
        values.update(parse_config_text(text, source=str(p)))
    for key, raw in (overrides or {}).items():
        values[key] = _coerce(key, raw)
    return RunConfig(**values)


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    return RunConfig(**{k: _coerce(k, v) for k, v in data.items()})


def config_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
