"""Serialize a policy (and optionally its optimizer/RNG training state)
into the numcore checkpoint container, so training can resume bit-exactly."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

from ..errors import IoError
from ..numcore import (
    AdamState,
    Rng,
    load_checkpoint,
    mlp_from_tensors,
    mlp_to_tensors,
    save_checkpoint,
)
from .model import MonolithicModel, PolicyConfig, PolicyModel, build_monolithic, build_policy
from .training import OptState
from .types import Normalizer

_DUAL_GROUPS = ("encoder", "router", "expert_move", "expert_operate")
_MONO_GROUPS = ("encoder", "expert")


@dataclass
class LoadedPolicy:
    model: PolicyModel | MonolithicModel
    opt: OptState | None
    rng: Rng | None
    step: int | None
    meta: dict


def _config_meta(cfg: PolicyConfig) -> dict:
    d = asdict(cfg)
    for key in ("encoder_hidden", "router_hidden", "expert_hidden"):
        d[key] = list(d[key])
    return d


def _config_from_meta(d: dict) -> PolicyConfig:
    d = dict(d)
    for key in ("encoder_hidden", "router_hidden", "expert_hidden"):
        d[key] = tuple(d[key])
    return PolicyConfig(**d)


def _adam_tensors(prefix: str, state: AdamState) -> dict:
    return {**mlp_to_tensors(f"{prefix}.m", state.m), **mlp_to_tensors(f"{prefix}.v", state.v)}


def save_policy(
    path: str | Path,
    model: PolicyModel | MonolithicModel,
    *,
    opt: OptState | None = None,
    rng: Rng | None = None,
    step: int | None = None,
    extra_meta: dict | None = None,
) -> None:
    dual = isinstance(model, PolicyModel)
    groups = _DUAL_GROUPS if dual else _MONO_GROUPS
    tensors: dict = {}
    for name in groups:
        tensors.update(mlp_to_tensors(name, getattr(model, name)))
    tensors["normalizer.mean"] = model.normalizer.mean
    tensors["normalizer.std"] = model.normalizer.std
    meta: dict = {
        "arch": "dual" if dual else "monolithic",
        "config": _config_meta(model.config),
    }
    if opt is not None:
        opt_meta = {}
        for name in groups:
            state = getattr(opt, name)
            tensors.update(_adam_tensors(f"opt.{name}", state))
            opt_meta[name] = {
                "step": state.step,
                "lr": state.lr,
                "beta1": state.beta1,
                "beta2": state.beta2,
                "eps": state.eps,
            }
        meta["opt"] = opt_meta
    if rng is not None:
        meta["rng"] = rng.state()
    if step is not None:
        meta["step"] = step
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, tensors, meta)


def load_policy(path: str | Path) -> LoadedPolicy:
    tensors, meta = load_checkpoint(path)
    if "arch" not in meta or "config" not in meta:
        raise IoError(f"{path}: not a policy checkpoint (missing arch/config)")
    cfg = _config_from_meta(meta["config"])
    normalizer = Normalizer(mean=tensors["normalizer.mean"], std=tensors["normalizer.std"])
    dual = meta["arch"] == "dual"
    if dual:
        model: PolicyModel | MonolithicModel = PolicyModel(
            config=cfg,
            encoder=mlp_from_tensors("encoder", tensors),
            router=mlp_from_tensors("router", tensors),
            expert_move=mlp_from_tensors("expert_move", tensors),
            expert_operate=mlp_from_tensors("expert_operate", tensors),
            normalizer=normalizer,
        )
    else:
        model = MonolithicModel(
            config=cfg,
            encoder=mlp_from_tensors("encoder", tensors),
            expert=mlp_from_tensors("expert", tensors),
            normalizer=normalizer,
        )
    opt = None
    if "opt" in meta:
        states: dict[str, AdamState | None] = {g: None for g in ("encoder", "router", "expert_move", "expert_operate", "expert")}
        for name, om in meta["opt"].items():
            states[name] = AdamState(
                m=mlp_from_tensors(f"opt.{name}.m", tensors),
                v=mlp_from_tensors(f"opt.{name}.v", tensors),
                step=om["step"],
                lr=om["lr"],
                beta1=om["beta1"],
                beta2=om["beta2"],
                eps=om["eps"],
            )
        assert states["encoder"] is not None
        opt = OptState(
            encoder=states["encoder"],
            router=states["router"],
            expert_move=states["expert_move"],
            expert_operate=states["expert_operate"],
            expert=states["expert"],
        )
    rng = Rng.from_state(meta["rng"]) if "rng" in meta else None
    return LoadedPolicy(model=model, opt=opt, rng=rng, step=meta.get("step"), meta=meta)


__all__ = ["LoadedPolicy", "save_policy", "load_policy", "build_policy", "build_monolithic"]
