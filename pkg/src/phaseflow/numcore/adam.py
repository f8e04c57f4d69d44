"""Adam optimizer over MlpParams, value-semantics (returns new objects)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError
from .mlp import MlpParams


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameters they update."""

    m: MlpParams
    v: MlpParams
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), lr=lr, **kw)


def adam_step(state: AdamState, params: MlpParams, grads: MlpParams) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; increments the step counter."""
    if params.layer_sizes != grads.layer_sizes:
        raise DimensionError(
            f"gradient layout {grads.layer_sizes} does not match parameters {params.layer_sizes}"
        )
    for i, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        for name, g in (("weight", gw), ("bias", gb)):
            if not np.all(np.isfinite(g)):
                bad = np.argwhere(~np.isfinite(g))[0]
                raise NumericError(f"non-finite gradient in layer {i} {name} at index {tuple(bad)}")
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_w, new_b = [], []
    m_w, m_b, v_w, v_b = [], [], [], []
    for w, b, gw, gb, mw, mb, vw, vb in zip(
        params.weights, params.biases, grads.weights, grads.biases,
        state.m.weights, state.m.biases, state.v.weights, state.v.biases,
    ):
        nmw = state.beta1 * mw + (1.0 - state.beta1) * gw
        nmb = state.beta1 * mb + (1.0 - state.beta1) * gb
        nvw = state.beta2 * vw + (1.0 - state.beta2) * gw * gw
        nvb = state.beta2 * vb + (1.0 - state.beta2) * gb * gb
        new_w.append(w - state.lr * (nmw / c1) / (np.sqrt(nvw / c2) + state.eps))
        new_b.append(b - state.lr * (nmb / c1) / (np.sqrt(nvb / c2) + state.eps))
        m_w.append(nmw)
        m_b.append(nmb)
        v_w.append(nvw)
        v_b.append(nvb)
    new_state = AdamState(
        m=MlpParams(m_w, m_b), v=MlpParams(v_w, v_b), step=t,
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
    )
    return MlpParams(new_w, new_b), new_state
