"""Teacher-forced joint training of encoder, router, and experts.

Gradient flow: the action loss reaches only the expert matched to each
sample's ground-truth label (the other expert is never evaluated), plus the
shared encoder through the pooled features; the router loss reaches the
router head (scaled by lambda) and the encoder. All backprop is exact and
hand-rolled on top of numcore.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, NumericError
from ..numcore import AdamState, MlpParams, Rng, adam_step, mlp_backward, mlp_forward
from .losses import PROB_FLOOR, TrainBatchMask, router_loss_batch
from .model import MonolithicModel, PolicyConfig, PolicyModel, slot_input_matrix, softmax_columns
from .types import ActionChunk, ContextFrame, PhaseLabel


@dataclass(frozen=True)
class TrainSample:
    """One supervised example; ``chunk`` holds normalized actions, rows at
    index >= valid_rows are padding excluded from the loss."""

    frame: ContextFrame
    chunk: ActionChunk
    label: PhaseLabel
    valid_rows: int

    def __post_init__(self) -> None:
        if not 1 <= self.valid_rows <= self.chunk.horizon:
            raise ContractError(
                f"valid_rows={self.valid_rows} outside [1, {self.chunk.horizon}]"
            )


@dataclass
class PreparedBatch:
    """Fixed inputs for one optimization step; no randomness past this point."""

    slot_inputs: np.ndarray  # (encoder_in, 3B)
    slot_mask: np.ndarray  # (B, 3) bool
    sigma: np.ndarray  # (B,)
    x_sigma: np.ndarray  # (B, K)
    u: np.ndarray  # (B, K)
    mask: TrainBatchMask  # (B, K)
    labels: np.ndarray  # (B,) int64

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])


@dataclass
class LossReport:
    action_loss: float
    router_loss: float
    total_loss: float
    router_accuracy: float


@dataclass
class PolicyGrads:
    encoder: MlpParams
    router: MlpParams
    expert_move: MlpParams
    expert_operate: MlpParams


@dataclass
class OptState:
    """One Adam state per parameter group, stepped independently."""

    encoder: AdamState
    router: AdamState | None
    expert_move: AdamState | None
    expert_operate: AdamState | None
    expert: AdamState | None = None  # monolithic only

    @classmethod
    def for_model(cls, model: PolicyModel, lr: float) -> "OptState":
        return cls(
            encoder=AdamState.for_params(model.encoder, lr=lr),
            router=AdamState.for_params(model.router, lr=lr),
            expert_move=AdamState.for_params(model.expert_move, lr=lr),
            expert_operate=AdamState.for_params(model.expert_operate, lr=lr),
        )

    @classmethod
    def for_monolithic(cls, model: MonolithicModel, lr: float) -> "OptState":
        return cls(
            encoder=AdamState.for_params(model.encoder, lr=lr),
            router=None,
            expert_move=None,
            expert_operate=None,
            expert=AdamState.for_params(model.expert, lr=lr),
        )


def prepare_batch(cfg: PolicyConfig, samples: list[TrainSample], rng: Rng, eps: float = 1e-8) -> PreparedBatch:
    """Assemble one batch. Draw order (replayable): sigma, then x0."""
    if not samples:
        raise ContractError("cannot prepare an empty batch")
    b, k = len(samples), cfg.chunk_size
    slot_inputs = slot_input_matrix(cfg, [s.frame for s in samples])
    slot_mask = np.stack([s.frame.valid_token_mask for s in samples])
    mask_rows = np.zeros((b, cfg.horizon))
    actions = np.zeros((b, k))
    for i, s in enumerate(samples):
        if s.chunk.actions.shape != (cfg.horizon, cfg.action_dim):
            raise ContractError(
                f"sample {i}: chunk shape {s.chunk.actions.shape} != "
                f"({cfg.horizon}, {cfg.action_dim})"
            )
        mask_rows[i, : s.valid_rows] = 1.0
        actions[i] = s.chunk.actions.ravel()
    mask = TrainBatchMask(np.repeat(mask_rows, cfg.action_dim, axis=1), eps=eps)
    actions *= mask.m  # padded rows carry zeros regardless of input garbage
    sigma = rng.uniform(b)
    x0 = rng.normal(b * k).reshape(b, k)
    x_sigma = (1.0 - sigma)[:, None] * x0 + sigma[:, None] * actions
    return PreparedBatch(
        slot_inputs=slot_inputs,
        slot_mask=slot_mask,
        sigma=sigma,
        x_sigma=x_sigma,
        u=actions - x0,
        mask=mask,
        labels=np.array([int(s.label) for s in samples], dtype=np.int64),
    )


def _encode_pool(encoder: MlpParams, pb: PreparedBatch):
    """Shared-encoder forward over all slot columns plus masked mean pooling."""
    enc_tape = mlp_forward(encoder, pb.slot_inputs)
    b = pb.size
    d = enc_tape.output.shape[0]
    stacked = enc_tape.output.reshape(d, b, 3)
    counts = pb.slot_mask.sum(axis=1).astype(np.float64)
    pooled = (stacked * pb.slot_mask[None, :, :]).sum(axis=2) / counts[None, :]
    return enc_tape, pooled, counts


def _pool_backward(grad_pooled: np.ndarray, pb: PreparedBatch, counts: np.ndarray) -> np.ndarray:
    d, b = grad_pooled.shape
    spread = grad_pooled[:, :, None] * pb.slot_mask[None, :, :] / counts[None, :, None]
    return spread.reshape(d, 3 * b)


def _expert_forward(expert: MlpParams, pb: PreparedBatch, pooled: np.ndarray, idx: np.ndarray):
    k = pb.x_sigma.shape[1]
    x = np.empty((1 + k + pooled.shape[0], idx.size))
    x[0] = pb.sigma[idx]
    x[1 : 1 + k] = pb.x_sigma[idx].T
    x[1 + k :] = pooled[:, idx]
    return mlp_forward(expert, x)


def _router_outputs(model: PolicyModel, pooled: np.ndarray, labels: np.ndarray):
    tape = mlp_forward(model.router, pooled)
    probs = softmax_columns(tape.output)
    loss = router_loss_batch(probs, labels)
    # tie at exactly 0.5 decodes to Move, mirroring greedy_select
    pred = (probs[1] > probs[0]).astype(np.int64)
    accuracy = float(np.mean(pred == labels))
    return tape, probs, loss, accuracy


def compute_losses(model: PolicyModel, pb: PreparedBatch) -> LossReport:
    """Pure forward evaluation of the joint objective (no gradients)."""
    _, pooled, _ = _encode_pool(model.encoder, pb)
    _, _, r_loss, accuracy = _router_outputs(model, pooled, pb.labels)
    denom = pb.mask.denominator
    a_loss = 0.0
    for y in (PhaseLabel.MOVE, PhaseLabel.OPERATE):
        idx = np.flatnonzero(pb.labels == int(y))
        if idx.size == 0:
            continue
        tape = _expert_forward(model.expert_for(y), pb, pooled, idx)
        residual = tape.output - pb.u[idx].T
        a_loss += float(np.sum(pb.mask.m[idx].T * residual**2) / denom)
    total = a_loss + model.lambda_router * r_loss
    return LossReport(a_loss, r_loss, total, accuracy)


def compute_losses_and_grads(model: PolicyModel, pb: PreparedBatch) -> tuple[LossReport, PolicyGrads]:
    enc_tape, pooled, counts = _encode_pool(model.encoder, pb)
    r_tape, probs, r_loss, accuracy = _router_outputs(model, pooled, pb.labels)
    b = pb.size
    denom = pb.mask.denominator
    grad_pooled = np.zeros_like(pooled)

    a_loss = 0.0
    k = pb.x_sigma.shape[1]
    expert_grads: dict[PhaseLabel, MlpParams] = {}
    for y in (PhaseLabel.MOVE, PhaseLabel.OPERATE):
        expert = model.expert_for(y)
        idx = np.flatnonzero(pb.labels == int(y))
        if idx.size == 0:
            expert_grads[y] = expert.zeros_like()
            continue
        tape = _expert_forward(expert, pb, pooled, idx)
        residual = tape.output - pb.u[idx].T
        masked = pb.mask.m[idx].T
        a_loss += float(np.sum(masked * residual**2) / denom)
        g_v = 2.0 * masked * residual / denom
        g_expert, g_in = mlp_backward(expert, tape, g_v)
        expert_grads[y] = g_expert
        grad_pooled[:, idx] += g_in[1 + k :]

    onehot = np.zeros_like(probs)
    onehot[pb.labels, np.arange(b)] = 1.0
    g_logits = (probs - onehot) / b
    # where the clamp binds, the per-sample loss is constant: zero gradient
    g_logits[:, probs[pb.labels, np.arange(b)] < PROB_FLOOR] = 0.0
    g_router, g_pooled_router = mlp_backward(model.router, r_tape, model.lambda_router * g_logits)
    grad_pooled += g_pooled_router

    g_encoder, _ = mlp_backward(model.encoder, enc_tape, _pool_backward(grad_pooled, pb, counts))
    total = a_loss + model.lambda_router * r_loss
    report = LossReport(a_loss, r_loss, total, accuracy)
    grads = PolicyGrads(
        encoder=g_encoder,
        router=g_router,
        expert_move=expert_grads[PhaseLabel.MOVE],
        expert_operate=expert_grads[PhaseLabel.OPERATE],
    )
    return report, grads


def train_step(
    model: PolicyModel, opt: OptState, samples: list[TrainSample], rng: Rng
) -> tuple[PolicyModel, OptState, LossReport]:
    """One Adam update on encoder, router, and only the experts whose labels
    appear in the batch; the loss report reflects pre-update parameters."""
    pb = prepare_batch(model.config, samples, rng)
    report, grads = compute_losses_and_grads(model, pb)
    if not np.isfinite(report.total_loss):
        raise NumericError(
            f"non-finite loss (action={report.action_loss}, router={report.router_loss}) "
            f"on batch of {pb.size} with labels {sorted(set(pb.labels.tolist()))}"
        )
    new_encoder, s_encoder = adam_step(opt.encoder, model.encoder, grads.encoder)
    assert opt.router is not None and opt.expert_move is not None and opt.expert_operate is not None
    new_router, s_router = adam_step(opt.router, model.router, grads.router)
    present = set(pb.labels.tolist())
    new_move, s_move = model.expert_move, opt.expert_move
    if int(PhaseLabel.MOVE) in present:
        new_move, s_move = adam_step(opt.expert_move, model.expert_move, grads.expert_move)
    new_operate, s_operate = model.expert_operate, opt.expert_operate
    if int(PhaseLabel.OPERATE) in present:
        new_operate, s_operate = adam_step(opt.expert_operate, model.expert_operate, grads.expert_operate)
    new_model = model.with_groups(
        encoder=new_encoder, router=new_router, expert_move=new_move, expert_operate=new_operate
    )
    new_opt = OptState(encoder=s_encoder, router=s_router, expert_move=s_move, expert_operate=s_operate)
    return new_model, new_opt, report


def compute_losses_and_grads_mono(model: MonolithicModel, pb: PreparedBatch):
    """Baseline objective: action loss only, single expert on every sample."""
    enc_tape, pooled, counts = _encode_pool(model.encoder, pb)
    denom = pb.mask.denominator
    idx = np.arange(pb.size)
    tape = _expert_forward(model.expert, pb, pooled, idx)
    residual = tape.output - pb.u.T
    masked = pb.mask.m.T
    a_loss = float(np.sum(masked * residual**2) / denom)
    g_v = 2.0 * masked * residual / denom
    g_expert, g_in = mlp_backward(model.expert, tape, g_v)
    k = pb.x_sigma.shape[1]
    g_encoder, _ = mlp_backward(model.encoder, enc_tape, _pool_backward(g_in[1 + k :], pb, counts))
    report = LossReport(a_loss, 0.0, a_loss, 0.0)
    return report, g_encoder, g_expert


def train_step_mono(
    model: MonolithicModel, opt: OptState, samples: list[TrainSample], rng: Rng
) -> tuple[MonolithicModel, OptState, LossReport]:
    pb = prepare_batch(model.config, samples, rng)
    report, g_encoder, g_expert = compute_losses_and_grads_mono(model, pb)
    if not np.isfinite(report.total_loss):
        raise NumericError(f"non-finite loss on monolithic batch of {pb.size}")
    assert opt.expert is not None
    new_encoder, s_encoder = adam_step(opt.encoder, model.encoder, g_encoder)
    new_expert, s_expert = adam_step(opt.expert, model.expert, g_expert)
    new_model = MonolithicModel(
        config=model.config, encoder=new_encoder, expert=new_expert, normalizer=model.normalizer
    )
    new_opt = OptState(
        encoder=s_encoder, router=None, expert_move=None, expert_operate=None, expert=s_expert
    )
    return new_model, new_opt, report


def sample_balanced(
    by_label: dict[PhaseLabel, list[TrainSample]], rng: Rng, batch_size: int
) -> list[TrainSample]:
    """Equal-probability phase sampling: per slot, a fair coin picks the
    phase, then a uniform index picks the sample. Draw order: coins, indices."""
    pools = {y: s for y, s in by_label.items() if s}
    if not pools:
        raise ContractError("no training samples available")
    coins = rng.uniform(batch_size)
    picks = rng.uniform(batch_size)
    out = []
    for c, p in zip(coins, picks):
        if len(pools) == 2:
            y = PhaseLabel.MOVE if c < 0.5 else PhaseLabel.OPERATE
        else:
            y = next(iter(pools))
        pool = pools[y]
        out.append(pool[min(int(p * len(pool)), len(pool) - 1)])
    return out


def sample_uniform(dataset: list[TrainSample], rng: Rng, batch_size: int) -> list[TrainSample]:
    if not dataset:
        raise ContractError("no training samples available")
    idx = rng.integers(0, len(dataset), batch_size)
    return [dataset[i] for i in idx]
