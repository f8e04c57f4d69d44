"""Minimal dense numerics: seeded RNG, MLPs with explicit backprop, Adam."""

from .adam import AdamState, adam_step
from .checkpoint import (
    load_checkpoint,
    mlp_activation_tag,
    mlp_from_tensors,
    mlp_to_tensors,
    save_checkpoint,
)
from .mlp import ForwardTape, MlpParams, finite_diff_grad, init_mlp, mlp_backward, mlp_forward
from .rng import Rng, rng_from_seed

__all__ = [
    "AdamState",
    "ForwardTape",
    "MlpParams",
    "Rng",
    "adam_step",
    "finite_diff_grad",
    "init_mlp",
    "load_checkpoint",
    "mlp_activation_tag",
    "mlp_backward",
    "mlp_forward",
    "mlp_from_tensors",
    "mlp_to_tensors",
    "rng_from_seed",
    "save_checkpoint",
]
