"""Deterministic counter-based random number generator.

The stream is ``out_i = mix64(seed_key + (i+1) * GOLDEN)`` where ``mix64`` is
the splitmix64 finalizer. Being counter-based makes every draw addressable:
the full generator state is (seed, counter), which serializes into two
integers and survives checkpoint/resume round trips exactly.

Gaussian draws use Box-Muller and consume exactly two uniforms per sample
(the sine branch is discarded), so an oracle that knows the counter can
replay any stream segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on a uint64 array."""
    x = (x ^ (x >> _U64(30))) * _MIX1
    x = (x ^ (x >> _U64(27))) * _MIX2
    return x ^ (x >> _U64(31))


def _mix_scalar(x: int) -> int:
    return int(_mix64(np.array([x], dtype=np.uint64))[0])


@dataclass
class Rng:
    """Seeded stream of uniforms, normals and bounded integers.

    Identical (seed, counter) pairs produce bit-identical outputs on every
    platform that implements IEEE-754 doubles.
    """

    seed: int
    counter: int = field(default=0)

    def _raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words; advances the counter by n."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        key = np.array([self.seed], dtype=np.uint64)
        return _mix64(key + idx * _GOLDEN)

    def uniform(self, n: int | None = None) -> np.ndarray | float:
        """Uniform draws in [0, 1) with 53-bit resolution."""
        count = 1 if n is None else int(n)
        vals = (self._raw(count) >> _U64(11)).astype(np.float64) * (2.0**-53)
        return float(vals[0]) if n is None else vals

    def normal(self, n: int | None = None) -> np.ndarray | float:
        """Standard normal draws via Box-Muller (cosine branch only).

        Consumes exactly 2 uniforms per returned sample.
        """
        count = 1 if n is None else int(n)
        u = self.uniform(2 * count)
        u1 = 1.0 - u[0::2]  # in (0, 1]; keeps log() finite
        u2 = u[1::2]
        vals = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return float(vals[0]) if n is None else vals

    def integers(self, low: int, high: int, n: int | None = None) -> np.ndarray | int:
        """Integer draws in [low, high); consumes 1 uniform per sample."""
        if high <= low:
            raise ContractError(f"empty integer range [{low}, {high})")
        count = 1 if n is None else int(n)
        u = self.uniform(count) if n is not None else np.array([self.uniform()])
        vals = low + np.floor(u * (high - low)).astype(np.int64)
        return int(vals[0]) if n is None else vals

    def spawn(self, *keys: int) -> "Rng":
        """Independent child stream; derived from the seed, not the counter."""
        s = int(self.seed)
        for k in keys:
            s = _mix_scalar((s ^ _mix_scalar((int(k) + 1) & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF)
        return Rng(seed=s)

    def state(self) -> tuple[int, int]:
        return (int(self.seed), int(self.counter))

    @classmethod
    def from_state(cls, state: tuple[int, int]) -> "Rng":
        return cls(seed=int(state[0]), counter=int(state[1]))


def rng_from_seed(seed: int, *keys: int) -> Rng:
    """Root stream for a run, optionally narrowed by stream keys."""
    base = Rng(seed=_mix_scalar((int(seed) + 1) & 0xFFFFFFFFFFFFFFFF))
    return base.spawn(*keys) if keys else base
