"""Reproducible, independent noise streams.

Every stream is a Philox counter-based generator keyed by the 128-bit value
``(stream_id << 64) | master_seed``. Nothing here touches global RNG state,
so trials can run in any order or in parallel and produce the same bits.

Transforms of the raw 64-bit words (fixed so results are reproducible):

* uniform:  ``u = ((w >> 12) + 0.5) * 2**-52``, strictly inside (0, 1); with 53
  bits the top word would round up to exactly 1
* Laplace:  inverse CDF, ``-b * sign(u - 1/2) * log(1 - 2|u - 1/2|)``
* Gaussian: Box-Muller on consecutive uniform pairs ``(u1, u2)``, giving
  ``r cos(2 pi u2)`` then ``r sin(2 pi u2)`` with ``r = sqrt(-2 log u1)``
"""
from __future__ import annotations

import dataclasses
import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # splitmix64 finaliser
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def purpose_hash(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def derive_stream_id(master_seed: int, trial_index: int, purpose: str) -> int:
    """Mixes (master_seed, trial_index, purpose) into a 64-bit stream id."""
    z = _mix64((master_seed & _MASK64) ^ _GOLDEN)
    z = _mix64(z ^ ((trial_index & _MASK64) * _GOLDEN & _MASK64))
    return _mix64(z ^ purpose_hash(purpose))


@dataclasses.dataclass(frozen=True)
class RandomSource:
    """Names one noise stream; equal sources always replay equal bits."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= value <= _MASK64:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {value}")

    @classmethod
    def for_trial(cls, master_seed: int, trial_index: int, purpose: str) -> RandomSource:
        return cls(master_seed, derive_stream_id(master_seed, trial_index, purpose))

    def child(self, trial_index: int, purpose: str) -> RandomSource:
        return RandomSource.for_trial(self.master_seed ^ self.stream_id, trial_index, purpose)

    def bit_generator(self) -> np.random.Philox:
        return np.random.Philox(key=(self.stream_id << 64) | self.master_seed)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(self.bit_generator())

    def uniforms(self, count: int) -> np.ndarray:
        return raw_to_uniform(self.bit_generator().random_raw(count))

    def laplace(self, count: int, scale: float = 1.0) -> np.ndarray:
        return laplace_from_uniform(self.uniforms(count), scale)

    def gaussian(self, count: int, scale: float = 1.0) -> np.ndarray:
        pairs = (count + 1) // 2
        return box_muller(self.uniforms(2 * pairs), scale)[:count]


def raw_to_uniform(words: np.ndarray) -> np.ndarray:
    return ((np.asarray(words, dtype=np.uint64) >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def laplace_from_uniform(u: np.ndarray, scale: float) -> np.ndarray:
    c = u - 0.5
    return -scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))


def box_muller(u: np.ndarray, scale: float) -> np.ndarray:
    u1 = u[0::2]
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(u.shape[0], dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return scale * out
