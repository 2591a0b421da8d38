"""Shared randomness: labeled SplitMix64 streams that every party can rebuild.

A stream is fully determined by ``(seed, label)``. The encoder and each
decoder derive the same stream independently, so proposal lists never
have to be transmitted.
"""

from __future__ import annotations

from collections.abc import Hashable, Iterable
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dist import JointPmf, Pmf

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

__all__ = [
    "SharedStream",
    "StreamSeed",
    "derive",
    "derive_child_states",
    "fnv1a64",
    "sample_categorical",
    "sample_joint_sequence",
    "splitmix64_finalize",
]


def fnv1a64(data: bytes | str, h: int = FNV_OFFSET) -> int:
    """FNV-1a 64-bit hash; pass ``h`` to continue hashing a prefix."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def splitmix64_finalize(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class StreamSeed:
    seed: int
    label: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    def child(self, suffix: object) -> StreamSeed:
        label = f"{self.label}/{suffix}" if self.label else str(suffix)
        return StreamSeed(self.seed, label)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "label": self.label}


class SharedStream:
    """Mutable SplitMix64 cursor. Owned by exactly one party."""

    __slots__ = ("position", "state")

    def __init__(self, state: int, position: int = 0):
        self.state = state & MASK64
        self.position = position

    def copy(self) -> SharedStream:
        return SharedStream(self.state, self.position)

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        self.position += 1
        return splitmix64_finalize(self.state)

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def _advance(self, count: int) -> int:
        start = self.state
        self.state = (self.state + GAMMA * count) & MASK64
        self.position += count
        return start

    def u64s(self, count: int) -> np.ndarray:
        return _kernels.splitmix_u64(self._advance(count), count)

    def units(self, count: int) -> np.ndarray:
        return _kernels.unit_draws(self._advance(count), count)

    def categorical(self, cdf: np.ndarray, count: int, fallback: int) -> np.ndarray:
        """``count`` inverse-CDF draws (indices), one stream draw each."""
        return _kernels.categorical_draws(self._advance(count), cdf, count, fallback)

    def rejection(self, cdf: np.ndarray, fallback: int, block_of_cell: np.ndarray,
                  block: int, n_target: int, cap: int) -> tuple[np.ndarray, int, bool]:
        """Draw cells until ``n_target`` land in ``block``; advances by the raw count."""
        cells, raw, ok = _kernels.rejection_draws(
            self.state, cdf, fallback, block_of_cell, block, n_target, cap)
        self._advance(raw)
        return cells, raw, ok

    def __repr__(self) -> str:
        return f"SharedStream(state=0x{self.state:016x}, position={self.position})"


def derive(seed: StreamSeed) -> SharedStream:
    return SharedStream(splitmix64_finalize(seed.seed ^ fnv1a64(seed.label)))


def derive_child_states(seed: StreamSeed, suffixes: Iterable[object]) -> np.ndarray:
    """Initial states of ``derive(seed.child(s))`` for many suffixes at once."""
    prefix = fnv1a64(f"{seed.label}/" if seed.label else "")
    return np.array(
        [splitmix64_finalize(seed.seed ^ fnv1a64(str(s), prefix)) for s in suffixes],
        dtype=np.uint64)


def fallback_index(mass: np.ndarray) -> int:
    """Last index with positive mass; catches u beyond a cdf that sums to 1-ulp."""
    return int(np.flatnonzero(mass > 0)[-1])


def sample_categorical_index(s: SharedStream, p: Pmf) -> int:
    u = s.next_unit()
    cdf = p.cdf()
    i = int(np.searchsorted(cdf, u, side="right"))
    return i if i < len(cdf) else fallback_index(p.mass)


def sample_categorical(s: SharedStream, p: Pmf) -> Hashable:
    return p.alphabet[sample_categorical_index(s, p)]


def joint_cell_sequence(s: SharedStream, j: JointPmf, count: int) -> np.ndarray:
    """Row-major cell indices of ``count`` pair draws."""
    flat = j.flat()
    return s.categorical(np.cumsum(flat), count, fallback_index(flat))


def sample_joint_sequence(s: SharedStream, j: JointPmf,
                          count: int) -> list[tuple[Hashable, Hashable]]:
    cells = joint_cell_sequence(s, j, count)
    return [j.pair(c) for c in cells]
