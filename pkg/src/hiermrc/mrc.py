"""Minimal random coding over a finite alphabet.

The encoder draws ``n`` proposals from the prior on a shared stream,
picks one with probability proportional to its importance ratio
target/prior, and sends only the index. The decoder replays the stream.
"""

from __future__ import annotations

import math
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dist import Pmf
from .errors import DegenerateWeights, IndexOutOfRange, SupportViolation
from .randomness import (
    SharedStream,
    StreamSeed,
    derive,
    derive_child_states,
    fallback_index,
)

__all__ = [
    "AuxDistribution",
    "IndexMessage",
    "aux_distribution",
    "decode_sample",
    "draw_proposals",
    "encode_index",
    "function_table",
    "importance_ratios",
    "mrc_estimate",
]

# Caps the (K x n) proposal matrix held in memory by ``mrc_rounds``.
_MAX_CELLS_PER_CHUNK = 1 << 21


@dataclass(frozen=True)
class AuxDistribution:
    """Categorical law over proposal positions 1..n."""

    weights: np.ndarray
    normalizer: float

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)

    def as_pmf(self) -> Pmf:
        return Pmf(range(1, self.n + 1), self.weights, validate=False)


@dataclass(frozen=True)
class IndexMessage:
    index: int
    n: int

    def __post_init__(self) -> None:
        if not 1 <= self.index <= self.n:
            raise IndexOutOfRange(f"index {self.index} outside 1..{self.n}")

    @property
    def bit_cost(self) -> float:
        return math.log2(self.n)

    @property
    def wire_bits(self) -> int:
        return math.ceil(math.log2(self.n))


def function_table(f: Sequence[float] | Mapping[Hashable, float] | np.ndarray,
                   alphabet) -> np.ndarray:
    """Values of ``f`` aligned with ``alphabet`` order."""
    if isinstance(f, Mapping):
        return np.array([float(f[s]) for s in alphabet])
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape != (len(alphabet),):
        raise ValueError(f"function table has {arr.shape} entries, alphabet "
                         f"has {len(alphabet)}")
    return arr


def importance_ratios(target: Pmf, prior: Pmf) -> np.ndarray:
    """target/prior per symbol, 0 where the prior is 0."""
    if target.alphabet != prior.alphabet:
        raise ValueError("target and prior use different alphabets")
    bad = (target.mass > 0) & (prior.mass == 0)
    if bad.any():
        sym = target.alphabet[int(np.flatnonzero(bad)[0])]
        raise SupportViolation(f"target puts mass on {sym!r}, which the prior cannot draw")
    out = np.zeros_like(prior.mass)
    pos = prior.mass > 0
    out[pos] = target.mass[pos] / prior.mass[pos]
    return out


def draw_proposal_indices(seed: StreamSeed, prior: Pmf, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one proposal")
    return derive(seed).categorical(prior.cdf(), n, fallback_index(prior.mass))


def draw_proposals(seed: StreamSeed, prior: Pmf, n: int) -> list[Hashable]:
    return [prior.alphabet[i] for i in draw_proposal_indices(seed, prior, n)]


def aux_from_ratios(ratios: np.ndarray) -> AuxDistribution:
    tau = float(ratios.sum())
    if tau <= 0:
        raise DegenerateWeights("every proposal has zero importance ratio")
    return AuxDistribution(ratios / tau, tau)


def aux_distribution(target: Pmf, prior: Pmf, proposals: Sequence[Hashable]) -> AuxDistribution:
    idx = prior.alphabet.indices(proposals)
    if np.any(prior.mass[idx] <= 0):
        raise SupportViolation("a proposal has zero prior mass")
    return aux_from_ratios(importance_ratios(target, prior)[idx])


def _invert(cdf: np.ndarray, u: float, weights: np.ndarray) -> int:
    j = int(np.searchsorted(cdf, u, side="right"))
    return j if j < cdf.shape[0] else fallback_index(weights)


def encode_index(s: SharedStream, aux: AuxDistribution) -> IndexMessage:
    j = _invert(aux.cdf(), s.next_unit(), aux.weights)
    return IndexMessage(j + 1, aux.n)


def decode_sample(seed: StreamSeed, prior: Pmf, msg: IndexMessage) -> Hashable:
    """Rebuild proposal ``msg.index`` without replaying the ones before it."""
    if not 1 <= msg.index <= msg.n:
        raise IndexOutOfRange(f"index {msg.index} outside 1..{msg.n}")
    s = derive(seed)
    s._advance(msg.index - 1)
    return prior.alphabet[int(s.categorical(prior.cdf(), 1, fallback_index(prior.mass))[0])]


def select_rows(ratios: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise ``encode_index`` on a (K, n) ratio matrix; 0-based positions."""
    tau = ratios.sum(axis=1)
    if np.any(tau <= 0):
        raise DegenerateWeights("every proposal has zero importance ratio")
    cdf = np.cumsum(ratios / tau[:, None], axis=1)
    j = (cdf <= u[:, None]).sum(axis=1)
    over = j >= ratios.shape[1]
    if over.any():
        for r in np.flatnonzero(over):
            j[r] = fallback_index(ratios[r])
    return j


def mrc_rounds(seed: StreamSeed, cdf: np.ndarray, fallback: int, n: int, K: int,
               ratio_views: Sequence[tuple[np.ndarray, np.ndarray, int]]
               ) -> list[tuple[np.ndarray, np.ndarray]]:
    """K independent MRC selections sharing proposal draws across views.

    Round ``k`` draws proposals on ``seed/k/<k>``; every view uses the
    same selection draw from ``seed/select``. Each view is
    ``(cell_to_symbol, symbol_ratios, n_view)`` and looks at the first
    ``n_view`` cells. Returns per view (0-based positions, symbol indices).
    """
    out = [(np.empty(K, np.int64), np.empty(K, np.int64)) for _ in ratio_views]
    if K == 0:
        return out
    u = derive(seed.child("select")).units(K)
    chunk = max(1, _MAX_CELLS_PER_CHUNK // max(n, 1))
    for lo in range(0, K, chunk):
        hi = min(K, lo + chunk)
        states = derive_child_states(seed, (f"k/{k}" for k in range(lo, hi)))
        cells = _kernels.categorical_draws_multi(states, cdf, n, fallback)
        for (view, ratios, n_view), (pos_out, sym_out) in zip(ratio_views, out):
            syms = view[cells[:, :n_view]]
            j = select_rows(ratios[syms], u[lo:hi])
            pos_out[lo:hi] = j
            sym_out[lo:hi] = syms[np.arange(hi - lo), j]
    return out


def mrc_estimate(seed: StreamSeed, target: Pmf, prior: Pmf, f, n: int,
                 K: int) -> tuple[float, list[IndexMessage]]:
    """Average of ``f`` over K independently coded samples."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if n < 1:
        raise ValueError("need at least one proposal")
    values = function_table(f, prior.alphabet)
    ratios = importance_ratios(target, prior)
    identity = np.arange(len(prior.alphabet))
    ((pos, syms),) = mrc_rounds(seed, prior.cdf(), fallback_index(prior.mass),
                                n, K, [(identity, ratios, n)])
    messages = [IndexMessage(int(j) + 1, n) for j in pos]
    return float(values[syms].mean()), messages


def decode_round(seed: StreamSeed, prior: Pmf, k: int, msg: IndexMessage) -> Hashable:
    """Decoder side of round ``k`` of :func:`mrc_estimate`."""
    return decode_sample(seed.child(f"k/{k}"), prior, msg)
