"""Two-stage hierarchical sampler.

Stage one runs MRC over block labels: proposals are prior draws mapped
through the partition, weighted by target_C/p_C. Stage two runs MRC
inside the chosen block on rejection-filtered prior draws, weighted by
the conditional ratio. Repeated choices of the same block reuse that
block's refinement pool, so the pool is drawn once per label.

The engine works on draw "cells": plain symbols in point-to-point mode,
row-major (y1, y2) pairs in two-decoder mode. Each decoder sees a cell
through its own view array (cell -> own symbol index).
"""

from __future__ import annotations

import math
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .common_info import GkDecomposition
from .dist import JointPmf, Partition, Pmf, block_marginal, condition_on_block, kl
from .errors import (
    IndexOutOfRange,
    RejectionCapExceeded,
    SupportViolation,
    ZeroBlockMass,
)
from .mrc import (
    AuxDistribution,
    aux_distribution,
    aux_from_ratios,
    importance_ratios,
    select_rows,
)
from .randomness import StreamSeed, derive, derive_child_states, fallback_index

__all__ = [
    "CellSpace",
    "HierConfig",
    "HierEncoding",
    "HierMessage",
    "TrialBatch",
    "block_aux",
    "block_proposals",
    "conditional_aux",
    "conditional_proposals",
    "conditional_ratios",
    "decode_cells",
    "default_rejection_cap",
    "encode_cells",
    "hier_decode",
    "hier_encode",
    "hier_encode_detail",
    "hier_trials",
    "sample_size",
    "size_for",
]

CAP_FACTOR = 50


def sample_size(divergence: float, slack: float) -> int:
    """ceil(exp(divergence + slack)), robust to a divergence of -1e-17."""
    x = math.exp(divergence + slack)
    # 1e-9 relative guard: kl(q, q) can come out as a few ulps above zero
    return max(1, math.ceil(x * (1.0 - 1e-9)))


def size_for(target: Pmf, prior: Pmf, slack: float) -> int:
    """Proposal count for MRC of ``target`` against ``prior``.

    A prior with a single support symbol makes every proposal identical,
    so one proposal is already exact.
    """
    if int((prior.mass > 0).sum()) == 1:
        return 1
    return sample_size(kl(target, prior), slack)


def default_rejection_cap(n_ref: int, block_mass: float) -> int:
    if block_mass <= 0:
        return max(n_ref, 1)
    return math.ceil(CAP_FACTOR * n_ref / block_mass)


# ---------------------------------------------------------------- cell space

@dataclass(frozen=True)
class CellSpace:
    """What gets drawn from the shared stream and how decoders read it."""

    mass: np.ndarray
    cdf: np.ndarray
    fallback: int
    block_of_cell: np.ndarray
    block_mass: np.ndarray
    views: tuple[np.ndarray, ...]
    partitions: tuple[Partition, ...]

    @property
    def n_labels(self) -> int:
        return int(self.block_mass.shape[0])

    @classmethod
    def from_pmf(cls, prior: Pmf, part: Partition) -> CellSpace:
        if part.alphabet != prior.alphabet:
            raise ValueError("partition does not cover the prior's alphabet")
        mass = np.asarray(prior.mass)
        return cls(mass, np.cumsum(mass), fallback_index(mass), part.block_of,
                   block_marginal(prior, part).mass,
                   (np.arange(len(mass)),), (part,))

    @classmethod
    def from_joint(cls, joint: JointPmf, dec: GkDecomposition) -> CellSpace:
        g1 = dec.partition1.block_of
        g2 = dec.partition2.block_of
        n1, n2 = joint.shape
        rows = np.repeat(np.arange(n1), n2)
        cols = np.tile(np.arange(n2), n1)
        blocks = np.where(g1[rows] == g2[cols], g1[rows], -1)
        mass = joint.flat()
        n_labels = max(dec.partition1.n_blocks, dec.partition2.n_blocks)
        block_mass = np.zeros(n_labels)
        block_mass[:dec.block_count] = dec.p_C.mass
        return cls(mass, np.cumsum(mass), fallback_index(mass), blocks, block_mass,
                   (rows, cols), (dec.partition1, dec.partition2))

    def decoder_block_of_cell(self, i: int) -> np.ndarray:
        """Block label as decoder ``i`` computes it from its own coordinate."""
        return self.partitions[i].block_of[self.views[i]]


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class HierConfig:
    partition: Partition
    n_c: int
    n_ref: tuple[int, ...]
    rejection_cap: tuple[int, ...]
    t_c: float | None = None
    t: float | None = None

    def __post_init__(self) -> None:
        if self.n_c < 1:
            raise ValueError("n_c must be at least 1")
        if len(self.n_ref) != self.partition.n_blocks:
            raise ValueError("need one n_ref entry per block")
        if len(self.rejection_cap) != self.partition.n_blocks:
            raise ValueError("need one rejection cap per block")
        if any(n < 1 for n in self.n_ref):
            raise ValueError("every n_ref must be at least 1")
        for c, (n, cap) in enumerate(zip(self.n_ref, self.rejection_cap)):
            if cap < n:
                raise ValueError(f"rejection cap {cap} for block {c} is below n_ref {n}")

    @classmethod
    def from_divergences(cls, target: Pmf, prior: Pmf, part: Partition, t_c: float,
                         t: float, n_c: int | None = None,
                         n_ref: Sequence[int] | None = None,
                         rejection_cap: int | Sequence[int] | None = None) -> HierConfig:
        """Sizes exp(D + slack) rounded up, per stage and per block."""
        p_C = block_marginal(prior, part)
        q_C = block_marginal(target, part)
        if n_c is None:
            n_c = size_for(q_C, p_C, t_c)
        if n_ref is None:
            sizes = []
            for c in range(part.n_blocks):
                if q_C.mass[c] <= 0:
                    sizes.append(1)
                    continue
                sizes.append(size_for(condition_on_block(target, part, c),
                                      condition_on_block(prior, part, c), t))
            n_ref = sizes
        n_ref = tuple(int(n) for n in n_ref)
        if rejection_cap is None:
            caps = tuple(default_rejection_cap(n, float(m)) for n, m in zip(n_ref, p_C.mass))
        elif isinstance(rejection_cap, int):
            caps = (int(rejection_cap),) * part.n_blocks
        else:
            caps = tuple(int(x) for x in rejection_cap)
        return cls(part, int(n_c), n_ref, caps, t_c, t)


@dataclass(frozen=True)
class HierMessage:
    block_index: int
    refine_index: int
    block: int
    n_c: int
    n_ref: int
    raw_draws: int
    reused: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.block_index <= self.n_c:
            raise IndexOutOfRange(f"block index {self.block_index} outside 1..{self.n_c}")
        if not 1 <= self.refine_index <= self.n_ref:
            raise IndexOutOfRange(f"refine index {self.refine_index} outside 1..{self.n_ref}")

    @property
    def bit_costs(self) -> tuple[float, float]:
        return math.log2(self.n_c), math.log2(self.n_ref)

    @property
    def wire_bits(self) -> tuple[int, int]:
        return math.ceil(math.log2(self.n_c)), math.ceil(math.log2(self.n_ref))


# ---------------------------------------------------------------- stages

def _block_pool(seed: StreamSeed, space: CellSpace, n_c: int) -> np.ndarray:
    cells = derive(seed).categorical(space.cdf, n_c, space.fallback)
    return space.block_of_cell[cells]


def block_proposals(seed: StreamSeed, prior: Pmf, part: Partition, n_c: int) -> np.ndarray:
    """Block labels g(Y_j) of ``n_c`` prior draws."""
    if n_c < 1:
        raise ValueError("n_c must be at least 1")
    return _block_pool(seed, CellSpace.from_pmf(prior, part), n_c)


def block_aux(target_C: Pmf, p_C: Pmf, c_samples: Sequence[int]) -> AuxDistribution:
    return aux_distribution(target_C, p_C, list(c_samples))


def _refinement_pool(seed: StreamSeed, space: CellSpace, block_of_cell: np.ndarray,
                     c: int, n_target: int, cap: int) -> tuple[np.ndarray, int]:
    if space.block_mass[c] <= 0:
        raise ZeroBlockMass(f"block {c} has zero prior probability")
    cells, raw, ok = derive(seed).rejection(space.cdf, space.fallback, block_of_cell,
                                            c, n_target, cap)
    if not ok:
        raise RejectionCapExceeded(
            f"block {c}: {len(cells)} of {n_target} proposals accepted after "
            f"{raw} draws (cap {cap}) on stream {seed.label!r}",
            block=c, label=seed.label, seed=seed.seed)
    return cells, raw


def conditional_proposals(seed: StreamSeed, prior: Pmf | JointPmf,
                          part: Partition | GkDecomposition, c: int, n_target: int,
                          cap: int) -> tuple[list[Hashable], int]:
    """Prior draws kept only when their block is ``c``, plus the raw count."""
    if cap < n_target:
        raise ValueError("cap must be at least n_target")
    if isinstance(prior, JointPmf):
        if not isinstance(part, GkDecomposition):
            raise TypeError("joint priors need a GkDecomposition")
        space = CellSpace.from_joint(prior, part)
        cells, raw = _refinement_pool(seed, space, space.block_of_cell, c, n_target, cap)
        return [prior.pair(int(x)) for x in cells], raw
    space = CellSpace.from_pmf(prior, part)
    cells, raw = _refinement_pool(seed, space, space.block_of_cell, c, n_target, cap)
    return [prior.alphabet[int(x)] for x in cells], raw


def conditional_aux(target_cond: Pmf, prior_cond: Pmf,
                    proposals: Sequence[Hashable]) -> AuxDistribution:
    return aux_distribution(target_cond, prior_cond, proposals)


def conditional_ratios(target: Pmf, prior: Pmf, part: Partition) -> np.ndarray:
    """Per symbol, q(x|c)/p(x|c) for its own block c; 0 off the target support."""
    q_C = block_marginal(target, part).mass
    p_C = block_marginal(prior, part).mass
    if np.any((q_C > 0) & (p_C == 0)):
        raise SupportViolation("target puts mass on a block the prior never visits")
    out = np.zeros(len(prior.alphabet))
    for c in range(part.n_blocks):
        if q_C[c] <= 0:
            continue
        inside = part.block_of == c
        r = importance_ratios(condition_on_block(target, part, c),
                              condition_on_block(prior, part, c))
        out[inside] = r[inside]
    return out


# ---------------------------------------------------------------- engine

@dataclass
class HierEncoding:
    """Everything the encoder computed; ``messages[i]`` goes to decoder i."""

    messages: list[list[HierMessage]]
    selected: list[np.ndarray]
    blocks: np.ndarray
    block_pool: np.ndarray
    block_weights: AuxDistribution
    pools: dict[int, np.ndarray] = field(default_factory=dict)
    pool_raw: dict[int, int] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return int(self.blocks.shape[0])

    def fresh_raw_draws(self) -> int:
        """Prior draws the encoder spent on refinement pools (each counted once)."""
        return sum(self.pool_raw.values())


def encode_cells(seed: StreamSeed, space: CellSpace, ratio_C: np.ndarray,
                 cond_ratios: Sequence[np.ndarray], n_c: int,
                 n_ref: Sequence[Sequence[int]], caps: Sequence[int],
                 K: int) -> HierEncoding:
    """Shared block stage, then one refinement per decoder.

    ``ratio_C`` is q_C/p_C per block label. ``cond_ratios[i]`` maps decoder
    i's symbols to their conditional ratio; ``n_ref[i][c]`` is its pool size.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    pool = _block_pool(seed.child("block"), space, n_c)
    block_w = aux_from_ratios(ratio_C[pool])
    cdf_b = block_w.cdf()
    u_b = derive(seed.child("select/block")).units(K)
    m = np.searchsorted(cdf_b, u_b, side="right")
    m[m >= n_c] = fallback_index(block_w.weights)
    chosen = pool[m]

    n_dec = len(cond_ratios)
    pools: dict[int, np.ndarray] = {}
    pool_raw: dict[int, int] = {}
    dec_raw: dict[tuple[int, int], int] = {}
    auxes: dict[tuple[int, int], np.ndarray] = {}
    for c in sorted(set(chosen.tolist())):
        sizes = [n_ref[i][c] for i in range(n_dec)]
        cells, raw = _refinement_pool(seed.child(f"refine/{c}"), space,
                                      space.block_of_cell, c, max(sizes), caps[c])
        pools[c] = cells
        pool_raw[c] = raw
        for i, n_i in enumerate(sizes):
            if n_i == max(sizes):
                dec_raw[i, c] = raw
            else:
                # raw count at the n_i-th acceptance: the prefix of the same stream
                dec_raw[i, c] = _refinement_pool(seed.child(f"refine/{c}"), space,
                                                 space.block_of_cell, c, n_i, caps[c])[1]
            syms = space.views[i][cells[:n_i]]
            auxes[i, c] = aux_from_ratios(cond_ratios[i][syms]).cdf()

    messages: list[list[HierMessage]] = []
    selected: list[np.ndarray] = []
    for i in range(n_dec):
        suffix = "select/refine" if n_dec == 1 else f"select/refine/{i}"
        u_r = derive(seed.child(suffix)).units(K)
        msgs: list[HierMessage] = []
        sel = np.empty(K, dtype=np.int64)
        seen: set[int] = set()
        for k in range(K):
            c = int(chosen[k])
            cdf = auxes[i, c]
            n_i = n_ref[i][c]
            j = int(np.searchsorted(cdf, u_r[k], side="right"))
            if j >= n_i:
                j = fallback_index(np.diff(cdf, prepend=0.0))
            sel[k] = space.views[i][pools[c][j]]
            msgs.append(HierMessage(int(m[k]) + 1, j + 1, c, n_c, n_i,
                                    dec_raw[i, c], reused=c in seen))
            seen.add(c)
        messages.append(msgs)
        selected.append(sel)
    return HierEncoding(messages, selected, chosen, pool, block_w, pools, pool_raw)


def decode_cells(seed: StreamSeed, space: CellSpace, i: int, msg: HierMessage,
                 caps: Sequence[int]) -> int:
    """Decoder ``i``'s symbol index, rebuilt from its own view of the stream."""
    if not 1 <= msg.block_index <= msg.n_c:
        raise IndexOutOfRange(f"block index {msg.block_index} outside 1..{msg.n_c}")
    mine = space.decoder_block_of_cell(i)
    s = derive(seed.child("block"))
    s._advance(msg.block_index - 1)
    c = int(mine[s.categorical(space.cdf, 1, space.fallback)[0]])
    if not 1 <= msg.refine_index <= msg.n_ref:
        raise IndexOutOfRange(f"refine index {msg.refine_index} outside 1..{msg.n_ref}")
    cells, _ = _refinement_pool(seed.child(f"refine/{c}"), space, mine, c,
                                msg.refine_index, caps[c])
    return int(space.views[i][cells[-1]])


def _point_setup(target: Pmf, prior: Pmf, cfg: HierConfig):
    part = cfg.partition
    space = CellSpace.from_pmf(prior, part)
    q_C = block_marginal(target, part)
    ratio_C = importance_ratios(q_C, Pmf(part.block_alphabet, space.block_mass,
                                         validate=False))
    return space, ratio_C, conditional_ratios(target, prior, part)


def hier_encode_detail(seed: StreamSeed, target: Pmf, prior: Pmf, cfg: HierConfig,
                       K: int) -> HierEncoding:
    space, ratio_C, cond = _point_setup(target, prior, cfg)
    return encode_cells(seed, space, ratio_C, [cond], cfg.n_c, [cfg.n_ref],
                        cfg.rejection_cap, K)


def hier_encode(seed: StreamSeed, target: Pmf, prior: Pmf, cfg: HierConfig,
                K: int) -> list[HierMessage]:
    return hier_encode_detail(seed, target, prior, cfg, K).messages[0]


def hier_decode(seed: StreamSeed, prior: Pmf, part: Partition, cfg: HierConfig,
                msg: HierMessage) -> Hashable:
    space = CellSpace.from_pmf(prior, part)
    return prior.alphabet[decode_cells(seed, space, 0, msg, cfg.rejection_cap)]


# ---------------------------------------------------------------- batched trials

# Caps the (trials x draws) matrices held at once by ``hier_trials``.
_TRIAL_CELLS = 1 << 21


@dataclass(frozen=True)
class TrialBatch:
    """Independent single-round transmissions; row t is trial t."""

    blocks: np.ndarray
    selected: list[np.ndarray]
    raw_draws: list[np.ndarray]
    pool_raw: np.ndarray


def _first_units(seed: StreamSeed, suffixes: list[str]) -> np.ndarray:
    states = derive_child_states(seed, suffixes)
    return _kernels.unit_draws_multi(states, 1)[:, 0]


def _accepted_rows(states: np.ndarray, space: CellSpace, c: int, n_max: int,
                   cap: int, label: str) -> tuple[np.ndarray, np.ndarray]:
    """First ``n_max`` accepted cells per state and the raw count at each acceptance."""
    T = states.shape[0]
    acc = np.empty((T, n_max), dtype=np.int64)
    raw_at = np.empty((T, n_max), dtype=np.int64)
    width = int(min(cap, math.ceil(2 * n_max / space.block_mass[c]) + 32))
    cells = _kernels.categorical_draws_multi(states, space.cdf, width, space.fallback)
    hit = space.block_of_cell[cells] == c
    rank = np.cumsum(hit, axis=1) - 1
    rows, cols = np.nonzero(hit & (rank < n_max))
    acc[rows, rank[rows, cols]] = cells[rows, cols]
    raw_at[rows, rank[rows, cols]] = cols + 1
    for t in np.flatnonzero(rank[:, -1] < n_max - 1):
        # rare long waits: finish this row with the scalar kernel
        got, used, ok = _kernels.rejection_draws(int(states[t]), space.cdf, space.fallback,
                                                 space.block_of_cell, c, n_max, cap)
        if not ok:
            raise RejectionCapExceeded(
                f"block {c}: {len(got)} of {n_max} proposals accepted within cap {cap} "
                f"on trial {label}", block=c, label=label)
        acc[t] = got
        hit_t = space.block_of_cell[_kernels.categorical_draws(
            int(states[t]), space.cdf, used, space.fallback)] == c
        raw_at[t] = np.flatnonzero(hit_t) + 1
    return acc, raw_at


def hier_trials(seed: StreamSeed, space: CellSpace, ratio_C: np.ndarray,
                cond_ratios: Sequence[np.ndarray], n_c: int,
                n_ref: Sequence[Sequence[int]], caps: Sequence[int],
                trials: int) -> TrialBatch:
    """``trials`` independent one-round encodes, vectorised.

    Trial t reads the same streams as ``encode_cells(seed.child(t), ..., K=1)``
    and makes the same selections.
    """
    n_dec = len(cond_ratios)
    blocks = np.empty(trials, dtype=np.int64)
    selected = [np.empty(trials, dtype=np.int64) for _ in range(n_dec)]
    raws = [np.empty(trials, dtype=np.int64) for _ in range(n_dec)]
    pool_raw = np.empty(trials, dtype=np.int64)
    step = max(1, _TRIAL_CELLS // max(n_c, 1))
    for lo in range(0, trials, step):
        ts = range(lo, min(trials, lo + step))
        pool = space.block_of_cell[_kernels.categorical_draws_multi(
            derive_child_states(seed, [f"{t}/block" for t in ts]), space.cdf, n_c,
            space.fallback)]
        m = select_rows(ratio_C[pool], _first_units(seed, [f"{t}/select/block" for t in ts]))
        blocks[lo:lo + len(ts)] = pool[np.arange(len(ts)), m]
    for c in np.unique(blocks).tolist():
        rows = np.flatnonzero(blocks == c)
        sizes = [int(n_ref[i][c]) for i in range(n_dec)]
        n_max = max(sizes)
        step = max(1, _TRIAL_CELLS // max(n_max, 1))
        for lo in range(0, rows.shape[0], step):
            r = rows[lo:lo + step]
            acc, raw_at = _accepted_rows(
                derive_child_states(seed, [f"{t}/refine/{c}" for t in r]), space, c,
                n_max, int(caps[c]), f"{seed.label}/refine/{c}")
            pool_raw[r] = raw_at[:, -1]
            for i, n_i in enumerate(sizes):
                suffix = "select/refine" if n_dec == 1 else f"select/refine/{i}"
                syms = space.views[i][acc[:, :n_i]]
                j = select_rows(cond_ratios[i][syms],
                                _first_units(seed, [f"{t}/{suffix}" for t in r]))
                selected[i][r] = syms[np.arange(r.shape[0]), j]
                raws[i][r] = raw_at[:, n_i - 1]
    return TrialBatch(blocks, selected, raws, pool_raw)
