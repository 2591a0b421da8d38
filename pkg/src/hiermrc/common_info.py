"""Gacs-Korner common part of a two-decoder joint prior.

The common variable is the label of the connected component of the
bipartite support graph that a symbol belongs to. Both decoders can
compute it from their own coordinate alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dist import (
    Alphabet,
    JointPmf,
    Partition,
    Pmf,
    entropy,
    marginals,
    mutual_information,
    nats_to_bits,
)
from .errors import ZeroBlockMass

__all__ = [
    "GkDecomposition",
    "GkVerification",
    "conditional_joint",
    "decomposition_from_partitions",
    "gk_decompose",
    "verify_common_variable",
]


@dataclass(frozen=True)
class GkDecomposition:
    partition1: Partition
    partition2: Partition
    block_count: int
    p_C: Pmf
    cond1: tuple[Pmf, ...]
    cond2: tuple[Pmf, ...]
    cgk_nats: float
    atol: float = 0.0

    @property
    def cgk_bits(self) -> float:
        return nats_to_bits(self.cgk_nats)

    def blocks(self) -> list[tuple[tuple, tuple]]:
        """(decoder-1 symbols, decoder-2 symbols) per real block."""
        out = []
        for c in range(self.block_count):
            a = self.partition1.alphabet
            b = self.partition2.alphabet
            out.append((tuple(a[i] for i in self.partition1.members(c)),
                        tuple(b[i] for i in self.partition2.members(c))))
        return out

    def to_dict(self) -> dict:
        return {
            "block_count": self.block_count,
            "blocks": [{"decoder1": list(b1), "decoder2": list(b2)}
                       for b1, b2 in self.blocks()],
            "p_C": self.p_C.mass.tolist(),
            "cgk_nats": self.cgk_nats,
            "cgk_bits": self.cgk_bits,
            "atol": self.atol,
        }


def _components(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Component labels for rows and columns; -1 for isolated symbols.

    Labels follow first appearance when scanning rows in order.
    """
    n1, n2 = edges.shape
    rows = np.full(n1, -1, dtype=np.int64)
    cols = np.full(n2, -1, dtype=np.int64)
    label = 0
    for start in range(n1):
        if rows[start] >= 0 or not edges[start].any():
            continue
        rows[start] = label
        queue: deque[tuple[int, int]] = deque([(0, start)])
        while queue:
            side, v = queue.popleft()
            if side == 0:
                for w in np.flatnonzero(edges[v]):
                    if cols[w] < 0:
                        cols[w] = label
                        queue.append((1, int(w)))
            else:
                for w in np.flatnonzero(edges[:, v]):
                    if rows[w] < 0:
                        rows[w] = label
                        queue.append((0, int(w)))
        label += 1
    return rows, cols, label


def _block_conditionals(j: JointPmf, part1: Partition, part2: Partition,
                        n_blocks: int, retained: np.ndarray
                        ) -> tuple[np.ndarray, tuple[Pmf, ...], tuple[Pmf, ...]]:
    masses = np.zeros(n_blocks)
    cond1: list[Pmf] = []
    cond2: list[Pmf] = []
    for c in range(n_blocks):
        sub = np.where(np.outer(part1.block_of == c, part2.block_of == c),
                       retained, 0.0)
        total = float(sub.sum())
        masses[c] = total
        if total > 0:
            cond1.append(Pmf(j.alphabet1, sub.sum(axis=1) / total, validate=False))
            cond2.append(Pmf(j.alphabet2, sub.sum(axis=0) / total, validate=False))
        else:
            cond1.append(Pmf(j.alphabet1, np.zeros(len(j.alphabet1)), validate=False))
            cond2.append(Pmf(j.alphabet2, np.zeros(len(j.alphabet2)), validate=False))
    return masses, tuple(cond1), tuple(cond2)


def gk_decompose(j: JointPmf, atol: float = 0.0) -> GkDecomposition:
    """Connected components of the support graph, entries ``> atol``.

    Symbols without any support edge go to one extra zero-mass block,
    labelled ``block_count``, which is left out of ``p_C``.
    """
    if atol < 0:
        raise ValueError("atol must be non-negative")
    edges = j.mass > atol
    rows, cols, n_blocks = _components(edges)
    rows[rows < 0] = n_blocks
    cols[cols < 0] = n_blocks
    part1 = Partition(j.alphabet1, rows)
    part2 = Partition(j.alphabet2, cols)
    retained = np.where(edges, j.mass, 0.0)
    masses, cond1, cond2 = _block_conditionals(j, part1, part2, n_blocks, retained)
    if atol > 0:
        masses = masses / masses.sum()
    p_C = Pmf(Alphabet.range(n_blocks), masses, validate=False)
    return GkDecomposition(part1, part2, n_blocks, p_C, cond1, cond2,
                           entropy(p_C), atol)


def decomposition_from_partitions(j: JointPmf, part1: Partition,
                                  part2: Partition) -> GkDecomposition:
    """Wrap hand-built partitions (not necessarily valid) for verification."""
    n_blocks = max(part1.n_blocks, part2.n_blocks)
    masses, cond1, cond2 = _block_conditionals(j, part1, part2, n_blocks, j.mass)
    p_C = Pmf(Alphabet.range(n_blocks), masses, validate=False)
    return GkDecomposition(part1, part2, n_blocks, p_C, cond1, cond2, entropy(p_C))


@dataclass
class GkVerification:
    disagreement_prob: float
    max_ci_residual: float
    splittable_blocks: list[int] = field(default_factory=list)
    tol: float = 1e-12

    @property
    def agreement_ok(self) -> bool:
        return self.disagreement_prob <= self.tol

    @property
    def ci_ok(self) -> bool:
        return self.max_ci_residual <= self.tol

    @property
    def maximal(self) -> bool:
        return not self.splittable_blocks

    @property
    def passed(self) -> bool:
        return self.agreement_ok and self.ci_ok and self.maximal

    def to_dict(self) -> dict:
        return {
            "disagreement_prob": self.disagreement_prob,
            "agreement_ok": self.agreement_ok,
            "max_ci_residual": self.max_ci_residual,
            "ci_ok": self.ci_ok,
            "maximal": self.maximal,
            "splittable_blocks": self.splittable_blocks,
            "passed": self.passed,
        }


def verify_common_variable(j: JointPmf, dec: GkDecomposition,
                           tol: float = 1e-12) -> GkVerification:
    """Check agreement, within-block independence and maximality.

    A block is reported as splittable when its support subgraph is
    disconnected: splitting it would give a common variable with more
    entropy, so the partition is not the Gacs-Korner one.
    """
    g1 = dec.partition1.block_of
    g2 = dec.partition2.block_of
    disagree = float(j.mass[g1[:, None] != g2[None, :]].sum())

    residual = 0.0
    splittable = []
    edges = j.mass > dec.atol
    for c in range(dec.block_count):
        if dec.p_C.mass[c] <= 0:
            continue
        sub = conditional_joint(j, dec, c)
        outer = np.outer(dec.cond1[c].mass[g1 == c], dec.cond2[c].mass[g2 == c])
        residual = max(residual, float(np.abs(sub.mass - outer).max()))
        block_edges = edges[np.ix_(g1 == c, g2 == c)]
        active = block_edges[block_edges.any(axis=1)][:, block_edges.any(axis=0)]
        if _components(active)[2] > 1:
            splittable.append(c)
    return GkVerification(disagree, residual, splittable, tol)


def conditional_joint(j: JointPmf, dec: GkDecomposition, c: int) -> JointPmf:
    """Joint restricted to block ``c`` (both alphabets cut to the block)."""
    rows = dec.partition1.block_of == c
    cols = dec.partition2.block_of == c
    sub = j.mass[np.ix_(rows, cols)]
    total = float(sub.sum())
    if total <= 0:
        raise ZeroBlockMass(f"block {c} has zero probability")
    a1 = [s for s, r in zip(j.alphabet1, rows) if r]
    a2 = [s for s, k in zip(j.alphabet2, cols) if k]
    return JointPmf(a1, a2, sub / total, validate=False)


def block_entropy_bounds(j: JointPmf) -> tuple[float, float]:
    """(min(H(Y1), H(Y2)), I(Y1;Y2)): both upper-bound C_GK."""
    p1, p2 = marginals(j)
    return min(entropy(p1), entropy(p2)), mutual_information(j)
