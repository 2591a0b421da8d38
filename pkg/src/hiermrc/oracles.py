"""Exact reference computations, independent of the samplers.

None of these touch the shared stream. The selected-sample laws are
obtained by summing over every proposal tuple (or every count vector),
and the common-information oracle searches all partition pairs.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .dist import Alphabet, JointPmf, Partition, Pmf, block_marginal, condition_on_block
from .errors import (
    DegenerateWeights,
    InfeasibleEnumeration,
    SupportViolation,
    ZeroBlockMass,
)

__all__ = [
    "ENUMERATION_CEILING",
    "ExactLaw",
    "brute_force_gk",
    "exact_bias",
    "exact_selected_distribution_hier",
    "exact_selected_distribution_mrc",
    "exact_selected_distribution_mrc_multinomial",
    "expected_refinement_draws",
]

ENUMERATION_CEILING = 10**7
MULTINOMIAL_CEILING = 10**8
_CHUNK = 1 << 20


@dataclass(frozen=True)
class ExactLaw:
    law: Pmf
    enumeration_size: int
    method: str


def _support_ratios(target: Pmf, prior: Pmf) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if target.alphabet != prior.alphabet:
        raise ValueError("target and prior use different alphabets")
    supp = np.flatnonzero(prior.mass > 0)
    if np.any(target.mass[prior.mass == 0] > 0):
        raise SupportViolation("target mass outside the prior's support")
    return supp, prior.mass[supp], target.mass[supp] / prior.mass[supp]


def _embed(alphabet: Alphabet, supp: np.ndarray, law_s: np.ndarray) -> Pmf:
    out = np.zeros(len(alphabet))
    out[supp] = law_s
    return Pmf(alphabet, out, validate=False)


def exact_selected_distribution_mrc(target: Pmf, prior: Pmf, n: int,
                                    ceiling: int = ENUMERATION_CEILING) -> ExactLaw:
    """Law of the selected symbol, summing over all |supp|^n ordered tuples.

    P(x) = sum over tuples of prod p(Y_j) * sum_{j: Y_j = x} r(x) / tau.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    supp, probs, ratios = _support_ratios(target, prior)
    size = len(supp) ** n
    if size > ceiling:
        raise InfeasibleEnumeration(
            f"|supp|^n = {len(supp)}^{n} = {size} exceeds the ceiling {ceiling}",
            size=size, ceiling=ceiling)
    law, degenerate = _kernels.enumerate_selection_law(probs, ratios, n)
    if degenerate:
        raise DegenerateWeights("a proposal tuple with positive probability has tau = 0")
    return ExactLaw(_embed(prior.alphabet, supp, law), size, "enumerate")


def _compositions_count(n: int, s: int) -> int:
    return math.comb(n + s - 1, s - 1)


def exact_selected_distribution_mrc_multinomial(target: Pmf, prior: Pmf, n: int,
                                                ceiling: int = MULTINOMIAL_CEILING
                                                ) -> ExactLaw:
    """Same law as the tuple enumeration, summed over count vectors.

    The selection only depends on how often each symbol was proposed, so
    tuples are grouped by their counts k with multinomial weight
    n!/prod k! prod p^k, and x is picked with probability k_x r_x / tau.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    supp, probs, ratios = _support_ratios(target, prior)
    s = len(supp)
    size = _compositions_count(n, s)
    if size > ceiling:
        raise InfeasibleEnumeration(
            f"{size} count vectors for n={n} over {s} symbols exceeds {ceiling}",
            size=size, ceiling=ceiling)
    logp = np.log(probs)
    base = gammaln(n + 1)
    law = np.zeros(s)
    if s == 1:
        if ratios[0] <= 0:
            raise DegenerateWeights("the only proposable symbol has zero ratio")
        law[0] = 1.0
        return ExactLaw(_embed(prior.alphabet, supp, law), size, "multinomial")
    # outer loop over the first s-2 counts, vectorised over the last two
    for head in itertools.product(*(range(n + 1) for _ in range(s - 2))):
        used = sum(head)
        if used > n:
            continue
        rem = n - used
        head_arr = np.asarray(head, dtype=np.float64)
        head_log = base - gammaln(head_arr + 1).sum() + (head_arr * logp[:s - 2]).sum()
        head_tau = float((head_arr * ratios[:s - 2]).sum())
        for lo in range(0, rem + 1, _CHUNK):
            a = np.arange(lo, min(rem, lo + _CHUNK - 1) + 1, dtype=np.float64)
            b = rem - a
            logw = (head_log - gammaln(a + 1) - gammaln(b + 1)
                    + a * logp[s - 2] + b * logp[s - 1])
            w = np.exp(logw)
            tau = head_tau + a * ratios[s - 2] + b * ratios[s - 1]
            zero = tau <= 0
            if np.any(zero & (w > 0)):
                raise DegenerateWeights("a proposal tuple with positive probability has tau = 0")
            scale = np.where(zero, 0.0, w / np.where(zero, 1.0, tau))
            for x in range(s - 2):
                law[x] += head_arr[x] * ratios[x] * scale.sum()
            law[s - 2] += ratios[s - 2] * (a * scale).sum()
            law[s - 1] += ratios[s - 1] * (b * scale).sum()
    return ExactLaw(_embed(prior.alphabet, supp, law), size, "multinomial")


def _stage_law(target: Pmf, prior: Pmf, n: int, method: str, ceiling: int) -> ExactLaw:
    if method == "enumerate":
        return exact_selected_distribution_mrc(target, prior, n, ceiling)
    if method == "multinomial":
        return exact_selected_distribution_mrc_multinomial(target, prior, n, ceiling)
    raise ValueError(f"unknown method {method!r}")


def exact_selected_distribution_hier(target: Pmf, prior: Pmf, part: Partition, n_c: int,
                                     n_ref: Sequence[int], ceiling: int | None = None,
                                     method: str = "enumerate") -> ExactLaw:
    """Decoded-symbol law of one hierarchical transmission.

    Block-stage law over labels, then the refinement law inside every
    block that can be chosen. Each stage is checked against the ceiling
    separately.
    """
    if ceiling is None:
        ceiling = ENUMERATION_CEILING if method == "enumerate" else MULTINOMIAL_CEILING
    p_C = block_marginal(prior, part)
    q_C = block_marginal(target, part)
    outer = _stage_law(q_C, p_C, n_c, method, ceiling)
    total = outer.enumeration_size
    law = np.zeros(len(prior.alphabet))
    for c in range(part.n_blocks):
        w = float(outer.law.mass[c])
        if w <= 0:
            continue
        inner = _stage_law(condition_on_block(target, part, c),
                           condition_on_block(prior, part, c), int(n_ref[c]),
                           method, ceiling)
        total += inner.enumeration_size
        law += w * inner.law.mass
    return ExactLaw(Pmf(prior.alphabet, law, validate=False), total, method)


def exact_bias(f: np.ndarray, law: Pmf, target: Pmf) -> float:
    """|E_law f - E_target f|."""
    f = np.asarray(f, dtype=np.float64)
    return abs(float(f @ law.mass) - float(f @ target.mass))


def expected_refinement_draws(prior: Pmf, part: Partition, n_ref: Sequence[int],
                              chosen_law: Pmf) -> float:
    """Mean raw prior draws to collect n_ref(c) hits in the chosen block c."""
    p_C = block_marginal(prior, part).mass
    total = 0.0
    for c in range(part.n_blocks):
        w = float(chosen_law.mass[c])
        if w <= 0:
            continue
        if p_C[c] <= 0:
            raise ZeroBlockMass(f"block {c} can be chosen but has zero prior mass")
        total += w * n_ref[c] / p_C[c]
    return total


# ---------------------------------------------------------------- GK search

def _set_partitions(m: int) -> np.ndarray:
    """All restricted-growth strings of length m."""
    out: list[list[int]] = []

    def grow(prefix: list[int], top: int) -> None:
        if len(prefix) == m:
            out.append(prefix.copy())
            return
        for v in range(top + 2):
            prefix.append(v)
            grow(prefix, max(top, v))
            prefix.pop()

    if m == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grow([0], 0)
    return np.asarray(out, dtype=np.int64)


def brute_force_gk(j: JointPmf, max_size: int = 5) -> tuple[Partition, Partition]:
    """Highest-entropy pair of partitions that always agree on the support.

    Every pair of set partitions of the two support alphabets with equal
    block counts is tried. A pair is valid when the block-to-block mass
    matrix has exactly one positive entry per row and per column. Labels
    are canonicalised like ``gk_decompose``: first appearance scanning
    decoder-1 symbols, zero-marginal symbols in one trailing block.
    """
    n1, n2 = j.shape
    if n1 > max_size or n2 > max_size:
        raise InfeasibleEnumeration(
            f"alphabets {n1}x{n2} exceed the brute-force limit {max_size}",
            size=max(n1, n2), ceiling=max_size)
    s1 = np.flatnonzero(j.mass.sum(axis=1) > 0)
    s2 = np.flatnonzero(j.mass.sum(axis=0) > 0)
    sub = j.mass[np.ix_(s1, s2)]
    rgs1 = _set_partitions(len(s1))
    rgs2 = _set_partitions(len(s2))
    k1 = rgs1.max(axis=1) + 1
    k2 = rgs2.max(axis=1) + 1

    best = (-1.0, None, None, None)
    for k in range(1, min(len(s1), len(s2)) + 1):
        a = rgs1[k1 == k]
        b = rgs2[k2 == k]
        if len(a) == 0 or len(b) == 0:
            continue
        A = np.eye(k)[a]          # (nA, s1, k) one-hot
        B = np.eye(k)[b]          # (nB, s2, k)
        M = np.einsum("aik,ij,bjl->abkl", A, sub, B)
        pos = M > 0
        valid = (pos.sum(axis=3) == 1).all(axis=2) & (pos.sum(axis=2) == 1).all(axis=2)
        for ia, ib in zip(*np.nonzero(valid)):
            masses = M[ia, ib].sum(axis=1)
            h = float(-(masses * np.log(masses)).sum())
            if h > best[0] + 1e-15:
                best = (h, a[ia], b[ib], np.argmax(pos[ia, ib], axis=1))

    _, lab1, lab2, perm = best
    # perm[x] = decoder-2 label matched with decoder-1 label x
    to_shared = np.empty_like(perm)
    to_shared[perm] = np.arange(len(perm))
    canon: dict[int, int] = {}
    for x in lab1:
        canon.setdefault(int(x), len(canon))
    n_blocks = len(canon)
    g1 = np.full(n1, n_blocks, dtype=np.int64)
    g2 = np.full(n2, n_blocks, dtype=np.int64)
    g1[s1] = [canon[int(x)] for x in lab1]
    g2[s2] = [canon[int(to_shared[y])] for y in lab2]
    return Partition(j.alphabet1, g1), Partition(j.alphabet2, g2)
