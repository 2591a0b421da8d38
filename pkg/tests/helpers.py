"""Random instance generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from hiermrc.dist import JointPmf, Partition, Pmf


def random_mass(rng: np.random.Generator, n: int, zero_frac: float = 0.0) -> np.ndarray:
    m = rng.dirichlet(np.ones(n))
    if zero_frac > 0:
        drop = rng.random(n) < zero_frac
        if drop.all():
            drop[rng.integers(n)] = False
        m = np.where(drop, 0.0, m)
        m = m / m.sum()
    return m


def random_partition(rng: np.random.Generator, n: int) -> Partition:
    raw = rng.integers(0, rng.integers(1, n + 1), size=n)
    _, labels = np.unique(raw, return_inverse=True)
    # relabel by first appearance so labels are contiguous from 0
    order = {}
    for x in labels:
        order.setdefault(int(x), len(order))
    return Partition(range(n), [order[int(x)] for x in labels])


def nested_pair(rng: np.random.Generator, n: int, zero_frac: float = 0.3
                ) -> tuple[Pmf, Pmf]:
    """(target, prior) with support(target) inside support(prior)."""
    p = random_mass(rng, n, zero_frac)
    q = rng.dirichlet(np.ones(n)) * (p > 0)
    if rng.random() < 0.3:
        q = q * (rng.random(n) < 0.7)
        if q.sum() == 0:
            q[np.flatnonzero(p > 0)[0]] = 1.0
    q = q / q.sum()
    return Pmf(range(n), q), Pmf(range(n), p)


def planted_joint(rng: np.random.Generator, n1: int, n2: int,
                  unused: bool = True) -> tuple[JointPmf, int]:
    """Block-product joint: p(y1, y2) = p_C(c) p(y1|c) p(y2|c) on planted blocks.

    Some symbols may be left out of every block (zero marginal).
    """
    k = int(rng.integers(1, min(n1, n2) + 1))
    used1 = n1 if not unused else int(rng.integers(k, n1 + 1))
    used2 = n2 if not unused else int(rng.integers(k, n2 + 1))
    sym1 = rng.permutation(n1)[:used1]
    sym2 = rng.permutation(n2)[:used2]
    lab1 = np.concatenate([np.arange(k), rng.integers(0, k, used1 - k)])
    lab2 = np.concatenate([np.arange(k), rng.integers(0, k, used2 - k)])
    p_C = rng.dirichlet(np.ones(k))
    mass = np.zeros((n1, n2))
    for c in range(k):
        r = sym1[lab1 == c]
        s = sym2[lab2 == c]
        a = rng.dirichlet(np.ones(len(r)))
        b = rng.dirichlet(np.ones(len(s)))
        mass[np.ix_(r, s)] = p_C[c] * np.outer(a, b)
    mass /= mass.sum()
    return JointPmf([f"u{i}" for i in range(n1)], [f"v{j}" for j in range(n2)], mass), k


def multinomial_ok(empirical: np.ndarray, exact: np.ndarray, n: int, sigmas: float = 3.0
                   ) -> bool:
    sd = np.sqrt(exact * (1 - exact) / n)
    return bool(np.all(np.abs(empirical - exact) <= sigmas * sd + 1e-12))


def matched_pair(rng: np.random.Generator, n: int, zero_frac: float = 0.3
                 ) -> tuple[Pmf, Pmf]:
    """(target, prior) with equal supports, so every proposal has a positive ratio."""
    p = random_mass(rng, n, zero_frac)
    q = rng.dirichlet(np.ones(n)) * (p > 0)
    return Pmf(range(n), q / q.sum()), Pmf(range(n), p)


# one (criterion, passed, detail) row per acceptance check, printed at session end
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((criterion, bool(passed), detail))
