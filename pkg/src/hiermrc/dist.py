"""Finite probability mass functions and the information functionals on them.

Every functional returns nats. Use :func:`nats_to_bits` when reporting.
"""

from __future__ import annotations

import math
from collections.abc import Hashable, Iterable, Iterator, Mapping, Sequence
from typing import Any

import numpy as np

from .errors import SupportViolation, ZeroBlockMass

NORMALIZATION_TOL = 1e-9

__all__ = [
    "Alphabet",
    "JointPmf",
    "Partition",
    "Pmf",
    "block_marginal",
    "chi_square",
    "condition_on_block",
    "entropy",
    "kl",
    "marginals",
    "mutual_information",
    "nats_to_bits",
    "tv",
]


def nats_to_bits(x: float) -> float:
    return x / math.log(2.0)


class Alphabet:
    """An ordered tuple of distinct, hashable symbols.

    Order matters: inverse-CDF sampling walks the symbols in this order.
    """

    __slots__ = ("_index", "symbols")

    def __init__(self, symbols: Iterable[Hashable]):
        if isinstance(symbols, Alphabet):
            symbols = symbols.symbols
        syms = tuple(symbols)
        if not syms:
            raise ValueError("alphabet must be non-empty")
        index = {s: i for i, s in enumerate(syms)}
        if len(index) != len(syms):
            seen: set[Hashable] = set()
            dup = next(s for s in syms if s in seen or seen.add(s))
            raise ValueError(f"duplicate symbol {dup!r} in alphabet")
        self.symbols = syms
        self._index = index

    @classmethod
    def range(cls, n: int) -> Alphabet:
        return cls(range(n))

    def index(self, symbol: Hashable) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise KeyError(f"symbol {symbol!r} not in alphabet") from None

    def indices(self, symbols: Iterable[Hashable]) -> np.ndarray:
        return np.array([self.index(s) for s in symbols], dtype=np.int64)

    def __contains__(self, symbol: object) -> bool:
        return symbol in self._index

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[Hashable]:
        return iter(self.symbols)

    def __getitem__(self, i: int) -> Hashable:
        return self.symbols[i]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Alphabet):
            return self.symbols == other.symbols
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.symbols)

    def __repr__(self) -> str:
        return f"Alphabet({list(self.symbols)!r})"


def _as_alphabet(a: Alphabet | Iterable[Hashable]) -> Alphabet:
    return a if isinstance(a, Alphabet) else Alphabet(a)


def _frozen(arr: Any, ndim: int) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    if out.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d mass array, got shape {out.shape}")
    out.setflags(write=False)
    return out


def _check_masses(mass: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(mass)):
        raise ValueError(f"{what}: masses must be finite")
    if np.any(mass < 0):
        bad = np.argwhere(mass < 0)[0]
        raise ValueError(f"{what}: negative mass at position {tuple(bad)}")
    total = float(mass.sum())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"{what}: masses sum to {total!r}, not 1")


class Pmf:
    """Probability mass function over a finite :class:`Alphabet`.

    Masses are validated once and then used as given; nothing is
    renormalized behind the caller's back.
    """

    __slots__ = ("alphabet", "mass")

    def __init__(self, alphabet: Alphabet | Iterable[Hashable], mass: Any,
                 *, validate: bool = True):
        self.alphabet = _as_alphabet(alphabet)
        self.mass = _frozen(mass, 1)
        if self.mass.shape[0] != len(self.alphabet):
            raise ValueError(
                f"mass has {self.mass.shape[0]} entries for an alphabet of "
                f"{len(self.alphabet)} symbols")
        if validate:
            _check_masses(self.mass, "Pmf")

    @classmethod
    def from_dict(cls, d: Mapping[Hashable, float]) -> Pmf:
        return cls(list(d), list(d.values()))

    @classmethod
    def uniform(cls, alphabet: Alphabet | Iterable[Hashable]) -> Pmf:
        a = _as_alphabet(alphabet)
        return cls(a, np.full(len(a), 1.0 / len(a)))

    @classmethod
    def point(cls, alphabet: Alphabet | Iterable[Hashable],
              symbol: Hashable) -> Pmf:
        a = _as_alphabet(alphabet)
        m = np.zeros(len(a))
        m[a.index(symbol)] = 1.0
        return cls(a, m)

    def __len__(self) -> int:
        return len(self.alphabet)

    def __getitem__(self, symbol: Hashable) -> float:
        return float(self.mass[self.alphabet.index(symbol)])

    @property
    def support(self) -> np.ndarray:
        return self.mass > 0

    def cdf(self) -> np.ndarray:
        # np.cumsum accumulates strictly left to right, which the sampler
        # relies on for bit-exact inverse-CDF boundaries.
        return np.cumsum(self.mass)

    def to_dict(self) -> dict[Hashable, float]:
        return {s: float(m) for s, m in zip(self.alphabet, self.mass)}

    def allclose(self, other: Pmf, atol: float = 1e-12) -> bool:
        return (self.alphabet == other.alphabet
                and bool(np.allclose(self.mass, other.mass, rtol=0, atol=atol)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pmf):
            return NotImplemented
        return (self.alphabet == other.alphabet
                and np.array_equal(self.mass, other.mass))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        body = ", ".join(f"{s!r}: {m:.6g}" for s, m in zip(self.alphabet, self.mass))
        return f"Pmf({{{body}}})"


class JointPmf:
    """Joint law of two decoders' prior symbols, rows indexed by decoder 1."""

    __slots__ = ("alphabet1", "alphabet2", "mass")

    def __init__(self, alphabet1: Alphabet | Iterable[Hashable],
                 alphabet2: Alphabet | Iterable[Hashable], mass: Any,
                 *, validate: bool = True):
        self.alphabet1 = _as_alphabet(alphabet1)
        self.alphabet2 = _as_alphabet(alphabet2)
        self.mass = _frozen(mass, 2)
        if self.mass.shape != (len(self.alphabet1), len(self.alphabet2)):
            raise ValueError(
                f"joint mass has shape {self.mass.shape}, alphabets need "
                f"({len(self.alphabet1)}, {len(self.alphabet2)})")
        if validate:
            _check_masses(self.mass, "JointPmf")

    @classmethod
    def product(cls, p1: Pmf, p2: Pmf) -> JointPmf:
        return cls(p1.alphabet, p2.alphabet, np.outer(p1.mass, p2.mass))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape  # type: ignore[return-value]

    def flat(self) -> np.ndarray:
        """Row-major pair masses, the order used for inverse-CDF sampling."""
        return self.mass.reshape(-1)

    def pair(self, cell: int) -> tuple[Hashable, Hashable]:
        i, j = divmod(int(cell), self.mass.shape[1])
        return self.alphabet1[i], self.alphabet2[j]

    def __repr__(self) -> str:
        return (f"JointPmf({list(self.alphabet1)!r} x {list(self.alphabet2)!r}, "
                f"{self.mass.tolist()!r})")


class Partition:
    """Assignment of every symbol to a block label ``0..n_blocks-1``."""

    __slots__ = ("alphabet", "block_of", "n_blocks")

    def __init__(self, alphabet: Alphabet | Iterable[Hashable], block_of: Any):
        self.alphabet = _as_alphabet(alphabet)
        if isinstance(block_of, Mapping):
            labels = [block_of[s] for s in self.alphabet]
        else:
            labels = list(block_of)
        arr = np.asarray(labels, dtype=np.int64)
        if arr.shape != (len(self.alphabet),):
            raise ValueError("partition must map every symbol exactly once")
        used = np.unique(arr)
        if used[0] != 0 or not np.array_equal(used, np.arange(len(used))):
            raise ValueError(
                f"block labels must be contiguous from 0, got {used.tolist()}")
        arr.setflags(write=False)
        self.block_of = arr
        self.n_blocks = len(used)

    @classmethod
    def trivial(cls, alphabet: Alphabet | Iterable[Hashable]) -> Partition:
        a = _as_alphabet(alphabet)
        return cls(a, np.zeros(len(a), dtype=np.int64))

    @classmethod
    def singletons(cls, alphabet: Alphabet | Iterable[Hashable]) -> Partition:
        a = _as_alphabet(alphabet)
        return cls(a, np.arange(len(a)))

    @classmethod
    def from_blocks(cls, alphabet: Alphabet | Iterable[Hashable],
                    blocks: Sequence[Iterable[Hashable]]) -> Partition:
        a = _as_alphabet(alphabet)
        labels = np.full(len(a), -1, dtype=np.int64)
        for c, members in enumerate(blocks):
            for s in members:
                i = a.index(s)
                if labels[i] != -1:
                    raise ValueError(f"symbol {s!r} appears in two blocks")
                labels[i] = c
        if np.any(labels < 0):
            missing = [a[i] for i in np.flatnonzero(labels < 0)]
            raise ValueError(f"symbols {missing!r} not assigned to a block")
        return cls(a, labels)

    @property
    def block_alphabet(self) -> Alphabet:
        return Alphabet.range(self.n_blocks)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.block_of == c)

    def block(self, symbol: Hashable) -> int:
        return int(self.block_of[self.alphabet.index(symbol)])

    def blocks(self) -> list[tuple[Hashable, ...]]:
        return [tuple(self.alphabet[i] for i in self.members(c))
                for c in range(self.n_blocks)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return (self.alphabet == other.alphabet
                and np.array_equal(self.block_of, other.block_of))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Partition({self.blocks()!r})"


def _same_alphabet(a: Pmf, b: Pmf) -> None:
    if a.alphabet != b.alphabet:
        raise ValueError("distributions are defined over different alphabets")


def entropy(p: Pmf) -> float:
    m = p.mass[p.mass > 0]
    return float(-(m * np.log(m)).sum()) + 0.0  # no -0.0 for point masses


def kl(q: Pmf, p: Pmf) -> float:
    """D(q || p) in nats; raises when q puts mass where p has none."""
    _same_alphabet(q, p)
    pos = q.mass > 0
    if np.any(p.mass[pos] == 0):
        bad = q.alphabet[int(np.flatnonzero(pos & (p.mass == 0))[0])]
        raise SupportViolation(
            f"symbol {bad!r} has target mass but zero reference mass")
    qm, pm = q.mass[pos], p.mass[pos]
    return float((qm * np.log(qm / pm)).sum())


def tv(p: Pmf, q: Pmf) -> float:
    _same_alphabet(p, q)
    return float(0.5 * np.abs(p.mass - q.mass).sum())


def chi_square(p: Pmf, q: Pmf) -> float:
    """chi^2(p || q) = sum p^2/q - 1."""
    _same_alphabet(p, q)
    pos = p.mass > 0
    if np.any(q.mass[pos] == 0):
        bad = p.alphabet[int(np.flatnonzero(pos & (q.mass == 0))[0])]
        raise SupportViolation(f"symbol {bad!r} has mass under p but not q")
    return float((p.mass[pos] ** 2 / q.mass[pos]).sum() - 1.0)


def marginals(j: JointPmf) -> tuple[Pmf, Pmf]:
    return (Pmf(j.alphabet1, j.mass.sum(axis=1), validate=False),
            Pmf(j.alphabet2, j.mass.sum(axis=0), validate=False))


def mutual_information(j: JointPmf) -> float:
    p1, p2 = marginals(j)
    outer = np.outer(p1.mass, p2.mass)
    pos = j.mass > 0
    return float((j.mass[pos] * np.log(j.mass[pos] / outer[pos])).sum())


def block_marginal(p: Pmf, part: Partition) -> Pmf:
    if part.alphabet != p.alphabet:
        raise ValueError("partition does not cover the distribution's alphabet")
    mass = np.zeros(part.n_blocks)
    np.add.at(mass, part.block_of, p.mass)
    return Pmf(part.block_alphabet, mass, validate=False)


def condition_on_block(p: Pmf, part: Partition, c: int) -> Pmf:
    """Restrict ``p`` to block ``c`` and renormalize."""
    if part.alphabet != p.alphabet:
        raise ValueError("partition does not cover the distribution's alphabet")
    inside = part.block_of == c
    total = float(p.mass[inside].sum())
    if total <= 0:
        raise ZeroBlockMass(f"block {c} has zero probability")
    return Pmf(p.alphabet, np.where(inside, p.mass, 0.0) / total, validate=False)
