"""Closed-form guarantees for MRC and the hierarchical sampler.

All tail probabilities are exact finite sums. Bounds that leave their
trivial range (TV above 1, bias above 2 max|f|, or epsilon >= 1) are
returned with ``vacuous=True`` instead of being suppressed.

Norm convention: ``||f||`` is the L2 norm under the target q.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .dist import Partition, Pmf, block_marginal, chi_square, condition_on_block, kl
from .errors import SupportViolation

__all__ = [
    "BlockEpsilons",
    "BoundReport",
    "DeviationBound",
    "LemmaBound",
    "TailSpec",
    "Theorem1Bound",
    "TvBound",
    "avg_complexity_lemma3",
    "bias_bound_lemma1",
    "bias_bound_theorem1",
    "bound_report",
    "deviation_bound_prop1",
    "deviation_bound_prop2",
    "epsilon_blocks",
    "epsilon_from_tail",
    "epsilon_lemma1",
    "f_norm",
    "tail",
    "tv_bound_cor1",
]

NORM_NAME = "L2(q)"
# log-ratios equal to D + t/2 up to this slack are not counted as tail mass
_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class TailSpec:
    divergence: float
    slack: float
    tail: float


def tail(target: Pmf, prior: Pmf, t: float) -> TailSpec:
    """P_{X~q}[log(q(X)/p(X)) > D(q||p) + t/2], summed exactly."""
    d = kl(target, prior)
    pos = target.mass > 0
    log_r = np.log(target.mass[pos] / prior.mass[pos])
    mass = float(target.mass[pos][log_r > d + t / 2 + _TAIL_TOL].sum())
    return TailSpec(d, t, min(max(mass, 0.0), 1.0))


def epsilon_from_tail(t: float, tail_mass: float) -> float:
    return math.sqrt(math.exp(-t / 4) + 2 * math.sqrt(tail_mass))


def epsilon_lemma1(target: Pmf, prior: Pmf, t: float) -> float:
    if t < 0:
        raise ValueError("slack t must be non-negative")
    return epsilon_from_tail(t, tail(target, prior, t).tail)


def f_norm(f, target: Pmf, order: int = 2) -> float:
    f = np.asarray(f, dtype=np.float64)
    return float((target.mass @ np.abs(f) ** order) ** (1 / order))


def _max_abs(f) -> float:
    f = np.asarray(f, dtype=np.float64)
    return float(np.abs(f).max()) if f.size else 0.0


@dataclass(frozen=True)
class LemmaBound:
    bound: float
    confidence: float
    epsilon: float
    vacuous: bool


def _ratio(e: float) -> float:
    return e / (1 - e) if e < 1 else math.inf


def bias_bound_lemma1(f, target: Pmf, prior: Pmf, t: float) -> LemmaBound:
    """2 ||f|| eps/(1-eps), holding with probability 1 - 2 eps."""
    eps = epsilon_lemma1(target, prior, t)
    norm = f_norm(f, target)
    bound = 0.0 if norm == 0 else 2 * norm * _ratio(eps)
    vacuous = eps >= 1 or bound > 2 * _max_abs(f)
    return LemmaBound(bound, 1 - 2 * eps, eps, vacuous)


@dataclass(frozen=True)
class BlockEpsilons:
    epsilon: float
    epsilon_bar: float
    per_block: dict[int, float]
    n_blocks: int


def epsilon_blocks(target: Pmf, prior: Pmf, part: Partition, t_c: float,
                   t: float) -> BlockEpsilons:
    """Block-stage eps at slack t_c, and the worst conditional eps at slack t.

    Blocks the target never visits have no conditional target and are
    skipped; ``n_blocks`` counts blocks with positive prior mass.
    """
    p_C = block_marginal(prior, part)
    q_C = block_marginal(target, part)
    if np.any((q_C.mass > 0) & (p_C.mass == 0)):
        raise SupportViolation("target visits a block with zero prior mass")
    eps = epsilon_lemma1(q_C, p_C, t_c)
    per_block = {}
    for c in range(part.n_blocks):
        if q_C.mass[c] <= 0:
            continue
        per_block[c] = epsilon_lemma1(condition_on_block(target, part, c),
                                      condition_on_block(prior, part, c), t)
    return BlockEpsilons(eps, max(per_block.values(), default=0.0), per_block,
                         int((p_C.mass > 0).sum()))


@dataclass(frozen=True)
class Theorem1Bound:
    eq4: float
    simplified: float | None
    confidence: float
    vacuous: bool


def bias_bound_theorem1(norm: float, eps: float, eps_bar: float,
                        n_blocks: int = 1, max_abs_f: float | None = None) -> Theorem1Bound:
    """Hierarchical bias bound; ``norm`` is ||f|| under the target."""
    if norm == 0:
        return Theorem1Bound(0.0, 0.0, 1 - 2 * (n_blocks * eps_bar + eps), False)
    if eps >= 1 or eps_bar >= 1:
        return Theorem1Bound(math.inf, None, 1 - 2 * (n_blocks * eps_bar + eps), True)
    rb = 2 * eps_bar / (1 - eps_bar)
    eq4 = norm * ((2 * math.sqrt(2) * eps / (1 - eps)) * (rb + 1) + rb)
    simplified = None
    if eps <= 1 / 9:
        simplified = 2 * math.sqrt(2) * norm * (eps / (1 - eps) + eps_bar / (1 - eps_bar))
    confidence = 1 - 2 * (n_blocks * eps_bar + eps)
    vacuous = max_abs_f is not None and eq4 > 2 * max_abs_f
    return Theorem1Bound(eq4, simplified, confidence, vacuous)


@dataclass(frozen=True)
class TvBound:
    value: float
    raw: float
    vacuous: bool


def tv_bound_cor1(n_blocks: int, eps: float, eps_bar: float) -> TvBound:
    raw = 2 * (n_blocks + 1) * eps_bar + 4 * eps
    return TvBound(min(max(raw, 0.0), 1.0), raw, raw > 1 or eps > 1 / 9)


def avg_complexity_lemma3(p_C: Pmf, q_C: Pmf, n_c: int, n_ref: Sequence[int]) -> float:
    """Expected prior draws per transmission: n_c plus the refinement stage."""
    if n_c < 2:
        raise ValueError("the complexity formula needs n_c >= 2")
    chi = chi_square(p_C, q_C)
    spend = float(sum(q * n for q, n in zip(q_C.mass, n_ref)))
    return n_c + (chi + 1) * n_c / (n_c - 1) * spend


@dataclass(frozen=True)
class DeviationBound:
    bias_term: float
    fluctuation: float
    total: float
    confidence: float
    vacuous: bool
    formula: str
    interpreted: bool = True


def _spread(f, target: Pmf) -> tuple[float, float]:
    """(||f - E f||_4, std of f) under the target."""
    f = np.asarray(f, dtype=np.float64)
    centred = f - float(target.mass @ f)
    return f_norm(centred, target, 4), f_norm(centred, target, 2)


_PROP1 = "bias + (sqrt(2 eps/(1-eps)) ||f-Ef||_4 + sd(f)) / (K eps_star)"
_PROP2 = "bias + (sqrt(B) ||f-Ef||_4 + sd(f)) / (K eps_star), B = hierarchical bias bracket"


def deviation_bound_prop1(f, target: Pmf, prior: Pmf, t: float, K: int,
                          eps_star: float) -> DeviationBound:
    if K < 1 or not 0 < eps_star < 1:
        raise ValueError("need K >= 1 and 0 < eps_star < 1")
    lem = bias_bound_lemma1(f, target, prior, t)
    n4, sd = _spread(f, target)
    e = lem.epsilon
    scale = math.sqrt(2 * _ratio(e)) if e < 1 else math.inf
    fluct = 0.0 if n4 == 0 and sd == 0 else (scale * n4 + sd) / (K * eps_star)
    conf = 1 - eps_star - 4 * e
    return DeviationBound(lem.bound, fluct, lem.bound + fluct, conf,
                          lem.vacuous or conf <= 0, _PROP1)


def deviation_bound_prop2(f, target: Pmf, prior: Pmf, part: Partition, t_c: float,
                          t: float, K: int, eps_star: float) -> DeviationBound:
    if K < 1 or not 0 < eps_star < 1:
        raise ValueError("need K >= 1 and 0 < eps_star < 1")
    eb = epsilon_blocks(target, prior, part, t_c, t)
    th = bias_bound_theorem1(f_norm(f, target), eb.epsilon, eb.epsilon_bar,
                             eb.n_blocks, _max_abs(f))
    bracket = bias_bound_theorem1(1.0, eb.epsilon, eb.epsilon_bar, eb.n_blocks).eq4
    n4, sd = _spread(f, target)
    fluct = 0.0 if n4 == 0 and sd == 0 else (math.sqrt(bracket) * n4 + sd) / (K * eps_star)
    conf = 1 - eps_star - 4 * (eb.n_blocks * eb.epsilon_bar + eb.epsilon)
    return DeviationBound(th.eq4, fluct, th.eq4 + fluct, conf,
                          th.vacuous or conf <= 0, _PROP2)


@dataclass
class BoundReport:
    epsilon: float
    epsilon_bar: float
    per_block_epsilon: dict[int, float]
    n_blocks: int
    f_norm: float
    norm: str
    lemma1_bias_bound: float
    lemma1_confidence: float
    lemma1_vacuous: bool
    bias_bound: float
    bias_bound_simplified: float | None
    confidence: float
    bias_vacuous: bool
    tv_bound: float
    tv_bound_raw: float
    tv_vacuous: bool
    avg_complexity_bound: float | None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_block_epsilon"] = {str(k): v for k, v in self.per_block_epsilon.items()}
        return {k: _json_float(v) for k, v in d.items()}


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf" if v < 0 else "nan"
    return v


def bound_report(f, target: Pmf, prior: Pmf, part: Partition, t: float, t_c: float,
                 n_c: int | None = None, n_ref: Sequence[int] | None = None) -> BoundReport:
    """Every guarantee for one decoder, evaluated at (t_c, t)."""
    notes = ["epsilon = sqrt(exp(-t/4) + 2 sqrt(tail))", f"||f|| taken as {NORM_NAME}"]
    lem = bias_bound_lemma1(f, target, prior, t)
    eb = epsilon_blocks(target, prior, part, t_c, t)
    norm = f_norm(f, target)
    th = bias_bound_theorem1(norm, eb.epsilon, eb.epsilon_bar, eb.n_blocks, _max_abs(f))
    tvb = tv_bound_cor1(eb.n_blocks, eb.epsilon, eb.epsilon_bar)
    avg = None
    if n_c is not None and n_ref is not None:
        if n_c >= 2:
            avg = avg_complexity_lemma3(block_marginal(prior, part),
                                        block_marginal(target, part), n_c, n_ref)
        else:
            notes.append("complexity bound undefined for n_c < 2")
    return BoundReport(eb.epsilon, eb.epsilon_bar, eb.per_block, eb.n_blocks, norm,
                       NORM_NAME, lem.bound, lem.confidence, lem.vacuous, th.eq4,
                       th.simplified, th.confidence, th.vacuous, tvb.value, tvb.raw,
                       tvb.vacuous, avg, notes)
