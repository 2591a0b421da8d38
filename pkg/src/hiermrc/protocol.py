"""Broadcast/unicast orchestration for one encoder and several decoders.

The naive scheme runs independent MRC per decoder over the shared joint
stream, paying every index on a private channel. The hierarchical scheme
broadcasts one block index per round (the Gacs-Korner block is visible
to every decoder) and then sends each decoder a refinement index.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .bounds import BoundReport, avg_complexity_lemma3, bound_report
from .common_info import GkDecomposition, decomposition_from_partitions, gk_decompose
from .dist import (
    JointPmf,
    Partition,
    Pmf,
    block_marginal,
    condition_on_block,
    marginals,
    tv,
)
from .errors import (
    BlockTargetMismatch,
    InfeasibleEnumeration,
    MismatchedScenario,
    ScenarioError,
)
from .hier import (
    CellSpace,
    conditional_ratios,
    default_rejection_cap,
    encode_cells,
    size_for,
)
from .mrc import importance_ratios, mrc_rounds
from .oracles import exact_selected_distribution_hier, exact_selected_distribution_mrc
from .randomness import StreamSeed

__all__ = [
    "CostLedger",
    "DecoderResult",
    "RunReport",
    "SampleSizes",
    "Scenario",
    "choose_sample_sizes",
    "cost_compare",
    "run_hierarchical_broadcast",
    "run_naive_unicast",
]

MODES = ("naive", "hierarchical", "both")
BLOCK_TOL = 1e-9
# exact laws are attached to reports only below this many summands
REPORT_ENUMERATION_CEILING = 10**6


@dataclass(frozen=True, eq=False)
class Scenario:
    """One experiment. ``joint`` for two decoders, ``prior`` for one."""

    targets: tuple[Pmf, ...]
    functions: tuple[np.ndarray, ...]
    joint: JointPmf | None = None
    prior: Pmf | None = None
    t: float = 1.0
    t_c: float = 1.0
    K: int = 1000
    seed: int = 0
    label: str = "run"
    n_c: int | None = None
    n_ref: tuple[tuple[int, ...], ...] | None = None
    naive_n: tuple[int, ...] | None = None
    rejection_cap: int | None = None
    atol: float = 0.0
    mode: str = "both"
    partitions: tuple[Partition, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "functions",
                           tuple(np.asarray(f, dtype=np.float64) for f in self.functions))
        self.validate()

    # ---- validation

    @property
    def n_decoders(self) -> int:
        return len(self.targets)

    def priors(self) -> tuple[Pmf, ...]:
        if self.joint is not None:
            return marginals(self.joint)
        return (self.prior,)

    def validate(self) -> None:
        if (self.joint is None) == (self.prior is None):
            raise ScenarioError("prior rule: give exactly one of a joint or a single prior")
        if self.joint is not None and self.n_decoders != 2:
            raise ScenarioError(f"decoder-count rule: a joint serves 2 decoders, "
                                f"got {self.n_decoders} targets")
        if self.prior is not None and self.n_decoders != 1:
            raise ScenarioError("decoder-count rule: a single prior serves 1 decoder")
        if len(self.functions) != self.n_decoders:
            raise ScenarioError(f"function rule: {len(self.functions)} tables for "
                                f"{self.n_decoders} decoders")
        if self.mode not in MODES:
            raise ScenarioError(f"mode rule: {self.mode!r} is not one of {MODES}")
        if self.K < 0:
            raise ScenarioError("K rule: K must be non-negative")
        if self.t < 0 or self.t_c < 0:
            raise ScenarioError("slack rule: t and t_c must be non-negative")
        if self.atol < 0:
            raise ScenarioError("atol rule: atol must be non-negative")
        for i, (q, p, f) in enumerate(zip(self.targets, self.priors(), self.functions)):
            if q.alphabet != p.alphabet:
                raise ScenarioError(f"alphabet rule: decoder {i + 1} target alphabet "
                                    f"differs from its prior alphabet")
            if f.shape != (len(p.alphabet),):
                raise ScenarioError(f"function rule: decoder {i + 1} table has "
                                    f"{f.shape[0] if f.ndim else 0} entries for "
                                    f"{len(p.alphabet)} symbols")
            if not np.all(np.isfinite(f)):
                raise ScenarioError(f"function rule: decoder {i + 1} table is not finite")
            bad = np.flatnonzero((q.mass > 0) & (p.mass == 0))
            if bad.size:
                raise ScenarioError(f"support rule: decoder {i + 1} target puts mass on "
                                    f"{q.alphabet[int(bad[0])]!r}, which its prior never draws")
        if self.partitions is not None:
            if len(self.partitions) != self.n_decoders:
                raise ScenarioError("partition rule: need one partition per decoder")
            for i, (part, p) in enumerate(zip(self.partitions, self.priors())):
                if part.alphabet != p.alphabet:
                    raise ScenarioError(f"partition rule: decoder {i + 1} partition "
                                        f"covers a different alphabet")
        plan = self.plan
        if plan.q_C_mismatch > BLOCK_TOL:
            raise BlockTargetMismatch(
                f"block-target rule: decoder block marginals differ by "
                f"{plan.q_C_mismatch:.3g} (tolerance {BLOCK_TOL})")

    # ---- derived structure

    @cached_property
    def plan(self) -> Plan:
        return _make_plan(self)

    def key(self) -> str:
        """Digest of everything except the mode, for comparing reports."""
        d = self.to_dict()
        d.pop("mode")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_label(self, label: str) -> Scenario:
        return replace(self, label=label)

    def to_dict(self) -> dict:
        priors = self.priors()
        d: dict = {
            "version": 1,
            "alphabets": [list(p.alphabet) for p in priors],
        }
        if self.joint is not None:
            d["joint"] = self.joint.mass.tolist()
        else:
            d["prior"] = self.prior.mass.tolist()
        d["targets"] = [q.mass.tolist() for q in self.targets]
        d["functions"] = [f.tolist() for f in self.functions]
        d["params"] = {
            "t": self.t, "t_c": self.t_c, "K": self.K, "seed": self.seed,
            "label": self.label,
            "n_overrides": {
                "n_c": self.n_c,
                "n_ref": [list(r) for r in self.n_ref] if self.n_ref is not None else None,
                "naive": list(self.naive_n) if self.naive_n is not None else None,
            },
            "rejection_cap": self.rejection_cap,
            "atol": self.atol,
        }
        d["mode"] = self.mode
        if self.partitions is not None:
            d["partitions"] = [part.block_of.tolist() for part in self.partitions]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Scenario:
        try:
            return _scenario_from_dict(d)
        except (ScenarioError, BlockTargetMismatch):
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ScenarioError(f"scenario file: {type(exc).__name__}: {exc}") from exc


def _scenario_from_dict(d: dict) -> Scenario:
    version = d.get("version")
    if version != 1:
        raise ScenarioError(f"version rule: unsupported scenario version {version!r}")
    alphabets = d["alphabets"]
    if "joint" in d:
        if len(alphabets) != 2:
            raise ScenarioError("alphabet rule: a joint needs two alphabets")
        try:
            joint = JointPmf(alphabets[0], alphabets[1], d["joint"])
        except ValueError as exc:
            raise ScenarioError(f"joint rule: {exc}") from exc
        prior = None
    elif "prior" in d:
        if len(alphabets) != 1:
            raise ScenarioError("alphabet rule: a single prior needs one alphabet")
        try:
            prior = Pmf(alphabets[0], d["prior"])
        except ValueError as exc:
            raise ScenarioError(f"prior rule: {exc}") from exc
        joint = None
    else:
        raise ScenarioError("prior rule: scenario needs 'joint' or 'prior'")
    n_dec = len(alphabets)

    def per_decoder(many: str, one: str) -> list:
        if many in d:
            vals = d[many]
            if len(vals) != n_dec:
                raise ScenarioError(f"{many} rule: {len(vals)} entries for {n_dec} decoders")
            return vals
        if one in d:
            return [d[one]] * n_dec
        raise ScenarioError(f"{many} rule: scenario needs '{many}' or '{one}'")

    targets = []
    for i, (a, q) in enumerate(zip(alphabets, per_decoder("targets", "target"))):
        try:
            targets.append(Pmf(a, q))
        except ValueError as exc:
            raise ScenarioError(f"target rule: decoder {i + 1}: {exc}") from exc
    functions = per_decoder("functions", "function")
    params = d.get("params", {})
    over = params.get("n_overrides") or {}
    parts = None
    if d.get("partitions") is not None:
        try:
            parts = tuple(Partition(a, labels) for a, labels in zip(alphabets, d["partitions"]))
        except ValueError as exc:
            raise ScenarioError(f"partition rule: {exc}") from exc
    n_ref = over.get("n_ref")
    naive = over.get("naive")
    return Scenario(
        targets=tuple(targets), functions=tuple(functions), joint=joint, prior=prior,
        t=float(params.get("t", 1.0)), t_c=float(params.get("t_c", 1.0)),
        K=int(params.get("K", 1000)), seed=int(params.get("seed", 0)),
        label=str(params.get("label", "run")),
        n_c=None if over.get("n_c") is None else int(over["n_c"]),
        n_ref=None if n_ref is None else tuple(tuple(int(x) for x in r) for r in n_ref),
        naive_n=None if naive is None else tuple(int(x) for x in naive),
        rejection_cap=None if params.get("rejection_cap") is None else int(params["rejection_cap"]),
        atol=float(params.get("atol", 0.0)), mode=str(d.get("mode", "both")),
        partitions=parts)


# ---------------------------------------------------------------- plan

@dataclass(frozen=True)
class Plan:
    space: CellSpace
    priors: tuple[Pmf, ...]
    partitions: tuple[Partition, ...]
    decomposition: GkDecomposition | None
    p_C: Pmf
    q_C: Pmf
    q_C_mismatch: float


def _make_plan(sc: Scenario) -> Plan:
    priors = sc.priors()
    if sc.joint is not None:
        if sc.partitions is not None:
            dec = decomposition_from_partitions(sc.joint, *sc.partitions)
        else:
            dec = gk_decompose(sc.joint, sc.atol)
        space = CellSpace.from_joint(sc.joint, dec)
        parts = (dec.partition1, dec.partition2)
    else:
        dec = None
        part = sc.partitions[0] if sc.partitions else Partition.trivial(sc.prior.alphabet)
        space = CellSpace.from_pmf(sc.prior, part)
        parts = (part,)
    n_labels = space.n_labels
    labels = range(n_labels)
    p_C = Pmf(labels, space.block_mass, validate=False)
    q_Cs = []
    for q, part in zip(sc.targets, parts):
        m = np.zeros(n_labels)
        m[:part.n_blocks] = block_marginal(q, part).mass
        q_Cs.append(m)
    mismatch = max((float(np.abs(m - q_Cs[0]).max()) for m in q_Cs), default=0.0)
    return Plan(space, priors, parts, dec, p_C, Pmf(labels, q_Cs[0], validate=False),
                mismatch)


@dataclass(frozen=True)
class SampleSizes:
    n_c: int
    n_ref: tuple[tuple[int, ...], ...]
    naive: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"n_c": self.n_c, "n_ref": [list(r) for r in self.n_ref],
                "naive": list(self.naive)}


def choose_sample_sizes(sc: Scenario) -> SampleSizes:
    """exp(divergence + slack) rounded up per stage; overrides win."""
    plan = sc.plan
    n_c = sc.n_c if sc.n_c is not None else size_for(plan.q_C, plan.p_C, sc.t_c)
    if sc.n_ref is not None:
        n_ref = tuple(tuple(r) for r in sc.n_ref)
    else:
        rows = []
        for q, p, part in zip(sc.targets, plan.priors, plan.partitions):
            q_C = block_marginal(q, part).mass
            row = []
            for c in range(plan.space.n_labels):
                if c >= part.n_blocks or q_C[c] <= 0:
                    row.append(1)
                    continue
                row.append(size_for(condition_on_block(q, part, c),
                                    condition_on_block(p, part, c), sc.t))
            rows.append(tuple(row))
        n_ref = tuple(rows)
    if sc.naive_n is not None:
        naive = tuple(sc.naive_n)
    else:
        naive = tuple(size_for(q, p, sc.t) for q, p in zip(sc.targets, plan.priors))
    return SampleSizes(int(n_c), n_ref, naive)


# ---------------------------------------------------------------- reports

@dataclass
class CostLedger:
    broadcast_bits: float
    broadcast_wire_bits: int
    unicast_bits: list[float]
    unicast_wire_bits: list[int]
    raw_prior_draws: int
    per_k: list[dict] = field(default_factory=list)

    @property
    def total_bits(self) -> float:
        return self.broadcast_bits + sum(self.unicast_bits)

    @property
    def total_wire_bits(self) -> int:
        return self.broadcast_wire_bits + sum(self.unicast_wire_bits)

    @classmethod
    def from_per_k(cls, per_k: list[dict], n_dec: int, raw: int) -> CostLedger:
        b = sum(e["broadcast"] for e in per_k)
        bw = sum(e["broadcast_wire"] for e in per_k)
        u = [sum(e["unicast"][i] for e in per_k) for i in range(n_dec)]
        uw = [sum(e["unicast_wire"][i] for e in per_k) for i in range(n_dec)]
        return cls(float(b), int(bw), [float(x) for x in u], [int(x) for x in uw], raw, per_k)

    def to_dict(self, include_per_k: bool = True) -> dict:
        d = {
            "broadcast_bits": self.broadcast_bits,
            "broadcast_wire_bits": self.broadcast_wire_bits,
            "unicast_bits": self.unicast_bits,
            "unicast_wire_bits": self.unicast_wire_bits,
            "total_bits": self.total_bits,
            "total_wire_bits": self.total_wire_bits,
            "raw_prior_draws": self.raw_prior_draws,
        }
        if include_per_k:
            d["per_k"] = self.per_k
        return d


def _bits(n: int) -> tuple[float, int]:
    return math.log2(n), math.ceil(math.log2(n))


@dataclass
class DecoderResult:
    estimate: float | None
    true_value: float
    abs_bias: float | None
    empirical_law: list[float]
    tv_empirical: float | None
    tv_exact: float | None
    exact_bias: float | None
    tv_method: str
    decoded: np.ndarray
    block_sequence: np.ndarray | None = None

    def to_dict(self, alphabet) -> dict:
        d = {
            "estimate": self.estimate,
            "estimate_defined": self.estimate is not None,
            "true_value": self.true_value,
            "abs_bias": self.abs_bias,
            "empirical_law": dict(zip(map(str, alphabet), self.empirical_law)),
            "tv_empirical": self.tv_empirical,
            "tv_exact": self.tv_exact,
            "exact_bias": self.exact_bias,
            "tv_reported": self.tv_exact if self.tv_exact is not None else self.tv_empirical,
            "tv_method": self.tv_method,
        }
        return d


@dataclass
class RunReport:
    scheme: str
    K: int
    scenario_key: str
    seed: dict
    sizes: SampleSizes
    decoders: list[DecoderResult]
    ledger: CostLedger
    bounds: list[BoundReport]
    complexity_bound: float | None
    indices: dict
    scenario: Scenario

    def to_dict(self, include_per_k: bool = True) -> dict:
        return {
            "scheme": self.scheme,
            "K": self.K,
            "scenario_key": self.scenario_key,
            "seed": self.seed,
            "sizes": self.sizes.to_dict(),
            "decoders": [r.to_dict(p.alphabet)
                         for r, p in zip(self.decoders, self.scenario.priors())],
            "ledger": self.ledger.to_dict(include_per_k),
            "bounds": [b.to_dict() for b in self.bounds],
            "complexity_bound": self.complexity_bound,
            "indices": self.indices if include_per_k else None,
        }


def _decoder_result(sc: Scenario, i: int, decoded: np.ndarray, exact: Pmf | None,
                    blocks: np.ndarray | None = None) -> DecoderResult:
    q = sc.targets[i]
    f = sc.functions[i]
    true = float(f @ q.mass)
    n_sym = len(q.alphabet)
    if sc.K == 0:
        return DecoderResult(None, true, None, [0.0] * n_sym, None,
                             None if exact is None else tv(exact, q),
                             None if exact is None else abs(float(f @ exact.mass) - true),
                             "exact" if exact is not None else "undefined", decoded, blocks)
    est = float(f[decoded].mean())
    counts = np.bincount(decoded, minlength=n_sym)
    emp = counts / counts.sum()
    tv_emp = tv(Pmf(q.alphabet, emp, validate=False), q)
    if exact is not None:
        return DecoderResult(est, true, abs(est - true), emp.tolist(), tv_emp, tv(exact, q),
                             abs(float(f @ exact.mass) - true), "exact", decoded, blocks)
    return DecoderResult(est, true, abs(est - true), emp.tolist(), tv_emp, None, None,
                         "empirical", decoded, blocks)


def _bounds(sc: Scenario, sizes: SampleSizes) -> tuple[list[BoundReport], float | None]:
    plan = sc.plan
    reps = []
    for i, (q, p, part, f) in enumerate(zip(sc.targets, plan.priors, plan.partitions,
                                            sc.functions)):
        reps.append(bound_report(f, q, p, part, sc.t, sc.t_c, sizes.n_c,
                                 sizes.n_ref[i][:part.n_blocks]))
    complexity = None
    if sizes.n_c >= 2:
        worst = [max(r[c] for r in sizes.n_ref) for c in range(plan.space.n_labels)]
        complexity = avg_complexity_lemma3(plan.p_C, plan.q_C, sizes.n_c, worst)
    return reps, complexity


def _seed(sc: Scenario) -> StreamSeed:
    return StreamSeed(sc.seed, sc.label)


def run_naive_unicast(sc: Scenario) -> RunReport:
    """Per-decoder MRC; decoder i reads coordinate i of the shared pair draws."""
    plan = sc.plan
    sizes = choose_sample_sizes(sc)
    space = plan.space
    n_max = max(sizes.naive)
    views = [(space.views[i], importance_ratios(q, p), sizes.naive[i])
             for i, (q, p) in enumerate(zip(sc.targets, plan.priors))]
    results = mrc_rounds(_seed(sc).child("naive"), space.cdf, space.fallback, n_max,
                         sc.K, views)
    n_dec = sc.n_decoders
    per_k = []
    bits = [_bits(n) for n in sizes.naive]
    for k in range(sc.K):
        per_k.append({"broadcast": 0.0, "broadcast_wire": 0,
                      "unicast": [b[0] for b in bits], "unicast_wire": [b[1] for b in bits]})
    ledger = CostLedger.from_per_k(per_k, n_dec, sc.K * n_max)
    decoders = []
    for i in range(n_dec):
        exact = _try_exact(exact_selected_distribution_mrc, sc.targets[i], plan.priors[i],
                           sizes.naive[i], REPORT_ENUMERATION_CEILING)
        decoders.append(_decoder_result(sc, i, results[i][1], exact))
    reps, complexity = _bounds(sc, sizes)
    indices = {"unicast": [(pos + 1).tolist() for pos, _ in results]}
    return RunReport("naive", sc.K, sc.key(), _seed(sc).to_dict(), sizes, decoders,
                     ledger, reps, complexity, indices, sc)


def _try_exact(fn, *args) -> Pmf | None:
    try:
        return fn(*args).law
    except InfeasibleEnumeration:
        return None


def rejection_caps(sc: Scenario, sizes: SampleSizes) -> list[int]:
    """Per block label: the scenario cap, else the default for the largest pool."""
    space = sc.plan.space
    caps = []
    for c in range(space.n_labels):
        need = max(r[c] for r in sizes.n_ref)
        caps.append(sc.rejection_cap if sc.rejection_cap is not None
                    else default_rejection_cap(need, float(space.block_mass[c])))
    return caps


def run_hierarchical_broadcast(sc: Scenario) -> RunReport:
    """One broadcast block index per round plus a refinement index per decoder."""
    plan = sc.plan
    sizes = choose_sample_sizes(sc)
    space = plan.space
    n_dec = sc.n_decoders
    caps = rejection_caps(sc, sizes)
    seed = _seed(sc)
    if sc.K > 0:
        ratio_C = importance_ratios(plan.q_C, plan.p_C)
        cond = []
        for q, p, part in zip(sc.targets, plan.priors, plan.partitions):
            cond.append(conditional_ratios(q, p, part))
        enc = encode_cells(seed.child("hier"), space, ratio_C, cond, sizes.n_c,
                           sizes.n_ref, caps, sc.K)
        decoded = enc.selected
        raw = sizes.n_c + enc.fresh_raw_draws()
        messages = enc.messages
    else:
        decoded = [np.empty(0, np.int64) for _ in range(n_dec)]
        raw = 0
        messages = [[] for _ in range(n_dec)]
    per_k = []
    for k in range(sc.K):
        b, bw = _bits(sizes.n_c)
        u = [messages[i][k].bit_costs[1] for i in range(n_dec)]
        uw = [messages[i][k].wire_bits[1] for i in range(n_dec)]
        per_k.append({"broadcast": b, "broadcast_wire": bw, "unicast": u, "unicast_wire": uw,
                      "block": messages[0][k].block})
    ledger = CostLedger.from_per_k(per_k, n_dec, raw)
    decoders = []
    for i in range(n_dec):
        part = plan.partitions[i]
        exact = _try_exact(exact_selected_distribution_hier, sc.targets[i], plan.priors[i],
                           part, sizes.n_c, sizes.n_ref[i][:part.n_blocks],
                           REPORT_ENUMERATION_CEILING)
        blocks = np.array([m.block for m in messages[i]], dtype=np.int64)
        decoders.append(_decoder_result(sc, i, decoded[i], exact, blocks))
    reps, complexity = _bounds(sc, sizes)
    indices = {
        "broadcast": [m.block_index for m in messages[0]] if messages[0] else [],
        "unicast": [[m.refine_index for m in msgs] for msgs in messages],
    }
    return RunReport("hierarchical", sc.K, sc.key(), seed.to_dict(), sizes, decoders,
                     ledger, reps, complexity, indices, sc)


def cost_compare(a: RunReport, b: RunReport) -> dict:
    """Bits saved by ``b`` relative to ``a`` (positive means ``b`` is cheaper)."""
    if a.scenario_key != b.scenario_key:
        raise MismatchedScenario("reports come from different scenarios")
    if a.K != b.K:
        raise MismatchedScenario(f"reports use different K ({a.K} vs {b.K})")
    ta, tb = a.ledger.total_bits, b.ledger.total_bits
    wa, wb = a.ledger.total_wire_bits, b.ledger.total_wire_bits
    n_dec = len(a.ledger.unicast_bits)

    def per_round(r: RunReport) -> float | None:
        return r.ledger.raw_prior_draws / r.K if r.K else None

    return {
        "schemes": [a.scheme, b.scheme],
        "K": a.K,
        "total_bits": [ta, tb],
        "total_wire_bits": [wa, wb],
        "savings_bits": ta - tb,
        "savings_wire_bits": wa - wb,
        "relative_savings": (ta - tb) / ta if ta > 0 else 0.0,
        "per_channel": {
            "broadcast": [a.ledger.broadcast_bits, b.ledger.broadcast_bits],
            "unicast": [[a.ledger.unicast_bits[i], b.ledger.unicast_bits[i]]
                        for i in range(n_dec)],
        },
        "complexity_bound": [a.complexity_bound, b.complexity_bound],
        "raw_draws_per_round": [per_round(a), per_round(b)],
    }
