"""Command-line front end: ``hiermrc {gk,run,bounds,oracle-check,sweep}``.

Exit codes: 0 ok, 2 invalid scenario, 3 oracle infeasible,
4 sampling fault, 5 check failed.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import datetime as _dt
import json
import math
import os
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    bias_bound_lemma1,
    bound_report,
    deviation_bound_prop1,
    deviation_bound_prop2,
    epsilon_blocks,
    tv_bound_cor1,
)
from .common_info import (
    block_entropy_bounds,
    gk_decompose,
    verify_common_variable,
)
from .dist import tv
from .errors import (
    DegenerateWeights,
    HierMrcError,
    InfeasibleEnumeration,
    RejectionCapExceeded,
    ScenarioError,
    SupportViolation,
    ZeroBlockMass,
)
from .hier import conditional_ratios, hier_trials
from .mrc import importance_ratios, mrc_rounds
from .oracles import (
    brute_force_gk,
    exact_bias,
    exact_selected_distribution_hier,
    exact_selected_distribution_mrc,
)
from .protocol import (
    RunReport,
    Scenario,
    choose_sample_sizes,
    cost_compare,
    rejection_caps,
    run_hierarchical_broadcast,
    run_naive_unicast,
)
from .randomness import StreamSeed

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_SAMPLING = 4
EXIT_CHECK = 5

WORKERS_ENV = "HIERMRC_WORKERS"
SWEEP_PARAMS = ("n", "n_c", "t", "t_c", "K")


class _Invalid(Exception):
    pass


# ---------------------------------------------------------------- io helpers

def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _Invalid(f"cannot read scenario: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _Invalid(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise _Invalid("scenario must be a JSON object")
    return Scenario.from_dict(d)


def dump_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def body_text(body: dict) -> str:
    return json.dumps(_clean(body), indent=2, sort_keys=True)


def write_report(kind: str, body: dict, out: str | None) -> None:
    """Report = header + body; the body alone is deterministic."""
    report = {
        "tool": "hiermrc",
        "tool_version": __version__,
        "kind": kind,
        "generated": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "body": _clean(body),
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _workers(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _ordered_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Map preserving input order, optionally across processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _human(args):
    """Summary lines go to stderr whenever the JSON report owns stdout."""
    return sys.stderr if args.out in (None, "-") else sys.stdout


# ---------------------------------------------------------------- gk

def cmd_gk(args) -> int:
    sc = load_scenario(args.scenario)
    if sc.joint is None:
        raise _Invalid("gk needs a two-decoder scenario with a joint prior")
    dec = sc.plan.decomposition
    ver = verify_common_variable(sc.joint, dec)
    hmin, mi = block_entropy_bounds(sc.joint)
    body = {
        "decomposition": dec.to_dict(),
        "verification": ver.to_dict(),
        "upper_bounds_nats": {"min_entropy": hmin, "mutual_information": mi},
        "from_partition_override": sc.partitions is not None,
    }
    n = dec.block_count
    print(f"{n} block{'s' if n != 1 else ''}, C_GK = {dec.cgk_nats:.4f} nats "
          f"= {dec.cgk_bits:.4f} bits")
    for c, (b1, b2) in enumerate(dec.blocks()):
        print(f"  block {c}: p_C = {dec.p_C.mass[c]:.4f}  decoder1 {list(b1)}  "
              f"decoder2 {list(b2)}")
    print(f"  conditional-independence residual {ver.max_ci_residual:.3g}, "
          f"disagreement {ver.disagreement_prob:.3g}, maximal {ver.maximal}")
    if args.out:
        write_report("gk", body, args.out)
    return EXIT_OK if ver.passed else EXIT_CHECK


# ---------------------------------------------------------------- run

def _run_one(job: tuple[dict, str, str]) -> dict:
    sc_dict, label, scheme = job
    sc = Scenario.from_dict(sc_dict)
    sc = sc.with_label(label)
    out = {"label": label}
    reps: dict[str, RunReport] = {}
    if scheme in ("naive", "both"):
        reps["naive"] = run_naive_unicast(sc)
    if scheme in ("hier", "both"):
        reps["hierarchical"] = run_hierarchical_broadcast(sc)
    for name, r in reps.items():
        out[name] = r.to_dict()
    if len(reps) == 2:
        out["compare"] = cost_compare(reps["naive"], reps["hierarchical"])
    return _clean(out)


def _mean_se(xs: list[float]) -> dict:
    arr = np.asarray([x for x in xs if x is not None], dtype=np.float64)
    if arr.size == 0:
        return {"mean": None, "stderr": None, "n": 0}
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "stderr": se, "n": int(arr.size)}


def _aggregate(runs: list[dict], scheme: str) -> dict:
    recs = [r[scheme] for r in runs]
    n_dec = len(recs[0]["decoders"])
    return {
        "total_bits": _mean_se([r["ledger"]["total_bits"] for r in recs]),
        "total_wire_bits": _mean_se([r["ledger"]["total_wire_bits"] for r in recs]),
        "decoders": [{
            "abs_bias": _mean_se([r["decoders"][i]["abs_bias"] for r in recs]),
            "tv": _mean_se([r["decoders"][i]["tv_reported"] for r in recs]),
            "tv_empirical": _mean_se([r["decoders"][i]["tv_empirical"] for r in recs]),
        } for i in range(n_dec)],
    }


def run_body(sc: Scenario, scheme: str, trials: int, workers: int = 1) -> dict:
    sc_dict = sc.to_dict()
    labels = [f"{sc.label}/trial/{i}" for i in range(trials)]
    runs = _ordered_map(_run_one, [(sc_dict, lab, scheme) for lab in labels], workers)
    if trials > 1:
        # per-round detail is replayable from the trial labels
        for r in runs:
            for name in ("naive", "hierarchical"):
                if name in r:
                    r[name]["ledger"].pop("per_k", None)
                    r[name]["indices"] = None
    schemes = [s for s in ("naive", "hierarchical") if s in runs[0]]
    summary = {s: _aggregate(runs, s) for s in schemes}
    if len(schemes) == 2:
        summary["hierarchical_cheaper"] = (summary["hierarchical"]["total_bits"]["mean"]
                                           < summary["naive"]["total_bits"]["mean"])
    return {
        "scenario": sc_dict,
        "scheme": scheme,
        "trials": trials,
        "resolved_sizes": choose_sample_sizes(sc).to_dict(),
        "summary": summary,
        "runs": runs,
    }


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    if args.trials < 1:
        raise _Invalid("--trials must be at least 1")
    body = run_body(sc, args.scheme, args.trials, _workers(args.workers))
    for s in ("naive", "hierarchical"):
        if s in body["summary"]:
            tb = body["summary"][s]["total_bits"]
            print(f"{s:>12}: total bits {tb['mean']:.2f} (se {tb['stderr']:.2f})",
                  file=_human(args))
    write_report("run", body, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- bounds

def bounds_body(sc: Scenario, t: float, t_c: float, eps_star: float) -> dict:
    sc = replace(sc, t=t, t_c=t_c)
    sizes = choose_sample_sizes(sc)
    plan = sc.plan
    out = []
    for i, (q, p, part, f) in enumerate(zip(sc.targets, plan.priors, plan.partitions,
                                            sc.functions)):
        rep = bound_report(f, q, p, part, t, t_c, sizes.n_c,
                           sizes.n_ref[i][:part.n_blocks])
        d = rep.to_dict()
        K = max(sc.K, 1)
        p1 = deviation_bound_prop1(f, q, p, t, K, eps_star)
        p2 = deviation_bound_prop2(f, q, p, part, t_c, t, K, eps_star)
        d["deviation_single_stage"] = _clean(vars(p1))
        d["deviation_hierarchical"] = _clean(vars(p2))
        out.append(d)
    return {"t": t, "t_c": t_c, "eps_star": eps_star, "sizes": sizes.to_dict(),
            "decoders": out}


def cmd_bounds(args) -> int:
    sc = load_scenario(args.scenario)
    t = sc.t if args.t is None else args.t
    t_c = sc.t_c if args.tc is None else args.tc
    if t < 0 or t_c < 0:
        raise _Invalid("slacks must be non-negative")
    body = bounds_body(sc, t, t_c, args.eps_star)
    for i, d in enumerate(body["decoders"]):
        print(f"decoder {i + 1}: epsilon = {d['epsilon']:.4f}, epsilon_bar = "
              f"{d['epsilon_bar']:.4f}, lemma bias <= {d['lemma1_bias_bound']} "
              f"(conf {d['lemma1_confidence']:.4f}), hierarchical bias <= "
              f"{d['bias_bound']} (conf {d['confidence']:.4f}), tv <= {d['tv_bound']:.4f}"
              f"{' [vacuous]' if d['tv_vacuous'] else ''}", file=_human(args))
    write_report("bounds", body, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- oracle check

def _three_sigma(empirical: np.ndarray, exact: np.ndarray, n: int) -> bool:
    sd = np.sqrt(exact * (1 - exact) / n)
    return bool(np.all(np.abs(empirical - exact) <= 3 * sd + 1e-12))


def simulate_naive_laws(sc: Scenario, sizes, trials: int, label: str) -> list[np.ndarray]:
    plan = sc.plan
    space = plan.space
    views = [(space.views[i], importance_ratios(q, p), sizes.naive[i])
             for i, (q, p) in enumerate(zip(sc.targets, plan.priors))]
    res = mrc_rounds(StreamSeed(sc.seed, label), space.cdf, space.fallback,
                     max(sizes.naive), trials, views)
    return [np.bincount(s, minlength=len(p.alphabet)) / trials
            for (_, s), p in zip(res, plan.priors)]


def simulate_hier_laws(sc: Scenario, sizes, trials: int, label: str) -> list[np.ndarray]:
    """Independent single-round encodes, so each decode is a fresh draw."""
    plan = sc.plan
    space = plan.space
    ratio_C = importance_ratios(plan.q_C, plan.p_C)
    cond = [conditional_ratios(q, p, part)
            for q, p, part in zip(sc.targets, plan.priors, plan.partitions)]
    caps = rejection_caps(sc, sizes)
    batch = hier_trials(StreamSeed(sc.seed, label), space, ratio_C, cond, sizes.n_c,
                        sizes.n_ref, caps, trials)
    return [np.bincount(sel, minlength=len(p.alphabet)) / trials
            for sel, p in zip(batch.selected, plan.priors)]


def oracle_checks(sc: Scenario, trials: int) -> list[dict]:
    checks: list[dict] = []

    def add(name: str, passed: bool, detail) -> None:
        checks.append({"check": name, "passed": bool(passed), "detail": _clean(detail)})

    plan = sc.plan
    if sc.joint is not None:
        dec = plan.decomposition
        ver = verify_common_variable(sc.joint, dec)
        add("gk agreement", ver.agreement_ok, ver.disagreement_prob)
        add("gk conditional independence", ver.ci_ok, ver.max_ci_residual)
        add("gk maximality", ver.maximal, {"splittable_blocks": ver.splittable_blocks})
        n1, n2 = sc.joint.shape
        if n1 <= 5 and n2 <= 5:
            b1, b2 = brute_force_gk(sc.joint)
            ref = gk_decompose(sc.joint, sc.atol)
            add("gk matches exhaustive search",
                b1 == ref.partition1 and b2 == ref.partition2
                and b1 == dec.partition1 and b2 == dec.partition2,
                {"exhaustive": [b1.blocks(), b2.blocks()]})
    sizes = choose_sample_sizes(sc)
    naive_sim = simulate_naive_laws(sc, sizes, trials, f"{sc.label}/oracle/naive")
    hier_sim = simulate_hier_laws(sc, sizes, trials, f"{sc.label}/oracle/hier")
    for i, (q, p, part, f) in enumerate(zip(sc.targets, plan.priors, plan.partitions,
                                            sc.functions)):
        tag = f"decoder {i + 1}"
        mrc_law = exact_selected_distribution_mrc(q, p, sizes.naive[i])
        n_ref = sizes.n_ref[i][:part.n_blocks]
        hier_law = exact_selected_distribution_hier(q, p, part, sizes.n_c, n_ref)
        add(f"{tag} mrc law sums to 1", abs(mrc_law.law.mass.sum() - 1) <= 1e-12,
            {"law": mrc_law.law.mass, "size": mrc_law.enumeration_size})
        add(f"{tag} hierarchical law sums to 1", abs(hier_law.law.mass.sum() - 1) <= 1e-12,
            {"law": hier_law.law.mass, "size": hier_law.enumeration_size})
        add(f"{tag} mrc simulation within 3 sigma",
            _three_sigma(naive_sim[i], mrc_law.law.mass, trials),
            {"empirical": naive_sim[i], "exact": mrc_law.law.mass, "trials": trials})
        add(f"{tag} hierarchical simulation within 3 sigma",
            _three_sigma(hier_sim[i], hier_law.law.mass, trials),
            {"empirical": hier_sim[i], "exact": hier_law.law.mass, "trials": trials})
        if part.n_blocks == 1 or int((plan.p_C.mass > 0).sum()) == 1:
            single = exact_selected_distribution_mrc(q, p, n_ref[int(np.argmax(plan.p_C.mass))])
            diff = float(np.abs(single.law.mass - hier_law.law.mass).max())
            add(f"{tag} one-block law equals mrc law", diff <= 1e-12, diff)
        eb = epsilon_blocks(q, p, part, sc.t_c, sc.t)
        tvb = tv_bound_cor1(eb.n_blocks, eb.epsilon, eb.epsilon_bar)
        tv_exact = tv(hier_law.law, q)
        if tvb.vacuous:
            add(f"{tag} tv bound (vacuous, not checked)", True,
                {"tv": tv_exact, "bound": tvb.raw})
        else:
            add(f"{tag} tv bound", tv_exact <= tvb.value, {"tv": tv_exact, "bound": tvb.value})
        lem = bias_bound_lemma1(f, q, p, sc.t)
        add(f"{tag} exact bias reported", True,
            {"mrc": exact_bias(f, mrc_law.law, q), "hierarchical": exact_bias(f, hier_law.law, q),
             "lemma_bound": lem.bound, "lemma_vacuous": lem.vacuous})
    return checks


def cmd_oracle_check(args) -> int:
    sc = load_scenario(args.scenario)
    checks = oracle_checks(sc, args.trials)
    width = max(len(c["check"]) for c in checks)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['check']:<{width}}",
              file=_human(args))
    write_report("oracle-check", {"scenario": sc.to_dict(), "checks": checks}, args.out)
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_CHECK


# ---------------------------------------------------------------- sweep

SWEEP_COLUMNS = [
    "param", "value", "scheme", "decoder", "estimate", "abs_bias", "tv", "tv_method",
    "total_bits", "total_wire_bits", "epsilon", "epsilon_bar", "lemma_bias_bound",
    "hier_bias_bound", "tv_bound", "fluctuation", "complexity_bound",
]


def _with_param(sc: Scenario, param: str, value: float) -> Scenario:
    if param == "n":
        return replace(sc, naive_n=(int(value),) * sc.n_decoders)
    if param == "n_c":
        return replace(sc, n_c=int(value))
    if param == "K":
        return replace(sc, K=int(value))
    return replace(sc, **{param: float(value)})


def _sweep_rows(job: tuple[dict, str, float, str, float]) -> list[dict]:
    sc_dict, param, value, scheme, eps_star = job
    sc = _with_param(Scenario.from_dict(sc_dict), param, value)
    sc = sc.with_label(f"{sc.label}/sweep/{param}/{value}")
    reps = []
    if scheme in ("naive", "both"):
        reps.append(run_naive_unicast(sc))
    if scheme in ("hier", "both"):
        reps.append(run_hierarchical_broadcast(sc))
    rows = []
    plan = sc.plan
    for rep in reps:
        for i, d in enumerate(rep.decoders):
            b = rep.bounds[i]
            q, p, part, f = sc.targets[i], plan.priors[i], plan.partitions[i], sc.functions[i]
            K = max(sc.K, 1)
            if rep.scheme == "naive":
                fl = deviation_bound_prop1(f, q, p, sc.t, K, eps_star).fluctuation
            else:
                fl = deviation_bound_prop2(f, q, p, part, sc.t_c, sc.t, K, eps_star).fluctuation
            rows.append({
                "param": param, "value": value, "scheme": rep.scheme, "decoder": i + 1,
                "estimate": d.estimate, "abs_bias": d.abs_bias,
                "tv": d.tv_exact if d.tv_exact is not None else d.tv_empirical,
                "tv_method": d.tv_method,
                "total_bits": rep.ledger.total_bits,
                "total_wire_bits": rep.ledger.total_wire_bits,
                "epsilon": b.epsilon, "epsilon_bar": b.epsilon_bar,
                "lemma_bias_bound": b.lemma1_bias_bound, "hier_bias_bound": b.bias_bound,
                "tv_bound": b.tv_bound_raw, "fluctuation": fl,
                "complexity_bound": rep.complexity_bound,
            })
    return rows


def sweep_rows(sc: Scenario, param: str, values: Sequence[float], scheme: str,
               eps_star: float = 0.1, workers: int = 1) -> list[dict]:
    if param not in SWEEP_PARAMS:
        raise _Invalid(f"--param must be one of {SWEEP_PARAMS}")
    sc_dict = sc.to_dict()
    jobs = [(sc_dict, param, v, scheme, eps_star) for v in values]
    return [row for rows in _ordered_map(_sweep_rows, jobs, workers) for row in rows]


def _parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise _Invalid(f"--values: {exc}") from exc
    if not vals:
        raise _Invalid("--values is empty")
    return [int(v) if v.is_integer() else v for v in vals]


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    rows = sweep_rows(sc, args.param, _parse_values(args.values), args.scheme,
                      args.eps_star, _workers(args.workers))
    with contextlib.ExitStack() as stack:
        fh = sys.stdout
        if args.out and args.out != "-":
            fh = stack.enter_context(open(args.out, "w", newline=""))
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_COLUMNS})
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hiermrc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hiermrc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gk", help="common-information block decomposition")
    p.add_argument("scenario")
    p.add_argument("--out", help="write a JSON report here")
    p.set_defaults(func=cmd_gk)

    p = sub.add_parser("run", help="run the naive and/or hierarchical schemes")
    p.add_argument("scenario")
    p.add_argument("--scheme", choices=("naive", "hier", "both"), default="both")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--workers", type=int, default=None,
                   help=f"parallel trial workers (default ${WORKERS_ENV} or 1)")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", help="evaluate every analytical bound")
    p.add_argument("scenario")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--tc", type=float, default=None)
    p.add_argument("--eps-star", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("oracle-check", help="compare samplers with exact oracles")
    p.add_argument("scenario")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("sweep", help="tabulate results over one parameter")
    p.add_argument("scenario")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated list")
    p.add_argument("--scheme", choices=("naive", "hier", "both"), default="both")
    p.add_argument("--eps-star", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (_Invalid, ScenarioError, SupportViolation) as exc:
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID
    except InfeasibleEnumeration as exc:
        _say(f"oracle infeasible: {exc}")
        return EXIT_INFEASIBLE
    except RejectionCapExceeded as exc:
        _say(f"sampling fault: {exc} (seed {exc.seed}, stream {exc.label!r})")
        return EXIT_SAMPLING
    except (DegenerateWeights, ZeroBlockMass) as exc:
        _say(f"sampling fault: {exc}")
        return EXIT_SAMPLING
    except HierMrcError as exc:
        # BlockTargetMismatch and friends are scenario problems
        _say(f"invalid scenario: {exc}")
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
