from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from helpers import matched_pair, random_partition
from hypothesis import given
from hypothesis import strategies as st

from hiermrc.bounds import (
    avg_complexity_lemma3,
    bias_bound_lemma1,
    bias_bound_theorem1,
    bound_report,
    deviation_bound_prop1,
    deviation_bound_prop2,
    epsilon_blocks,
    epsilon_from_tail,
    epsilon_lemma1,
    f_norm,
    tail,
    tv_bound_cor1,
)
from hiermrc.dist import Partition, Pmf, condition_on_block, kl
from hiermrc.errors import SupportViolation

Q = Pmf([0, 1], [0.9, 0.1])
PRIOR3 = Pmf("abc", [0.4, 0.2, 0.4])
TARGET3 = Pmf("abc", [0.2 * 2 / 3, 0.2 / 3, 0.8])
PART3 = Partition("abc", [0, 0, 1])


# ---------------------------------------------------------------- epsilon

def test_epsilon_target_equals_prior():
    assert tail(Q, Q, 4.0).tail == 0.0
    assert epsilon_lemma1(Q, Q, 4.0) == pytest.approx(math.exp(-0.5))
    assert epsilon_lemma1(Q, Q, 4.0) == pytest.approx(0.6065, abs=5e-5)


def test_epsilon_vanishes_for_large_t():
    q, p = Pmf("ab", [0.7, 0.3]), Pmf("ab", [0.2, 0.8])
    assert epsilon_lemma1(q, p, 200.0) < 1e-10
    assert epsilon_lemma1(q, p, math.inf) == 0.0


def test_epsilon_full_tail():
    assert epsilon_from_tail(0.0, 1.0) == pytest.approx(math.sqrt(3))


def test_tail_by_hand():
    # log-ratios: log(1.8) > D, log(0.2) < D, so the tail at t = 0 is q(0)
    q, p = Q, Pmf([0, 1], [0.5, 0.5])
    spec = tail(q, p, 0.0)
    assert spec.divergence == pytest.approx(0.9 * math.log(1.8) + 0.1 * math.log(0.2))
    assert spec.tail == pytest.approx(0.9)
    # once t/2 exceeds log(1.8) - D nothing is left
    assert tail(q, p, 2 * (math.log(1.8) - spec.divergence) + 1e-6).tail == 0.0


def test_negative_t_rejected():
    with pytest.raises(ValueError):
        epsilon_lemma1(Q, Q, -1.0)


@given(st.integers(0, 2**32 - 1))
def test_epsilon_monotone_in_t(seed):
    rng = np.random.default_rng(seed)
    q, p = matched_pair(rng, int(rng.integers(2, 6)))
    ts = np.linspace(0, 30, 61)
    eps = [epsilon_lemma1(q, p, float(t)) for t in ts]
    assert all(b <= a + 1e-15 for a, b in itertools.pairwise(eps))
    for t, a, b in zip(ts, eps, eps[1:]):
        if tail(q, p, float(t)).tail == 0:
            assert b < a


# ---------------------------------------------------------------- single-stage bias

def test_lemma1_zero_function():
    assert bias_bound_lemma1([0.0, 0.0], Q, Pmf([0, 1], [0.5, 0.5]), 1.0).bound == 0.0


def test_lemma1_worked_value():
    b = bias_bound_lemma1([1.0, 0.0], Q, Q, 4.0)
    e = math.exp(-0.5)
    assert b.bound == pytest.approx(2 * math.sqrt(0.9) * e / (1 - e))
    assert b.bound == pytest.approx(2.924, abs=1e-3)
    assert b.confidence == pytest.approx(1 - 2 * e)


def test_lemma1_vacuous_flag():
    b = bias_bound_lemma1([1.0, 0.0], Q, Pmf([0, 1], [0.5, 0.5]), 0.0)
    assert b.epsilon > 1 and b.vacuous and b.bound == math.inf


def test_f_norm():
    assert f_norm([3.0, 4.0], Pmf("ab", [0.5, 0.5])) == pytest.approx(math.sqrt(12.5))
    assert f_norm([2.0, 0.0], Pmf("ab", [0.5, 0.5]), 4) == pytest.approx(0.5 ** 0.25 * 2)


# ---------------------------------------------------------------- blocks / hierarchical bias

def test_epsilon_blocks_singletons():
    eb = epsilon_blocks(TARGET3, PRIOR3, Partition.singletons("abc"), 4.0, 4.0)
    assert all(v == pytest.approx(math.exp(-0.5)) for v in eb.per_block.values())
    assert eb.n_blocks == 3


def test_epsilon_blocks_one_block():
    eb = epsilon_blocks(TARGET3, PRIOR3, Partition.trivial("abc"), 4.0, 4.0)
    assert eb.epsilon == pytest.approx(math.exp(-0.5))
    assert eb.epsilon_bar == pytest.approx(epsilon_lemma1(TARGET3, PRIOR3, 4.0))


def test_epsilon_blocks_3x3_direct():
    eb = epsilon_blocks(TARGET3, PRIOR3, PART3, 4.0, 4.0)
    direct = []
    for c in range(2):
        qc, pc = condition_on_block(TARGET3, PART3, c), condition_on_block(PRIOR3, PART3, c)
        pos = qc.mass > 0
        lr = np.log(qc.mass[pos] / pc.mass[pos])
        tl = qc.mass[pos][lr > kl(qc, pc) + 2.0 + 1e-12].sum()
        direct.append(math.sqrt(math.exp(-1.0) + 2 * math.sqrt(tl)))
    assert [eb.per_block[0], eb.per_block[1]] == pytest.approx(direct)
    assert eb.epsilon_bar == pytest.approx(max(direct))


def test_epsilon_blocks_support_violation():
    with pytest.raises(SupportViolation):
        epsilon_blocks(TARGET3, Pmf("abc", [0.5, 0.5, 0.0]), PART3, 1.0, 1.0)


def test_theorem1_worked_value():
    th = bias_bound_theorem1(1.0, 0.1, 0.1, n_blocks=2)
    expected = (2 * math.sqrt(2) / 9) * (2 / 9 + 1) + 2 / 9
    assert th.eq4 == pytest.approx(expected, rel=1e-14)
    assert th.eq4 == pytest.approx(0.6063, abs=5e-5)
    assert th.simplified == pytest.approx(2 * math.sqrt(2) * (2 / 9))
    assert th.confidence == pytest.approx(1 - 2 * (2 * 0.1 + 0.1))


@pytest.mark.parametrize("eps", [0.0, 0.05, 0.3, 0.9])
def test_theorem1_edge_cases(eps):
    assert bias_bound_theorem1(2.0, eps, 0.0).eq4 == pytest.approx(
        2 * math.sqrt(2) * 2.0 * eps / (1 - eps))
    assert bias_bound_theorem1(2.0, 0.0, eps).eq4 == pytest.approx(2 * 2.0 * eps / (1 - eps))


def test_theorem1_zero_norm():
    th = bias_bound_theorem1(0.0, 1.5, 2.0)
    assert th.eq4 == 0.0 and not th.vacuous


def test_theorem1_simplified_only_small_eps():
    assert bias_bound_theorem1(1.0, 0.2, 0.01).simplified is None
    assert bias_bound_theorem1(1.0, 1 / 9, 0.01).simplified is not None
    assert bias_bound_theorem1(1.0, 1.2, 0.0).vacuous


@pytest.mark.parametrize("seed", range(5))
def test_sqrt2_factor_singletons(seed):
    rng = np.random.default_rng(seed)
    q, p = matched_pair(rng, 4, zero_frac=0.0)
    f = rng.normal(size=4)
    t = float(rng.uniform(5, 30))
    eb = epsilon_blocks(q, p, Partition.singletons(range(4)), t, math.inf)
    assert eb.epsilon_bar == 0.0
    th = bias_bound_theorem1(f_norm(f, q), eb.epsilon, eb.epsilon_bar)
    lem = bias_bound_lemma1(f, q, p, t)
    if lem.epsilon < 1:
        assert th.eq4 / lem.bound == pytest.approx(math.sqrt(2), rel=1e-14)


# ---------------------------------------------------------------- TV bound / average complexity

def test_tv_bound_values():
    assert tv_bound_cor1(2, 0.0, 0.0).value == 0.0
    b = tv_bound_cor1(2, 0.02, 0.05)
    assert b.value == pytest.approx(0.38) and not b.vacuous
    assert tv_bound_cor1(5, 0.03, 0.0).value == pytest.approx(0.12)


def test_tv_bound_clamped_and_flagged():
    b = tv_bound_cor1(3, 0.1, 0.2)
    assert b.value == 1.0 and b.raw == pytest.approx(2.0) and b.vacuous
    assert tv_bound_cor1(1, 0.12, 0.0).vacuous


def test_lemma3_worked_value():
    v = avg_complexity_lemma3(Pmf([0, 1], [0.6, 0.4]), Pmf([0, 1], [0.2, 0.8]), 4, (3, 5))
    assert v == pytest.approx(4 + 2 * (4 / 3) * 4.6)
    assert v == pytest.approx(16.27, abs=5e-3)


def test_lemma3_single_block_and_equal_marginals():
    one = Pmf([0], [1.0])
    assert avg_complexity_lemma3(one, one, 5, (7,)) == pytest.approx(5 + 5 / 4 * 7)
    p = Pmf([0, 1], [0.3, 0.7])
    assert avg_complexity_lemma3(p, p, 10**6, (2, 4)) == pytest.approx(10**6 + 3.4, rel=1e-9)
    with pytest.raises(ValueError):
        avg_complexity_lemma3(p, p, 1, (1, 1))


# ---------------------------------------------------------------- deviation bounds

def test_prop1_constant_function():
    d = deviation_bound_prop1([2.0, 2.0], Q, Pmf([0, 1], [0.5, 0.5]), 8.0, 100, 0.1)
    assert d.fluctuation == 0.0 and d.total == d.bias_term and d.interpreted


def test_prop1_scaling_in_K():
    p = Pmf([0, 1], [0.5, 0.5])
    a = deviation_bound_prop1([1.0, 0.0], Q, p, 20.0, 100, 0.1)
    b = deviation_bound_prop1([1.0, 0.0], Q, p, 20.0, 200, 0.1)
    assert b.fluctuation == pytest.approx(a.fluctuation / 2, rel=1e-14)
    assert a.bias_term == b.bias_term
    big = deviation_bound_prop1([1.0, 0.0], Q, p, 20.0, 10**12, 0.1)
    assert big.total == pytest.approx(big.bias_term, rel=1e-9)


def test_prop2_scaling_and_bias_term():
    f = [1.0, 0.0, 2.0]
    a = deviation_bound_prop2(f, TARGET3, PRIOR3, PART3, 12.0, 12.0, 50, 0.2)
    b = deviation_bound_prop2(f, TARGET3, PRIOR3, PART3, 12.0, 12.0, 100, 0.2)
    assert b.fluctuation == pytest.approx(a.fluctuation / 2, rel=1e-14)
    eb = epsilon_blocks(TARGET3, PRIOR3, PART3, 12.0, 12.0)
    assert a.bias_term == bias_bound_theorem1(f_norm(f, TARGET3), eb.epsilon,
                                              eb.epsilon_bar, eb.n_blocks).eq4
    assert "K eps_star" in a.formula


def test_deviation_argument_checks():
    with pytest.raises(ValueError):
        deviation_bound_prop1([1.0, 0.0], Q, Q, 1.0, 0, 0.1)
    with pytest.raises(ValueError):
        deviation_bound_prop2([1.0, 0, 0], TARGET3, PRIOR3, PART3, 1.0, 1.0, 5, 1.5)


# ---------------------------------------------------------------- report

def test_bound_report_fields():
    r = bound_report([1.0, 0.0, 0.0], TARGET3, PRIOR3, PART3, 4.0, 4.0, n_c=4, n_ref=(3, 5))
    d = r.to_dict()
    assert d["norm"] == "L2(q)"
    assert d["confidence"] <= 1
    assert r.avg_complexity_bound is not None
    for key in ("epsilon", "epsilon_bar", "tv_bound", "f_norm"):
        assert d[key] >= 0


def test_bound_report_inf_serialised():
    r = bound_report([1.0, 0.0, 0.0], TARGET3, PRIOR3, PART3, 0.0, 0.0, n_c=1, n_ref=(1, 1))
    d = r.to_dict()
    assert r.avg_complexity_bound is None and any("n_c < 2" in n for n in r.notes)
    assert all(not (isinstance(v, float) and math.isinf(v)) for v in d.values())


@given(st.integers(0, 2**32 - 1))
def test_report_entries_non_negative(seed):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(2, 6))
    q, p = matched_pair(rng, size)
    part = random_partition(rng, size)
    r = bound_report(rng.normal(size=size), q, p, part, float(rng.uniform(0, 20)),
                     float(rng.uniform(0, 20)))
    assert r.epsilon >= 0 and r.epsilon_bar >= 0 and r.bias_bound >= 0
    assert r.tv_bound >= 0 and r.confidence <= 1
