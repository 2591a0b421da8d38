from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from helpers import matched_pair, multinomial_ok, random_partition
from hypothesis import given
from hypothesis import strategies as st

from hiermrc.common_info import gk_decompose
from hiermrc.dist import Partition, Pmf, block_marginal, condition_on_block
from hiermrc.errors import (
    IndexOutOfRange,
    RejectionCapExceeded,
    SupportViolation,
    ZeroBlockMass,
)
from hiermrc.hier import (
    CellSpace,
    HierConfig,
    HierMessage,
    block_aux,
    block_proposals,
    conditional_aux,
    conditional_proposals,
    default_rejection_cap,
    encode_cells,
    hier_decode,
    hier_encode,
    hier_encode_detail,
    sample_size,
    size_for,
)
from hiermrc.mrc import importance_ratios
from hiermrc.oracles import (
    exact_selected_distribution_hier,
    exact_selected_distribution_mrc,
)
from hiermrc.randomness import StreamSeed, derive

PRIOR = Pmf("abc", [0.4, 0.2, 0.4])
PART = Partition("abc", [0, 0, 1])
TARGET = Pmf("abc", [0.2 * 2 / 3, 0.2 / 3, 0.8])


def cfg_for(target, prior, part, n_c, n_ref, cap=None):
    return HierConfig.from_divergences(target, prior, part, 0.0, 0.0, n_c=n_c,
                                       n_ref=n_ref, rejection_cap=cap)


def decoded_law(seed, target, prior, cfg, K):
    enc = hier_encode_detail(seed, target, prior, cfg, K)
    return np.bincount(enc.selected[0], minlength=len(prior.alphabet)) / K


# ---------------------------------------------------------------- sizes

def test_sample_size_rounding():
    assert sample_size(0.0, 0.0) == 1
    assert sample_size(math.log(11), 0.0) == 11
    assert sample_size(1.0, 1.0) == math.ceil(math.exp(2))


def test_size_for_point_prior_is_one():
    p = Pmf("ab", [1.0, 0.0])
    assert size_for(p, p, 5.0) == 1


def test_default_cap():
    assert default_rejection_cap(10, 0.5) == 1000


# ---------------------------------------------------------------- block stage

def test_block_proposals_one_block():
    labels = block_proposals(StreamSeed(1), PRIOR, Partition.trivial("abc"), 20)
    assert set(labels.tolist()) == {0}


def test_block_proposals_singletons_match_symbol_draws():
    from hiermrc.mrc import draw_proposal_indices
    s = StreamSeed(2, "single")
    assert np.array_equal(block_proposals(s, PRIOR, Partition.singletons("abc"), 50),
                          draw_proposal_indices(s, PRIOR, 50))


def test_block_proposals_frequencies():
    labels = block_proposals(StreamSeed(3, "freq"), PRIOR, PART, 100_000)
    freq = np.bincount(labels, minlength=2) / 1e5
    assert np.allclose(freq, [0.6, 0.4], atol=0.01)


def test_block_aux_examples():
    p_C, q_C = Pmf([0, 1], [0.6, 0.4]), Pmf([0, 1], [0.2, 0.8])
    assert block_aux(q_C, p_C, [0, 1]).weights == pytest.approx([1 / 7, 6 / 7])
    assert block_aux(p_C, p_C, [0, 1, 1]).weights == pytest.approx([1 / 3] * 3)
    assert block_aux(q_C, p_C, [1, 1]).weights == pytest.approx([0.5, 0.5])


def test_block_aux_support_violation():
    with pytest.raises(SupportViolation):
        block_aux(Pmf([0, 1], [0.5, 0.5]), Pmf([0, 1], [1.0, 0.0]), [0])


# ---------------------------------------------------------------- refinement stage

def test_conditional_aux_examples():
    prior_c, target_c = Pmf("xy", [2 / 3, 1 / 3]), Pmf("xy", [0.5, 0.5])
    assert conditional_aux(target_c, prior_c, ["x", "y"]).weights == pytest.approx([1 / 3, 2 / 3])
    assert conditional_aux(prior_c, prior_c, ["x", "y", "y"]).weights == pytest.approx([1 / 3] * 3)
    point = Pmf("xy", [1.0, 0.0])
    assert conditional_aux(point, point, ["x", "x"]).weights == pytest.approx([0.5, 0.5])


def test_conditional_proposals_one_block_never_rejects():
    syms, raw = conditional_proposals(StreamSeed(4), PRIOR, Partition.trivial("abc"),
                                      0, 30, 30)
    assert raw == 30 and len(syms) == 30


def test_conditional_proposals_singleton_block():
    syms, raw = conditional_proposals(StreamSeed(5), PRIOR, PART, 1, 25, 10_000)
    assert set(syms) == {"c"}
    assert raw >= 25


def test_rejection_rate():
    _, raw = conditional_proposals(StreamSeed(6, "rate"), PRIOR, PART, 0, 1000, 10**6)
    assert abs(raw / 1000 - 1 / 0.6) < 0.1 / 0.6


def test_acceptance_law():
    syms, _ = conditional_proposals(StreamSeed(7, "acc"), PRIOR, PART, 0, 100_000, 10**7)
    emp = np.array([syms.count("a"), syms.count("b")]) / 1e5
    exact = condition_on_block(PRIOR, PART, 0).mass[:2]
    assert multinomial_ok(emp, exact, 100_000)


def test_rejection_cap_exceeded():
    with pytest.raises(RejectionCapExceeded) as err:
        conditional_proposals(StreamSeed(8, "cap"), PRIOR, PART, 1, 50, 50)
    assert err.value.block == 1


def test_zero_mass_block():
    prior = Pmf("abc", [0.5, 0.5, 0.0])
    with pytest.raises(ZeroBlockMass):
        conditional_proposals(StreamSeed(9), prior, PART, 1, 1, 10)


def test_cap_below_target_rejected():
    with pytest.raises(ValueError):
        conditional_proposals(StreamSeed(9), PRIOR, PART, 0, 10, 5)


def test_conditional_proposals_joint(joint3x3):
    dec = gk_decompose(joint3x3)
    pairs, raw = conditional_proposals(StreamSeed(10), joint3x3, dec, 0, 40, 4000)
    assert raw >= 40
    assert all(y1 in "ab" and y2 in "de" for y1, y2 in pairs)
    with pytest.raises(TypeError):
        conditional_proposals(StreamSeed(10), joint3x3, PART, 0, 1, 10)


# ---------------------------------------------------------------- config and messages

def test_config_validation():
    with pytest.raises(ValueError):
        HierConfig(PART, 0, (1, 1), (10, 10))
    with pytest.raises(ValueError):
        HierConfig(PART, 1, (1,), (10,))
    with pytest.raises(ValueError):
        HierConfig(PART, 1, (5, 1), (4, 10))


def test_config_default_sizes():
    cfg = HierConfig.from_divergences(TARGET, PRIOR, PART, 0.0, 0.0)
    q_C, p_C = block_marginal(TARGET, PART), block_marginal(PRIOR, PART)
    assert cfg.n_c == size_for(q_C, p_C, 0.0)
    # the singleton block {c} has a point-mass conditional prior
    assert cfg.n_ref[1] == 1
    assert cfg.rejection_cap == (math.ceil(50 * cfg.n_ref[0] / 0.6), math.ceil(50 / 0.4))


def test_message_range_and_costs():
    m = HierMessage(3, 2, 0, 4, 5, 7)
    assert m.bit_costs == (2.0, math.log2(5))
    assert m.wire_bits == (2, 3)
    with pytest.raises(IndexOutOfRange):
        HierMessage(5, 1, 0, 4, 5, 7)
    with pytest.raises(IndexOutOfRange):
        HierMessage(1, 0, 0, 4, 5, 7)


def test_cost_additivity():
    cfg = cfg_for(TARGET, PRIOR, PART, 6, (5, 3))
    for m in hier_encode(StreamSeed(11), TARGET, PRIOR, cfg, 200):
        assert m.bit_costs == (math.log2(6), math.log2(cfg.n_ref[m.block]))
        assert m.raw_draws >= m.n_ref


def test_reuse_flags():
    cfg = cfg_for(TARGET, PRIOR, PART, 4, (3, 2))
    msgs = hier_encode(StreamSeed(12), TARGET, PRIOR, cfg, 50)
    seen = set()
    for m in msgs:
        assert m.reused == (m.block in seen)
        seen.add(m.block)


# ---------------------------------------------------------------- round trip

def test_round_trip_example():
    cfg = cfg_for(TARGET, PRIOR, PART, 3, (3, 3))
    s = StreamSeed(13)
    enc = hier_encode_detail(s, TARGET, PRIOR, cfg, 100)
    decoded = [hier_decode(s, PRIOR, PART, cfg, m) for m in enc.messages[0]]
    assert decoded == [PRIOR.alphabet[int(x)] for x in enc.selected[0]]


def test_round_trip_harness_1000():
    rng = np.random.default_rng(1234)
    agree = 0
    for trial in range(1000):
        size = int(rng.integers(1, 6))
        q, p = matched_pair(rng, size, zero_frac=0.0)
        part = random_partition(rng, size)
        cfg = cfg_for(q, p, part, int(rng.integers(1, 6)),
                      tuple(int(x) for x in rng.integers(1, 6, part.n_blocks)))
        s = StreamSeed(int(rng.integers(2**63)), f"h/{trial}")
        (msg,) = hier_encode(s, q, p, cfg, 1)
        enc = hier_encode_detail(s, q, p, cfg, 1)
        agree += hier_decode(s, p, part, cfg, msg) == p.alphabet[int(enc.selected[0][0])]
    assert agree == 1000


@given(st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(2, 6))
    q, p = matched_pair(rng, size)
    part = random_partition(rng, size)
    cfg = cfg_for(q, p, part, int(rng.integers(1, 8)),
                  tuple(int(x) for x in rng.integers(1, 8, part.n_blocks)), cap=10**6)
    s = StreamSeed(seed, "prop")
    enc = hier_encode_detail(s, q, p, cfg, 5)
    for m, x in zip(enc.messages[0], enc.selected[0]):
        assert hier_decode(s, p, part, cfg, m) == p.alphabet[int(x)]


def test_decode_rejects_out_of_range():
    cfg = cfg_for(TARGET, PRIOR, PART, 3, (3, 3))
    (m,) = hier_encode(StreamSeed(14), TARGET, PRIOR, cfg, 1)
    object.__setattr__(m, "refine_index", 9)
    with pytest.raises(IndexOutOfRange):
        hier_decode(StreamSeed(14), PRIOR, PART, cfg, m)


def test_singleton_blocks_refinement_trivial():
    part = Partition.singletons("abc")
    cfg = cfg_for(TARGET, PRIOR, part, 8, (1, 1, 1))
    s = StreamSeed(15)
    for m in hier_encode(s, TARGET, PRIOR, cfg, 100):
        assert m.refine_index == 1 and m.bit_costs[1] == 0.0
        assert hier_decode(s, PRIOR, part, cfg, m) == PRIOR.alphabet[m.block]


def test_two_decoders_share_block_stage(joint3x3):
    dec = gk_decompose(joint3x3)
    space = CellSpace.from_joint(joint3x3, dec)
    assert np.array_equal(space.decoder_block_of_cell(0)[space.block_of_cell >= 0],
                          space.decoder_block_of_cell(1)[space.block_of_cell >= 0])


# ---------------------------------------------------------------- laws

def test_three_symbol_law_matches_oracle():
    cfg = cfg_for(TARGET, PRIOR, PART, 3, (3, 3))
    K = 10_000
    exact = exact_selected_distribution_hier(TARGET, PRIOR, PART, 3, (3, 3)).law.mass
    counts = np.zeros(3)
    # one fresh encode per transmission so the K samples are independent
    for k in range(K):
        counts += decoded_law(StreamSeed(16, f"law/{k}"), TARGET, PRIOR, cfg, 1)
    assert multinomial_ok(counts / K, exact, K)


@pytest.mark.parametrize("case", range(5))
def test_one_block_equals_standard_mrc(case):
    rng = np.random.default_rng(50 + case)
    size = int(rng.integers(2, 5))
    q, p = matched_pair(rng, size, zero_frac=0.0)
    n = int(rng.integers(1, 6))
    hier = exact_selected_distribution_hier(q, p, Partition.trivial(range(size)),
                                            int(rng.integers(1, 5)), (n,)).law
    flat = exact_selected_distribution_mrc(q, p, n).law
    assert np.allclose(hier.mass, flat.mass, atol=1e-12, rtol=0)


@pytest.mark.parametrize("case", range(5))
def test_singleton_blocks_equal_block_mrc(case):
    rng = np.random.default_rng(80 + case)
    size = int(rng.integers(2, 5))
    q, p = matched_pair(rng, size, zero_frac=0.0)
    part = Partition.singletons(range(size))
    n_c = int(rng.integers(1, 6))
    hier = exact_selected_distribution_hier(q, p, part, n_c, (1,) * size).law
    block = exact_selected_distribution_mrc(block_marginal(q, part),
                                            block_marginal(p, part), n_c).law
    assert np.allclose(hier.mass, block.mass, atol=1e-12, rtol=0)


@pytest.mark.parametrize("case", range(4))
def test_constant_per_block_function_has_block_bias(case):
    rng = np.random.default_rng(90 + case)
    size = int(rng.integers(3, 6))
    q, p = matched_pair(rng, size, zero_frac=0.0)
    part = random_partition(rng, size)
    f_C = rng.normal(size=part.n_blocks)
    f = f_C[part.block_of]
    n_c = int(rng.integers(1, 5))
    n_ref = tuple(int(x) for x in rng.integers(1, 4, part.n_blocks))
    law = exact_selected_distribution_hier(q, p, part, n_c, n_ref).law
    q_C, p_C = block_marginal(q, part), block_marginal(p, part)
    block_law = exact_selected_distribution_mrc(q_C, p_C, n_c).law
    bias = f @ law.mass - f @ q.mass
    block_bias = f_C @ block_law.mass - f_C @ q_C.mass
    assert bias == pytest.approx(block_bias, abs=1e-12)


def test_encode_cells_per_decoder_raw_counts():
    one = CellSpace.from_pmf(PRIOR, PART)
    # two decoders that both observe the symbol itself
    space = replace(one, views=one.views * 2, partitions=one.partitions * 2)
    p_C = Pmf([0, 1], space.block_mass)
    ratio_C = importance_ratios(block_marginal(TARGET, PART), p_C)
    cond = np.ones(3)
    enc = encode_cells(StreamSeed(17), space, ratio_C, [cond, cond], 3,
                       [(2, 2), (6, 6)], (10_000, 10_000), 20)
    for a, b in zip(*enc.messages):
        assert a.block == b.block and a.raw_draws <= b.raw_draws
    assert enc.fresh_raw_draws() == sum(enc.pool_raw.values())


def test_refinement_stream_prefix_shared():
    """A smaller pool is a prefix of the larger one drawn from the same stream."""
    space = CellSpace.from_pmf(PRIOR, PART)
    a, _, _ = derive(StreamSeed(18)).rejection(space.cdf, space.fallback,
                                               space.block_of_cell, 0, 5, 1000)
    b, _, _ = derive(StreamSeed(18)).rejection(space.cdf, space.fallback,
                                               space.block_of_cell, 0, 9, 1000)
    assert np.array_equal(a, b[:5])


# ---------------------------------------------------------------- batched trials

def _setup(target, prior, part, n_c, n_ref):
    from hiermrc.hier import conditional_ratios
    cfg = cfg_for(target, prior, part, n_c, n_ref)
    space = CellSpace.from_pmf(prior, part)
    ratio_C = importance_ratios(block_marginal(target, part), block_marginal(prior, part))
    return cfg, space, ratio_C, conditional_ratios(target, prior, part)


@pytest.mark.parametrize("seed", range(4))
def test_trials_match_single_encodes(seed):
    from hiermrc.hier import hier_trials
    rng = np.random.default_rng(300 + seed)
    size = int(rng.integers(2, 6))
    q, p = matched_pair(rng, size, zero_frac=0.0)
    part = random_partition(rng, size)
    n_ref = tuple(int(x) for x in rng.integers(1, 6, part.n_blocks))
    cfg, space, ratio_C, cond = _setup(q, p, part, int(rng.integers(1, 6)), n_ref)
    s = StreamSeed(seed, "batch")
    batch = hier_trials(s, space, ratio_C, [cond], cfg.n_c, [cfg.n_ref],
                        cfg.rejection_cap, 200)
    for t in range(200):
        enc = encode_cells(s.child(t), space, ratio_C, [cond], cfg.n_c, [cfg.n_ref],
                           cfg.rejection_cap, 1)
        assert enc.blocks[0] == batch.blocks[t]
        assert enc.selected[0][0] == batch.selected[0][t]
        assert enc.messages[0][0].raw_draws == batch.raw_draws[0][t]
        assert enc.fresh_raw_draws() == batch.pool_raw[t]


def test_trials_long_waits_use_scalar_path():
    from hiermrc.hier import hier_trials
    prior = Pmf("ab", [0.999, 0.001])
    part = Partition.singletons("ab")
    target = Pmf("ab", [0.5, 0.5])
    cfg, space, ratio_C, cond = _setup(target, prior, part, 50, (1, 1))
    s = StreamSeed(3, "rare")
    batch = hier_trials(s, space, ratio_C, [cond], 50, [cfg.n_ref], cfg.rejection_cap, 40)
    for t in range(40):
        enc = encode_cells(s.child(t), space, ratio_C, [cond], 50, [cfg.n_ref],
                           cfg.rejection_cap, 1)
        assert enc.messages[0][0].raw_draws == batch.raw_draws[0][t]


def test_trials_cap_exceeded():
    from hiermrc.hier import hier_trials
    _, space, ratio_C, cond = _setup(TARGET, PRIOR, PART, 4, (3, 40))
    with pytest.raises(RejectionCapExceeded):
        hier_trials(StreamSeed(1), space, ratio_C, [cond], 4, [(3, 40)], (10**4, 40), 50)
