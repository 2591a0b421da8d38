"""Pure-numpy kernels. Bit-identical to the numba versions for every stream op."""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(k) for k in (30, 27, 31, 11))
_TWO_M53 = 2.0 ** -53

_CHUNK = 1 << 16


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * MIX1
    z = (z ^ (z >> _S27)) * MIX2
    return z ^ (z >> _S31)


def splitmix_u64(state: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs at stream positions ``offset+1 .. offset+count``."""
    steps = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(state) + GAMMA * steps)


def unit_draws(state: int, count: int, offset: int = 0) -> np.ndarray:
    z = splitmix_u64(state, count, offset)
    return (z >> _S11).astype(np.float64) * _TWO_M53


def unit_draws_multi(states: np.ndarray, count: int) -> np.ndarray:
    """One row of ``count`` units per starting state."""
    states = np.asarray(states, dtype=np.uint64)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(states[:, None] + GAMMA * steps[None, :])
    return (z >> _S11).astype(np.float64) * _TWO_M53


def _invert(cdf: np.ndarray, u: np.ndarray, fallback: int) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="right").astype(np.int64)
    idx[idx >= cdf.shape[0]] = fallback
    return idx


def categorical_draws(state: int, cdf: np.ndarray, count: int,
                      fallback: int) -> np.ndarray:
    return _invert(cdf, unit_draws(state, count), fallback)


def categorical_draws_multi(states: np.ndarray, cdf: np.ndarray, count: int,
                            fallback: int) -> np.ndarray:
    """One row of ``count`` draws per starting state."""
    states = np.asarray(states, dtype=np.uint64)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(states[:, None] + GAMMA * steps[None, :])
    u = (z >> _S11).astype(np.float64) * _TWO_M53
    return _invert(cdf, u.ravel(), fallback).reshape(u.shape)


def rejection_draws(state: int, cdf: np.ndarray, fallback: int,
                    block_of_cell: np.ndarray, block: int, n_target: int,
                    cap: int) -> tuple[np.ndarray, int, bool]:
    """Draw cells until ``n_target`` fall in ``block``.

    Returns (accepted cells, raw draws consumed, success). On failure the
    raw count equals ``cap``.
    """
    accepted: list[np.ndarray] = []
    have = 0
    consumed = 0
    mass = float(np.diff(cdf, prepend=0.0)[block_of_cell == block].sum())
    rate = max(mass, 1e-12)
    while have < n_target and consumed < cap:
        need = n_target - have
        m = int(min(cap - consumed, max(256, 1.25 * need / rate + 64)))
        cells = _invert(cdf, unit_draws(state, m, consumed), fallback)
        hits = np.flatnonzero(block_of_cell[cells] == block)
        if hits.shape[0] >= need:
            accepted.append(cells[hits[:need]])
            consumed += int(hits[need - 1]) + 1
            have = n_target
        else:
            accepted.append(cells[hits])
            have += hits.shape[0]
            consumed += m
    out = np.concatenate(accepted) if accepted else np.empty(0, np.int64)
    return out.astype(np.int64), consumed, have == n_target


def enumerate_selection_law(probs: np.ndarray, ratios: np.ndarray,
                            n: int) -> tuple[np.ndarray, bool]:
    """Exact law of the selected proposal, summing over all ordered n-tuples.

    ``probs``/``ratios`` are indexed by support position. Returns
    (law, degenerate) where ``degenerate`` flags a positive-probability
    tuple whose importance ratios are all zero.
    """
    s = probs.shape[0]
    law = np.zeros(s)
    total = s ** n
    pows = s ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        digits = (idx[:, None] // pows[None, :]) % s
        tup_p = np.prod(probs[digits], axis=1)
        r = ratios[digits]
        tau = r.sum(axis=1)
        if np.any((tau == 0) & (tup_p > 0)):
            return law, True
        keep = tau > 0
        w = (tup_p[keep] / tau[keep])[:, None] * r[keep]
        law += np.bincount(digits[keep].ravel(), weights=w.ravel(), minlength=s)
    return law, False
