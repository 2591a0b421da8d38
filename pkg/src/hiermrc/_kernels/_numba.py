"""numba-compiled kernels; same signatures and outputs as ``_numpy``."""

from __future__ import annotations

import numba
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
# Every operand must stay uint64: numba promotes uint64 (op) int64 to float64.
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
ONE = np.uint64(1)
TWO_M53 = 2.0 ** -53


@numba.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> S30)) * MIX1
    z = (z ^ (z >> S27)) * MIX2
    return z ^ (z >> S31)


@numba.njit(cache=True, inline="always")
def _bisect_right(cdf, u, fallback):
    lo = 0
    hi = cdf.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    if lo >= cdf.shape[0]:
        return fallback
    return lo


@numba.njit(cache=True)
def _splitmix_u64(state, count, offset):
    out = np.empty(count, dtype=np.uint64)
    s = state + GAMMA * np.uint64(offset)
    for i in range(count):
        s = s + GAMMA
        out[i] = _mix(s)
    return out


@numba.njit(cache=True)
def _unit_draws(state, count, offset):
    out = np.empty(count, dtype=np.float64)
    s = state + GAMMA * np.uint64(offset)
    for i in range(count):
        s = s + GAMMA
        out[i] = np.float64(_mix(s) >> S11) * TWO_M53
    return out


@numba.njit(cache=True)
def _unit_draws_multi(states, count):
    out = np.empty((states.shape[0], count), dtype=np.float64)
    for r in range(states.shape[0]):
        s = states[r]
        for i in range(count):
            s = s + GAMMA
            out[r, i] = np.float64(_mix(s) >> S11) * TWO_M53
    return out


@numba.njit(cache=True)
def _categorical_draws(state, cdf, count, fallback):
    out = np.empty(count, dtype=np.int64)
    s = state
    for i in range(count):
        s = s + GAMMA
        u = np.float64(_mix(s) >> S11) * TWO_M53
        out[i] = _bisect_right(cdf, u, fallback)
    return out


@numba.njit(cache=True)
def _categorical_draws_multi(states, cdf, count, fallback):
    k = states.shape[0]
    out = np.empty((k, count), dtype=np.int64)
    for r in range(k):
        s = states[r]
        for i in range(count):
            s = s + GAMMA
            u = np.float64(_mix(s) >> S11) * TWO_M53
            out[r, i] = _bisect_right(cdf, u, fallback)
    return out


@numba.njit(cache=True)
def _rejection_draws(state, cdf, fallback, block_of_cell, block, n_target, cap):
    out = np.empty(n_target, dtype=np.int64)
    have = 0
    consumed = 0
    s = state
    while have < n_target and consumed < cap:
        s = s + GAMMA
        consumed += 1
        u = np.float64(_mix(s) >> S11) * TWO_M53
        cell = _bisect_right(cdf, u, fallback)
        if block_of_cell[cell] == block:
            out[have] = cell
            have += 1
    return out[:have], consumed, have == n_target


@numba.njit(cache=True)
def _enumerate_selection_law(probs, ratios, n):
    s = probs.shape[0]
    law = np.zeros(s)
    digits = np.zeros(n, dtype=np.int64)
    total = 1
    for _ in range(n):
        total *= s
    for _ in range(total):
        p = 1.0
        tau = 0.0
        for j in range(n):
            p *= probs[digits[j]]
            tau += ratios[digits[j]]
        if tau == 0.0:
            if p > 0.0:
                return law, True
        else:
            scale = p / tau
            for j in range(n):
                law[digits[j]] += scale * ratios[digits[j]]
        # odometer increment, last digit fastest (row-major tuple order)
        pos = n - 1
        while pos >= 0:
            digits[pos] += 1
            if digits[pos] < s:
                break
            digits[pos] = 0
            pos -= 1
    return law, False


def splitmix_u64(state: int, count: int, offset: int = 0) -> np.ndarray:
    return _splitmix_u64(np.uint64(state), int(count), int(offset))


def unit_draws(state: int, count: int, offset: int = 0) -> np.ndarray:
    return _unit_draws(np.uint64(state), int(count), int(offset))


def unit_draws_multi(states: np.ndarray, count: int) -> np.ndarray:
    return _unit_draws_multi(np.ascontiguousarray(states, np.uint64), int(count))


def categorical_draws(state: int, cdf: np.ndarray, count: int,
                      fallback: int) -> np.ndarray:
    return _categorical_draws(np.uint64(state), np.ascontiguousarray(cdf, np.float64),
                              int(count), int(fallback))


def categorical_draws_multi(states: np.ndarray, cdf: np.ndarray, count: int,
                            fallback: int) -> np.ndarray:
    return _categorical_draws_multi(np.ascontiguousarray(states, np.uint64),
                                    np.ascontiguousarray(cdf, np.float64),
                                    int(count), int(fallback))


def rejection_draws(state: int, cdf: np.ndarray, fallback: int,
                    block_of_cell: np.ndarray, block: int, n_target: int,
                    cap: int) -> tuple[np.ndarray, int, bool]:
    out, consumed, ok = _rejection_draws(
        np.uint64(state), np.ascontiguousarray(cdf, np.float64), int(fallback),
        np.ascontiguousarray(block_of_cell, np.int64), int(block),
        int(n_target), int(cap))
    return out, int(consumed), bool(ok)


def enumerate_selection_law(probs: np.ndarray, ratios: np.ndarray,
                            n: int) -> tuple[np.ndarray, bool]:
    law, degenerate = _enumerate_selection_law(
        np.ascontiguousarray(probs, np.float64),
        np.ascontiguousarray(ratios, np.float64), int(n))
    return law, bool(degenerate)
