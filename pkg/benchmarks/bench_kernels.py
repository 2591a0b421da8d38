"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is chosen
at import time from HIERMRC_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from hiermrc import _kernels as k

repeat = int(sys.argv[1])
cdf = np.cumsum(np.full(16, 1 / 16))
block_of = np.arange(16) % 4
probs = np.array([0.1, 0.2, 0.3, 0.4])
ratios = np.array([2.0, 1.0, 0.5, 0.75])
states = np.arange(1000, dtype=np.uint64) * np.uint64(7919)

cases = {
    "categorical 1e6": lambda: k.categorical_draws(12345, cdf, 1_000_000, 15),
    "categorical_multi 1000x1000": lambda: k.categorical_draws_multi(states, cdf, 1000, 15),
    "rejection 2e5 hits": lambda: k.rejection_draws(99, cdf, 15, block_of, 2, 200_000, 10**7),
    "enumerate 4^9": lambda: k.enumerate_selection_law(probs, ratios, 9),
}
out = {"backend": k.BACKEND}
for name, fn in cases.items():
    fn()  # warm-up (numba compile or cache load)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run_backend(disable_numba: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env["HIERMRC_DISABLE_NUMBA"] = "1" if disable_numba else "0"
    res = subprocess.run([sys.executable, "-c", CHILD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    names = [n for n in fast if n != "backend"]
    width = max(map(len, names))
    print(f"{'kernel':<{width}}  {fast['backend']:>10}  {slow['backend']:>10}  speedup")
    for n in names:
        print(f"{n:<{width}}  {fast[n]:10.4f}  {slow[n]:10.4f}  {slow[n] / fast[n]:7.1f}x")


if __name__ == "__main__":
    main()
