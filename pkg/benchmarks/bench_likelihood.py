"""Time the log-likelihood kernel: compiled extension against the numpy fallback.

    python benchmarks/bench_likelihood.py --T 400 --mu 20 --repeat 200
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from prefattach import kernels
from prefattach.evolution import extract_increments, summarize
from prefattach.preference import PreferenceParams
from prefattach.simulator import SimConfig, simulate


def _time(fn, repeat: int) -> float:
    fn()  # warm-up
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n0", type=int, default=50)
    ap.add_argument("--T", type=int, default=400)
    ap.add_argument("--mu", type=float, default=20.0)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = SimConfig(n0=args.n0, T=args.T, mu_external=args.mu,
                    external=PreferenceParams.piecewise(1.3, 1.0, 4.0, 1.0), seed=args.seed)
    stats = summarize(extract_increments(simulate(cfg)), "external")
    print(f"time points {stats.T}, histogram cells {stats.c_idx.size}, "
          f"increment cells {stats.obs_idx.size}, distinct degrees {stats.degrees.size}")

    params = {"power": (False, 1.2, 0.0, 0.0, 1.0), "piecewise": (True, 1.3, 1.0, 4.0, 1.0)}
    impls = [("numpy", kernels.fallback)]
    if kernels.compiled is not None:
        impls.insert(0, ("cython", kernels.compiled))
    else:
        print("compiled extension not available; timing the fallback only")
    print(f"{'form':<11}{'backend':<9}{'us/eval':>9}{'speed-up':>10}  log B")
    for form, p in params.items():
        timed = []
        for name, impl in impls:
            f = lambda impl=impl: kernels.log_b_raw(stats, *p, impl=impl)
            timed.append((name, _time(f, args.repeat), f()))
        slow = timed[-1][1]
        for name, sec, val in timed:
            print(f"{form:<11}{name:<9}{sec * 1e6:>9.1f}{slow / sec:>9.1f}x  {val:.12f}")
        if len(timed) == 2:
            a, b = timed[0][2], timed[1][2]
            print(f"{'':<11}relative difference {abs(a - b) / max(abs(b), 1e-300):.2e}")


if __name__ == "__main__":
    main()
