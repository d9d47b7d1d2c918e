"""Time the counterfactual enumeration kernel: compiled vs numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--vars 10] [--noise 4] [--repeat 3]``
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from causal_diagrams import _kernels_py, kernels
from causal_diagrams.counterfactual import _program, random_terms
from causal_diagrams.sampling import random_dag, random_fcm, rng_of


def workload(n_vars: int, noise: int, seed: int):
    rng = rng_of(seed)
    g = random_dag(rng, n_vars, 0.35)
    fcm = random_fcm(rng, g, {v: 2 for v in g.vertices}, noise_card=noise)
    terms = random_terms(rng, fcm.cards, n_worlds=3)
    prog, _ = _program(fcm, terms)
    return prog


def best_of(fn, prog, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(**prog)
        times.append(time.perf_counter() - t0)
    return min(times), np.asarray(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--vars", type=int, default=10)
    ap.add_argument("--noise", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    prog = workload(args.vars, args.noise, args.seed)
    total = args.noise ** args.vars
    t_py, ref = best_of(_kernels_py.run_program, prog, args.repeat)
    print(f"assignments: {total}")
    print(f"numpy fallback: {t_py:.3f} s")
    if kernels.BACKEND == "cython":
        t_c, out = best_of(kernels.run_program, prog, args.repeat)
        print(f"compiled kernel: {t_c:.3f} s  (speed-up {t_py / t_c:.1f}x, "
              f"max diff {np.abs(out - ref).max():.2e})")
    else:
        print("compiled kernel not built; install with `pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()
