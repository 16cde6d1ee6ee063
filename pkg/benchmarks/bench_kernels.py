#!/usr/bin/env python
"""Time each hot kernel with the numpy and the numba implementation.

    python benchmarks/bench_kernels.py [--repeat 5]

The numba column is skipped when numba is unavailable or disabled with
SUPERRES_NO_NUMBA=1.  Compile time is excluded (one warm-up call per kernel).
"""

import argparse
import time

import numpy as np

from superres import kernels
from superres._backend import HAVE_NUMBA, USE_NUMBA


def _cases(rng):
    phi = np.linspace(0.0, 2 * np.pi, 10_000)
    bits = rng.random((6, 2_000_000)) < 0.5
    y = np.sin(np.linspace(0, 60 * np.pi, 200_000)) + 0.01 * rng.standard_normal(200_000)
    counts = rng.binomial(20_000, 0.3, size=(500, 10)).astype(np.float64)
    gates = np.full(10, 20_000.0)
    probs = rng.uniform(0.05, 0.6, size=(2001, 10))
    return {
        "sine_product_grid n=64": ("sine_product_grid", (64, phi)),
        "pattern_probabilities k=16": ("pattern_probabilities", (rng.uniform(0, 1, 16),)),
        "count_all_clicked 6x2e6": ("count_all_clicked", (bits,)),
        "local_extrema 2e5": ("local_extrema", (y,)),
        "binomial_loglike 500x2001x10": ("binomial_loglike", (counts, gates, probs)),
    }


def _best_time(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    numba_on = HAVE_NUMBA and USE_NUMBA
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for label, (name, fargs) in _cases(rng).items():
        t_np = _best_time(getattr(kernels, name + "_numpy"), fargs, args.repeat)
        if numba_on:
            t_nb = _best_time(getattr(kernels, name + "_numba"), fargs, args.repeat)
            print(f"{label:32s} {t_np * 1e3:12.3f} {t_nb * 1e3:12.3f} {t_np / t_nb:8.1f}x")
        else:
            print(f"{label:32s} {t_np * 1e3:12.3f} {'-':>12s} {'-':>8s}")


if __name__ == "__main__":
    main()
