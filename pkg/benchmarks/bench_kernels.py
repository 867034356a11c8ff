#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--rows N] [--cols D] [--repeat R]

Generates one seeded incomplete matrix and times the four hot kernels on
each available backend. The kNN search dominates end-to-end runtime on
real panels, which is why these loops live in the extension.
"""

import argparse
import time

import numpy as np

from tdimpute.backend import available_backends, get_backend


def make_matrix(rows, cols, missing, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(rows, cols))
    x[rng.random((rows, cols)) < missing] = np.nan
    for j in range(cols):
        if np.isnan(x[:, j]).all():
            x[rng.integers(0, rows), j] = rng.normal()
    return x


def bench(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--cols", type=int, default=10)
    parser.add_argument("--missing", type=float, default=0.4)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    x = make_matrix(args.rows, args.cols, args.missing, args.seed)
    times = np.sort(
        np.random.default_rng(args.seed).choice(
            np.arange(args.rows * 2, dtype=np.float64), size=args.rows,
            replace=False,
        )
    )

    backends = available_backends()
    kernels = {
        "nan_euclidean": lambda mod: mod.nan_euclidean(x),
        "knn_impute(k=5)": lambda mod: mod.knn_impute(x, 5),
        "forward_fill_2d": lambda mod: mod.forward_fill_2d(x),
        "delta_2d": lambda mod: mod.delta_2d(times, x),
    }

    print(f"matrix: {args.rows} x {args.cols}, {args.missing:.0%} missing; "
          f"best of {args.repeat}")
    header = f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, call in kernels.items():
        row = f"{name:<18}"
        timings = {}
        results = {}
        for b in backends:
            mod = get_backend(b)
            timings[b], results[b] = bench(lambda: call(mod), args.repeat)
            row += f"{timings[b] * 1e3:>10.1f}ms"
        if len(backends) == 2:
            row += f"{timings['python'] / timings['compiled']:>9.1f}x"
            a, c = results["python"], results["compiled"]
            both_inf = np.isinf(a) & np.isinf(c)
            if not np.allclose(np.where(both_inf, 0, a),
                               np.where(both_inf, 0, c),
                               atol=1e-8, equal_nan=True):
                row += "  [MISMATCH]"
        print(row)


if __name__ == "__main__":
    main()
