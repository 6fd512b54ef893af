"""Compare the compiled and pure-Python tree kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--n 2000]

Each kernel is timed on identical inputs under both backends; the outputs
are checked for exact equality before the timings are reported.
"""

import argparse
import time

import numpy as np

from localcal.trees._backend import get_kernels


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def workloads(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(np.intp)
    idx = np.arange(n, dtype=np.intp)
    queries = rng.integers(0, 40, size=(n // 4, 100)).astype(np.int64)
    refs = rng.integers(0, 40, size=(n, 100)).astype(np.int64)
    return X, y, idx, queries, refs


def run(n=2000, d=8, repeat=3, seed=0):
    X, y, idx, Q, R = workloads(n, d, seed)
    rows = []
    for name in ("build_tree", "route", "cost_complexity", "match_counts"):
        res = {}
        for backend in ("cython", "python"):
            k = get_kernels(backend)
            tree = k.build_tree(X, y, idx, 2, 1, d, seed)
            feature, threshold, left, right, counts, nsamp, risk = tree
            collapse, _, _ = k.cost_complexity(left, right, risk, n)
            calls = {
                "build_tree": lambda: k.build_tree(X, y, idx, 2, 1, d, seed),
                "route": lambda: k.route(feature, threshold, left, right, collapse, 0.005, X),
                "cost_complexity": lambda: k.cost_complexity(left, right, risk, n),
                "match_counts": lambda: k.match_counts(Q, R),
            }
            res[backend] = best_of(calls[name], repeat)
        ok = same(res["cython"][1], res["python"][1])
        rows.append((name, res["cython"][0], res["python"][0], ok))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"n={args.n} d={args.d} best of {args.repeat}")
    print(f"{'kernel':<16s}{'cython [s]':>12s}{'python [s]':>12s}{'speedup':>10s}  identical")
    for name, tc, tp, ok in run(args.n, args.d, args.repeat):
        print(f"{name:<16s}{tc:12.5f}{tp:12.5f}{tp / max(tc, 1e-12):10.1f}  {ok}")


if __name__ == "__main__":
    main()
