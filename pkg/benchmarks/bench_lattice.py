"""Compare the compiled and pure-Python lattice kernels.

Run with ``python3 benchmarks/bench_lattice.py``.  Prints timings for a single
252-step tree and for a batch of quotes priced with ``price_many``.
"""
import argparse
import timeit

import numpy as np

from amopt import binomial


def _batch(n, seed=0):
    rng = np.random.default_rng(seed)
    return dict(spot=rng.uniform(80, 120, n), strike=rng.uniform(80, 120, n), rate=rng.uniform(0, 0.03, n),
                sigma=rng.uniform(0.1, 0.4, n), days=rng.integers(1, 366, n))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quotes", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    kernels = binomial.kernels()
    print(f"default backend: {binomial.BACKEND}; available: {', '.join(kernels)}")
    params = binomial.TreeParams(100.0, 100.0, 0.05, 0.2, 252)
    u, d = params.factors
    batch = _batch(args.quotes)
    results = {}
    for name, k in kernels.items():
        single = min(timeit.repeat(lambda: k.rollback(100.0, 100.0, u, params.prob, np.exp(-0.05 / 252), 252,
                                                      True, True), number=20, repeat=args.repeat)) / 20
        many = min(timeit.repeat(lambda: binomial.price_many(**batch, backend=name), number=1,
                                 repeat=args.repeat))
        results[name] = (single, many)
        print(f"{name:>8}: single 252-step tree {single * 1e3:8.3f} ms | "
              f"{args.quotes} quotes {many:7.3f} s ({args.quotes / many:,.0f} quotes/s)")
    if {"python", "cython"} <= results.keys():
        a, b = results["cython"], results["python"]
        print(f"cython speed-up: single {b[0] / a[0]:.1f}x, batch {b[1] / a[1]:.1f}x")
        prices = [binomial.price_many(**batch, backend=n) for n in kernels]
        print(f"max abs difference between backends: {np.max(np.abs(prices[0] - prices[1])):.3e}")


if __name__ == "__main__":
    main()
