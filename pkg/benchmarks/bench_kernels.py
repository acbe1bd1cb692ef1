"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times each hot-loop kernel on representative workloads with both
implementations and prints per-kernel speedups. Also asserts that both
backends agree numerically before timing.
"""
import argparse
import time

import numpy as np

from ratecast import kernels
from ratecast.kernels import _pycore

try:
    from ratecast.kernels import _fastcore
except ImportError:
    _fastcore = None


def _timeit(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _workloads(rng):
    n = 20_000
    x = rng.normal(size=n)
    coeffs = np.cumprod(np.r_[1.0, (np.arange(1, 101) - 1.3) / np.arange(1, 101)])
    eps = rng.normal(size=n)
    y = 50.0 + rng.normal(size=n)
    B = rng.uniform(0.1, 1.0, size=(5000, 6))
    pi = np.full(6, 1 / 6)
    A = np.full((6, 6), 0.02)
    np.fill_diagonal(A, 0.9)
    A /= A.sum(axis=1, keepdims=True)
    _, c, _ = _pycore.hmm_forward(B, pi, A)
    return [
        ("fracdiff_apply", "fracdiff_apply", (x, coeffs)),
        ("garch_recursion", "garch_recursion",
         (eps, 0.1, np.array([0.1, 0.05]), np.array([0.6]), 1.0)),
        ("farima_garch_recursion", "farima_garch_recursion",
         (y, coeffs, 50.0, 0.0, np.array([0.3]), np.array([0.1]), 0.1,
          np.array([0.1]), np.array([0.7]), 1.0)),
        ("hmm_forward", "hmm_forward", (B, pi, A)),
        ("hmm_backward", "hmm_backward", (B, A, c)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    if _fastcore is None:
        print("compiled backend unavailable; timing the fallback only")

    rng = np.random.default_rng(0)
    rows = []
    for name, attr, wargs in _workloads(rng):
        py_fn = getattr(_pycore, attr)
        t_py = _timeit(py_fn, wargs, args.repeat)
        if _fastcore is not None:
            cy_fn = getattr(_fastcore, attr)
            ref = py_fn(*wargs)
            got = cy_fn(*wargs)
            for r, g in zip(np.atleast_1d(ref) if not isinstance(ref, tuple) else ref,
                            np.atleast_1d(got) if not isinstance(got, tuple) else got):
                np.testing.assert_allclose(np.asarray(r), np.asarray(g),
                                           rtol=1e-10, atol=1e-10)
            t_cy = _timeit(cy_fn, wargs, args.repeat)
            rows.append((name, t_py, t_cy, t_py / t_cy))
        else:
            rows.append((name, t_py, float("nan"), float("nan")))

    header = f"{'kernel':<24} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_py, t_cy, speedup in rows:
        print(f"{name:<24} {1e3 * t_py:>12.3f} {1e3 * t_cy:>12.3f} "
              f"{speedup:>7.1f}x")


if __name__ == "__main__":
    main()
