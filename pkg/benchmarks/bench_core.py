"""Compare the compiled core against the numpy fallback on the hot kernels.

    python3 benchmarks/bench_core.py [--repeat 3]

Prints one line per (kernel, size) with the best wall time of each backend
and the speedup.  Both backends are run on identical inputs; the sampler
outputs are also checked for equality.
"""
import argparse
import time

import numpy as np

from dpptransfer import _backend


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def contraction(rng, n):
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (V * rng.uniform(0.05, 0.95, n)) @ V.T


def cases(rng):
    for n in (16, 64, 128):
        A = contraction(rng, n)
        yield f"jacobi_eigh n={n}", "jacobi_eigh", (A, 1e-15, 100)
    for n, r, draws in ((12, 6, 100_000), (64, 16, 20_000), (256, 32, 2_000)):
        V, _ = np.linalg.qr(rng.standard_normal((n, r)))
        V = np.ascontiguousarray(V)
        lam = rng.uniform(0.2, 1.0, r)
        u1, u2 = rng.random((draws, r)), rng.random((draws, r))
        yield f"sample_batch n={n} r={r} x{draws}", "sample_batch", (V, lam, u1, u2)
    for n in (10, 14):
        L = contraction(rng, n) * 3
        yield f"subset_determinants n={n}", "subset_determinants", (np.ascontiguousarray(L),)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    impls = _backend.IMPLEMENTATIONS
    if "cython" not in impls:
        print("compiled core unavailable; only the fallback is timed")
    rng = np.random.default_rng(args.seed)
    print(f"{'case':<40}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for label, name, inputs in cases(rng):
        tp = best_time(lambda: getattr(impls["python"], name)(*[np.copy(a) if isinstance(a, np.ndarray) else a
                                                                 for a in inputs]), args.repeat)
        if "cython" in impls:
            tc = best_time(lambda: getattr(impls["cython"], name)(*[np.copy(a) if isinstance(a, np.ndarray) else a
                                                                    for a in inputs]), args.repeat)
            if name == "sample_batch":
                a = impls["python"].sample_batch(*inputs)
                b = impls["cython"].sample_batch(*inputs)
                assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]), "backends disagree"
            print(f"{label:<40}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")
        else:
            print(f"{label:<40}{tp:>12.4f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
