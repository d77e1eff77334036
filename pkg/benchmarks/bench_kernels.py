"""Time the compiled and pure-Python kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per (kernel, size, backend) with the best wall time and the
speedup of the compiled backend over the fallback.
"""

import argparse
import time

import numpy as np

from roadfriction import _kernels
from roadfriction.sne import squared_distances
from roadfriction.svm import median_distance, rbf_gram


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    for n in (14, 40):
        A = rng.normal(size=(n, n))
        C = A @ A.T / n
        yield "jacobi_eigh", n, lambda m, C=C: m.jacobi_eigh(C.copy(), 1e-12, 100)
    for n in (200, 600):
        X = rng.normal(size=(n, 5))
        y = np.where(X[:, 0] + X[:, 1] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
        K = rbf_gram(X, X, median_distance(X))
        yield "smo_solve", n, lambda m, K=K, y=y: m.smo_solve(K, y, 1.0, 1e-3, 3, 10000)
    for n in (300, 1000):
        D = squared_distances(rng.normal(size=(n, 14)))
        yield "perplexity_search", n, lambda m, D=D: m.perplexity_search(D, 30.0, 1e-5, 100)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    found = _kernels.backends()
    if "cython" not in found:
        print("compiled backend not built; run `python3 setup.py build_ext --inplace`")
    print(f"{'kernel':<18} {'n':>5} {'backend':<8} {'seconds':>10} {'speedup':>8}")
    for name, n, call in cases(np.random.default_rng(0)):
        times = {b: _best(lambda: call(m), args.repeat) for b, m in found.items()}
        for b, t in times.items():
            speed = times["python"] / t if b != "python" else 1.0
            print(f"{name:<18} {n:>5} {b:<8} {t:>10.4f} {speed:>7.1f}x")


if __name__ == "__main__":
    main()
