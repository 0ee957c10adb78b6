"""Time the Jacobi rotation kernel: compiled vs pure-Python vs numpy's LAPACK SVD.

Usage: python3 benchmarks/bench_svd.py [--sizes 8 16 32 64] [--repeats 5]
"""

import argparse
import timeit

import numpy as np

from gsot import _jacobi_py
from gsot.linalg import MAX_SWEEPS, ROTATION_TOL

try:
    from gsot import _jacobi
except ImportError:  # extension not built
    _jacobi = None


def kernel_call(kernel, a):
    def run():
        g = np.ascontiguousarray(a.T).copy()
        q = np.eye(g.shape[0])
        if kernel.orthogonalize_rows(g, q, ROTATION_TOL, MAX_SWEEPS, 0.0) < 0:
            raise RuntimeError("kernel did not converge")
    return run


def best_of(fn, repeats):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeats)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'size':>6} {'cython_ms':>10} {'python_ms':>10} {'numpy_ms':>10} {'speedup':>8}")
    for n in args.sizes:
        a = rng.standard_normal((2 * n, n))
        py = best_of(kernel_call(_jacobi_py, a), args.repeats)
        cy = best_of(kernel_call(_jacobi, a), args.repeats) if _jacobi else float("nan")
        npy = best_of(lambda: np.linalg.svd(a, full_matrices=False), args.repeats)
        print(f"{f'{2 * n}x{n}':>6} {1e3 * cy:10.3f} {1e3 * py:10.3f} {1e3 * npy:10.3f} {py / cy:8.1f}")


if __name__ == "__main__":
    main()
