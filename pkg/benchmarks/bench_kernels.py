"""Compare the compiled and NumPy backends of the hot kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--n 32] [--paths 20000] [--repeat 5]

Both backends run on identical inputs; the script reports the best wall time
of each, the speedup and the maximum absolute difference between outputs.
"""
import argparse
import time

import numpy as np

from elastostab import _pykernels

try:
    from elastostab import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, n_paths, rng):
    h = 1.0 / (n - 1)
    spacing = np.full(3, h)
    origin = np.zeros(3)
    a = np.ascontiguousarray(rng.standard_normal((3, n, n, n)))
    starts = np.ascontiguousarray(rng.uniform(0, 1, (n_paths, 3)))
    ends = np.ascontiguousarray(rng.uniform(0, 1, (n_paths, 3)))
    order = np.array([0, 1, 2], dtype=np.int64)
    mats = rng.standard_normal((n ** 3, 3, 3)) + 3 * np.eye(3)
    rhs = rng.standard_normal((n ** 3, 3))
    return {
        "staircase_integrals": (a, spacing, origin, starts, ends, order),
        "gram_schmidt_solve": (np.ascontiguousarray(mats), np.ascontiguousarray(rhs)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32, help="grid points per axis")
    ap.add_argument("--paths", type=int, default=20000, help="number of staircase paths")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    inputs = cases(args.n, args.paths, np.random.default_rng(0))
    print(f"{'kernel':<22}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, call_args in inputs.items():
        tp, out_p = best_time(lambda: getattr(_pykernels, name)(*call_args), args.repeat)
        if _ckernels is None:
            print(f"{name:<22}{tp:12.4f}{'n/a':>12}{'n/a':>10}{'n/a':>12}")
            continue
        tc, out_c = best_time(lambda: getattr(_ckernels, name)(*call_args), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_p) - np.asarray(out_c))))
        print(f"{name:<22}{tp:12.4f}{tc:12.4f}{tp / tc:10.1f}{diff:12.2e}")


if __name__ == "__main__":
    main()
