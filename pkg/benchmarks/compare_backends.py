#!/usr/bin/env python3
"""Time the compiled kernel against the pure-numpy fallback.

Measures the raw batched least-squares kernel at several support sizes
and a full breadth-first recovery at benchmark scale, printing one table
row per case.  Run from a built checkout:

    python benchmarks/compare_backends.py [--trials 5]
"""

import argparse
import time

import numpy as np

from mmp import SensingMatrix, SolverConfig
from mmp._kernels import DIAG_PREFILTER, RANK_TOL, pyfallback
from mmp.solvers import _mmp_bf_impl


def time_call(fn, reps):
    best = float("inf")
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=5, help="repetitions per case")
    args = parser.parse_args()

    try:
        from mmp._kernels import _native
    except ImportError:
        raise SystemExit("compiled kernel not built; run pip install -e . first")

    rng = np.random.default_rng(0)
    m, n = 100, 256
    phi = np.asfortranarray(rng.normal(0, 0.1, (m, n)))
    y = rng.standard_normal(m)

    print(f"{'case':28s} {'native':>12s} {'python':>12s} {'speedup':>8s}")
    for k in (5, 15, 30, 45):
        supports = np.array(
            [np.sort(rng.choice(n, k, replace=False)) for _ in range(250)],
            dtype=np.int64,
        )
        t_native = time_call(
            lambda: _native.batch_lstsq(phi, supports, y, RANK_TOL, DIAG_PREFILTER),
            args.trials,
        )
        t_python = time_call(
            lambda: pyfallback.batch_lstsq(phi, supports, y, RANK_TOL, DIAG_PREFILTER),
            args.trials,
        )
        print(
            f"batch_lstsq B=250 k={k:<2d}       {t_native * 1e3:9.2f} ms "
            f"{t_python * 1e3:9.2f} ms {t_python / t_native:7.1f}x"
        )

    matrix = SensingMatrix(rng.normal(0, 0.1, (m, n)))
    x = np.zeros(n)
    x[rng.choice(n, 20, replace=False)] = rng.standard_normal(20)
    yv = matrix.entries @ x
    config = SolverConfig(K=20, L=6, max_candidates_per_iter=50)

    import mmp._kernels as kernels

    def run_with(impl):
        saved = kernels._impl
        kernels._impl = impl
        try:
            _mmp_bf_impl(matrix, yv, config, record=False)
        finally:
            kernels._impl = saved

    t_native = time_call(lambda: run_with(_native), args.trials)
    t_python = time_call(lambda: run_with(pyfallback), args.trials)
    print(
        f"mmp-bf m=100 n=256 K=20 L=6  {t_native * 1e3:9.2f} ms "
        f"{t_python * 1e3:9.2f} ms {t_python / t_native:7.1f}x"
    )


if __name__ == "__main__":
    main()
