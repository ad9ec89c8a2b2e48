#!/usr/bin/env python3
"""Benchmark of the compiled kernels against their numpy fallbacks.

Times the memory-drift summation and the knot sup-norm reduction on a few
ensemble sizes and prints a table with the speedup.  Run with
PATHMV_DISABLE_NUMBA=1 to confirm the fallback path alone.
"""

import time

import numpy as np

from pathmv import kernels
from pathmv.grid import make_grid
from pathmv.keller_segel import KellerSegelParams, _memory_weights


def time_call(fn, *args, repeats=5):
    fn(*args)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_memory_sum(n, m):
    rng = np.random.default_rng(12)
    grid = make_grid(1.0, m)
    states = np.ascontiguousarray(rng.normal(size=(n, m + 1, 2)))
    x = np.ascontiguousarray(states[:, m, :])
    pref, inv2dt = _memory_weights(m, grid, KellerSegelParams())
    pref = pref / n
    rows = []
    t_np = time_call(kernels.ks_memory_sum_numpy, x, states, m, pref, inv2dt)
    rows.append(("numpy", t_np))
    if kernels.USING_NUMBA:
        t_nb = time_call(kernels.ks_memory_sum_numba, x, states, m, pref, inv2dt)
        rows.append(("numba", t_nb))
        gap = np.abs(
            kernels.ks_memory_sum_numba(x, states, m, pref, inv2dt)
            - kernels.ks_memory_sum_numpy(x, states, m, pref, inv2dt)
        ).max()
        assert gap <= 1e-12, gap
    return rows


def bench_sup_norms(n, m):
    rng = np.random.default_rng(12)
    states = np.ascontiguousarray(rng.normal(size=(n, m + 1, 3)))
    rows = [("numpy", time_call(kernels.knot_sup_norms_numpy, states))]
    if kernels.USING_NUMBA:
        rows.append(("numba", time_call(kernels.knot_sup_norms_numba, states)))
    return rows


def print_table(title, cases, runner):
    print()
    print(title)
    print("%-14s %-10s %12s %10s" % ("size", "backend", "best (ms)", "speedup"))
    for n, m in cases:
        rows = runner(n, m)
        base = rows[0][1]
        for backend, t in rows:
            speedup = base / t if t > 0 else float("inf")
            print(
                "%-14s %-10s %12.3f %10.2fx"
                % ("N=%d M=%d" % (n, m), backend, 1e3 * t, speedup)
            )


def main():
    print("compiled kernels: %s" % ("numba" if kernels.USING_NUMBA else "disabled"))
    print("threads: %d" % kernels.set_thread_count(1))
    print_table(
        "memory-drift summation (one knot, all particles)",
        [(128, 64), (256, 128), (500, 128)],
        bench_memory_sum,
    )
    print_table(
        "knot sup-norm reduction",
        [(1000, 256), (10000, 256), (2000, 512)],
        bench_sup_norms,
    )


if __name__ == "__main__":
    main()
