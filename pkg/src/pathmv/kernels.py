"""Hot numeric kernels with a compiled fast path and a pure-numpy twin.

Importing this module picks the backend once: when numba is importable and
the ``PATHMV_DISABLE_NUMBA`` environment variable is unset (or ``0``), the
compiled kernels serve; otherwise the numpy fallbacks do.  Both
implementations stay importable under explicit names so the benchmark
script and the agreement tests can run them side by side.

The compiled kernels parallelize over particles with disjoint output rows
and fixed-order inner loops, so results are bit-identical regardless of the
worker count.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "set_thread_count",
    "ks_memory_sum",
    "ks_memory_sum_numpy",
    "ks_memory_sum_numba",
    "knot_sup_norms",
    "knot_sup_norms_numpy",
    "knot_sup_norms_numba",
]

_DISABLED = os.environ.get("PATHMV_DISABLE_NUMBA", "0").lower() not in ("0", "", "false")

try:
    if _DISABLED:
        raise ImportError("compiled kernels disabled by PATHMV_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    USING_NUMBA = True
except ImportError:
    numba = None
    USING_NUMBA = False


def set_thread_count(n):
    """Request ``n`` worker threads; returns the effective count.

    The request is clamped to what the compiled backend can offer on this
    machine; the numpy backend always runs one thread.  Thread count must
    never change numeric results, only wall time.
    """
    n = max(1, int(n))
    if not USING_NUMBA:
        return 1
    effective = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(effective)
    return effective


def ks_memory_sum_numpy(x, states, m, pref, inv2dt):
    """Aggregated interaction-kernel sums against the stored history.

    For each row ``x[i]`` this returns
    ``-sum_k pref[k] * sum_j z * exp(-|z|^2 * inv2dt[k])`` with
    ``z = x[i] - states[j, k]``, i.e. the attractive pair kernel summed over
    all particles ``j`` and history knots ``k < m``.  The caller folds the
    quadrature weight, the exponential time decay, the kernel
    normalization, and the ``1/N`` empirical factor into ``pref``.

    Args:
        x: Current positions, shape ``(N, 2)``.
        states: Full history block ``(N, K, 2)`` with columns ``0..m`` valid.
        m: Number of history knots to use (knot ``m`` itself is excluded;
            the zero-lag kernel vanishes identically).
        pref: Positive per-knot prefactors, shape ``(m,)``.
        inv2dt: Per-knot values of ``1 / (2 * (t_m - t_k))``, shape ``(m,)``.
    """
    out = np.zeros_like(x)
    for k in range(m):
        z = x[:, None, :] - states[None, :, k, :]
        e = np.exp(-(z[..., 0] ** 2 + z[..., 1] ** 2) * inv2dt[k])
        out -= pref[k] * np.einsum("ij,ijd->id", e, z)
    return out


def knot_sup_norms_numpy(states):
    """Per-particle maximum Euclidean norm over knots, shape ``(N,)``."""
    sq = np.einsum("nkd,nkd->nk", states, states)
    return np.sqrt(sq.max(axis=1))


if USING_NUMBA:

    @njit(parallel=True, cache=True)
    def ks_memory_sum_numba(x, states, m, pref, inv2dt):
        n = x.shape[0]
        out = np.zeros((n, 2))
        for i in prange(n):
            acc0 = 0.0
            acc1 = 0.0
            for k in range(m):
                p = pref[k]
                s = inv2dt[k]
                part0 = 0.0
                part1 = 0.0
                for j in range(n):
                    z0 = x[i, 0] - states[j, k, 0]
                    z1 = x[i, 1] - states[j, k, 1]
                    e = np.exp(-(z0 * z0 + z1 * z1) * s)
                    part0 += z0 * e
                    part1 += z1 * e
                acc0 += p * part0
                acc1 += p * part1
            out[i, 0] = -acc0
            out[i, 1] = -acc1
        return out

    @njit(parallel=True, cache=True)
    def knot_sup_norms_numba(states):
        n, kk, d = states.shape
        out = np.empty(n)
        for i in prange(n):
            best = 0.0
            for k in range(kk):
                sq = 0.0
                for c in range(d):
                    v = states[i, k, c]
                    sq += v * v
                if sq > best:
                    best = sq
            out[i] = np.sqrt(best)
        return out

    ks_memory_sum = ks_memory_sum_numba
    knot_sup_norms = knot_sup_norms_numba
else:
    ks_memory_sum_numba = None
    knot_sup_norms_numba = None
    ks_memory_sum = ks_memory_sum_numpy
    knot_sup_norms = knot_sup_norms_numpy
