import subprocess
import sys

import numpy as np
import pytest

from pathmv import kernels
from pathmv.grid import make_grid
from pathmv.keller_segel import KellerSegelParams, _memory_weights


def make_inputs(rng, n=12, m=6):
    grid = make_grid(1.0, 8)
    states = np.ascontiguousarray(rng.normal(size=(n, 9, 2)))
    x = np.ascontiguousarray(states[:, m, :])
    pref, inv2dt = _memory_weights(m, grid, KellerSegelParams(epsilon=0.15))
    return x, states, m, pref / n, inv2dt


def test_numpy_memory_sum_reference(rng):
    # independent double-loop recomputation of the numpy backend
    x, states, m, pref, inv2dt = make_inputs(rng)
    got = kernels.ks_memory_sum_numpy(x, states, m, pref, inv2dt)
    n = x.shape[0]
    want = np.zeros((n, 2))
    for i in range(n):
        for k in range(m):
            for j in range(n):
                z = x[i] - states[j, k, :]
                e = np.exp(-(z @ z) * inv2dt[k])
                want[i] -= pref[k] * e * z
    assert np.allclose(got, want, atol=1e-13)


@pytest.mark.skipif(not kernels.USING_NUMBA, reason="numba backend disabled")
def test_memory_sum_backends_agree(rng):
    x, states, m, pref, inv2dt = make_inputs(rng, n=20, m=7)
    a = kernels.ks_memory_sum_numba(x, states, m, pref, inv2dt)
    b = kernels.ks_memory_sum_numpy(x, states, m, pref, inv2dt)
    scale = max(1.0, float(np.abs(b).max()))
    assert np.allclose(a, b, atol=1e-12 * scale)


@pytest.mark.skipif(not kernels.USING_NUMBA, reason="numba backend disabled")
def test_sup_norm_backends_agree(rng):
    states = np.ascontiguousarray(rng.normal(size=(15, 9, 3)))
    a = kernels.knot_sup_norms_numba(states)
    b = kernels.knot_sup_norms_numpy(states)
    assert np.allclose(a, b, atol=1e-13)


def test_sup_norms_against_direct(rng):
    states = rng.normal(size=(7, 5, 2))
    got = kernels.knot_sup_norms(np.ascontiguousarray(states))
    want = np.linalg.norm(states, axis=2).max(axis=1)
    assert np.allclose(got, want, atol=1e-13)


def test_thread_count_clamp():
    assert kernels.set_thread_count(1) == 1
    assert kernels.set_thread_count(0) == 1
    assert kernels.set_thread_count(-3) == 1
    eff = kernels.set_thread_count(4)
    assert 1 <= eff <= 4
    kernels.set_thread_count(1)


def test_disable_flag_selects_numpy_backend():
    code = (
        "import os\n"
        "os.environ['PATHMV_DISABLE_NUMBA'] = '1'\n"
        "from pathmv import kernels\n"
        "assert kernels.USING_NUMBA is False\n"
        "assert kernels.ks_memory_sum is kernels.ks_memory_sum_numpy\n"
        "assert kernels.ks_memory_sum_numba is None\n"
        "assert kernels.set_thread_count(8) == 1\n"
        "print('ok')\n"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, timeout=120
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "ok"


def test_memory_sum_empty_history(rng):
    x, states, _, pref, inv2dt = make_inputs(rng)
    out = kernels.ks_memory_sum(x, states, 0, pref[:0], inv2dt[:0])
    assert np.all(out == 0.0)
