"""The jitted and numpy kernel paths must agree, and WCORD_NO_NUMBA must
force the fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from wcord import kernels


def _random_problem(seed, n=7, m=7):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 6))
    b = rng.normal(size=(m, 6))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    C = 1.0 - a @ b.T
    A = np.exp(-C / (0.01 * C.mean()))
    return A, np.full(n, 1.0 / n), np.full(m, 1.0 / m)


@pytest.mark.skipif(not kernels.NUMBA_ENABLED, reason="numba path not active")
@pytest.mark.parametrize("seed", range(5))
def test_sinkhorn_paths_agree(seed):
    A, u, v = _random_problem(seed)
    pi_np, t_np, r_np = kernels.sinkhorn_scaling_numpy(A, u, v, 50, 25, 0.0)
    pi_jit, t_jit, r_jit = kernels.sinkhorn_scaling_jit(A, u, v, 50, 25, 0.0)
    assert t_np == t_jit
    assert np.abs(pi_np - pi_jit).max() <= 1e-10
    assert abs(r_np - r_jit) <= 1e-10


@pytest.mark.skipif(not kernels.NUMBA_ENABLED, reason="numba path not active")
@pytest.mark.parametrize("seed", range(5))
def test_power_iteration_paths_agree(seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(5, 8))
    u0 = rng.normal(size=5)
    s_np, u_np, v_np, k_np = kernels.power_iteration_numpy(W, u0.copy(), 40, 0.0)
    s_jit, u_jit, v_jit, k_jit = kernels.power_iteration_jit(W, u0.copy(), 40, 0.0)
    assert abs(s_np - s_jit) <= 1e-10
    assert np.abs(u_np - u_jit).max() <= 1e-10
    assert np.abs(v_np - v_jit).max() <= 1e-10
    assert k_np == k_jit


def test_early_exit_respects_tolerance():
    A, u, v = _random_problem(11)
    pi, outer_used, residual = kernels.sinkhorn_scaling(A, u, v, 200, 25, 1e-6)
    assert residual <= 1e-6
    assert outer_used < 200


def test_env_flag_forces_numpy_path():
    env = dict(os.environ, WCORD_NO_NUMBA="1")
    code = "import wcord.kernels as k; print(k.NUMBA_ENABLED, k.sinkhorn_scaling is k.sinkhorn_scaling_numpy)"
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "False True"
