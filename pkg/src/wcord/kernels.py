"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The transport scaling loop and power iteration dominate runtime once training
is underway, so both carry an @njit version plus a vectorized numpy fallback.
Selection happens at import time: set WCORD_NO_NUMBA=1 (or run without numba
installed) to force the numpy path. benchmarks/benchmark_kernels.py compares
the two.

Both paths implement identical arithmetic; results agree to rounding noise
(the jitted loops accumulate sums in a different order than BLAS).
"""

from __future__ import annotations

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("WCORD_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


NUMBA_ENABLED = False
if not _numba_disabled():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised only without numba
        pass


# ---------------------------------------------------------------------------
# proximal-point transport scaling
#
# Outer loop multiplies the Gibbs kernel by the current plan (Q = A * pi),
# the inner loop rescales Q to the target marginals, and the plan is rebuilt
# as diag(delta) Q diag(sigma). Inner updates use count-scaled marginals
# (mu = n*u, nu = n*v, i.e. ones-vectors for uniform u, v) so that the 1/n
# factors in delta = mu/(n Q sigma) reproduce the standard scaling and the
# returned plan has row sums u and column sums v.

def sinkhorn_scaling_numpy(A, u, v, outer_iters, inner_iters, tol):
    n, m = A.shape
    mu = n * u
    nu = n * v
    sigma = np.full(m, 1.0 / n)
    delta = np.zeros(n)
    pi = np.ones((n, m))
    outer_used = 0
    residual = np.inf
    for _t in range(outer_iters):
        Q = A * pi
        for _k in range(inner_iters):
            delta = mu / (n * (Q @ sigma))
            sigma = nu / (n * (Q.T @ delta))
        pi = delta[:, None] * Q * sigma[None, :]
        outer_used += 1
        residual = max(
            np.abs(pi.sum(axis=1) - u).max(),
            np.abs(pi.sum(axis=0) - v).max(),
        )
        if residual < tol:
            break
    return pi, outer_used, residual


def _sinkhorn_scaling_loops(A, u, v, outer_iters, inner_iters, tol):
    n, m = A.shape
    mu = n * u
    nu = n * v
    sigma = np.full(m, 1.0 / n)
    delta = np.zeros(n)
    pi = np.ones((n, m))
    Q = np.empty((n, m))
    outer_used = 0
    residual = 1.0e300
    for _t in range(outer_iters):
        for i in range(n):
            for j in range(m):
                Q[i, j] = A[i, j] * pi[i, j]
        for _k in range(inner_iters):
            for i in range(n):
                s = 0.0
                for j in range(m):
                    s += Q[i, j] * sigma[j]
                delta[i] = mu[i] / (n * s)
            for j in range(m):
                s = 0.0
                for i in range(n):
                    s += Q[i, j] * delta[i]
                sigma[j] = nu[j] / (n * s)
        for i in range(n):
            for j in range(m):
                pi[i, j] = delta[i] * Q[i, j] * sigma[j]
        outer_used += 1
        residual = 0.0
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += pi[i, j]
            r = abs(s - u[i])
            if r > residual:
                residual = r
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += pi[i, j]
            r = abs(s - v[j])
            if r > residual:
                residual = r
        if residual < tol:
            break
    return pi, outer_used, residual


# ---------------------------------------------------------------------------
# power iteration for the largest singular value

def power_iteration_numpy(W, u0, iters, tol):
    out_dim, in_dim = W.shape
    u = u0.copy()
    nu = np.sqrt((u * u).sum())
    if nu == 0.0:
        return 0.0, u0.copy(), np.zeros(in_dim), 0
    u = u / nu
    v = np.zeros(in_dim)
    sigma = 0.0
    used = 0
    for _k in range(iters):
        v = W.T @ u
        nv = np.sqrt((v * v).sum())
        if nv == 0.0:
            return 0.0, u, v, used
        v = v / nv
        u = W @ v
        nu = np.sqrt((u * u).sum())
        if nu == 0.0:
            return 0.0, u, v, used
        u = u / nu
        used += 1
        new_sigma = nu
        if tol > 0.0 and abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            sigma = new_sigma
            break
        sigma = new_sigma
    return sigma, u, v, used


def _power_iteration_loops(W, u0, iters, tol):
    out_dim, in_dim = W.shape
    u = u0.copy()
    s = 0.0
    for i in range(out_dim):
        s += u[i] * u[i]
    nu = np.sqrt(s)
    if nu == 0.0:
        return 0.0, u0.copy(), np.zeros(in_dim), 0
    for i in range(out_dim):
        u[i] /= nu
    v = np.zeros(in_dim)
    sigma = 0.0
    used = 0
    for _k in range(iters):
        for j in range(in_dim):
            acc = 0.0
            for i in range(out_dim):
                acc += W[i, j] * u[i]
            v[j] = acc
        s = 0.0
        for j in range(in_dim):
            s += v[j] * v[j]
        nv = np.sqrt(s)
        if nv == 0.0:
            return 0.0, u, v, used
        for j in range(in_dim):
            v[j] /= nv
        for i in range(out_dim):
            acc = 0.0
            for j in range(in_dim):
                acc += W[i, j] * v[j]
            u[i] = acc
        s = 0.0
        for i in range(out_dim):
            s += u[i] * u[i]
        nu = np.sqrt(s)
        if nu == 0.0:
            return 0.0, u, v, used
        for i in range(out_dim):
            u[i] /= nu
        used += 1
        new_sigma = nu
        if tol > 0.0 and abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            sigma = new_sigma
            break
        sigma = new_sigma
    return sigma, u, v, used


if NUMBA_ENABLED:
    sinkhorn_scaling_jit = njit(cache=True)(_sinkhorn_scaling_loops)
    power_iteration_jit = njit(cache=True)(_power_iteration_loops)
    sinkhorn_scaling = sinkhorn_scaling_jit
    power_iteration_kernel = power_iteration_jit
else:
    sinkhorn_scaling_jit = None
    power_iteration_jit = None
    sinkhorn_scaling = sinkhorn_scaling_numpy
    power_iteration_kernel = power_iteration_numpy


def warmup() -> None:
    """Trigger JIT compilation so timing loops do not include compile time."""
    if not NUMBA_ENABLED:
        return
    A = np.exp(-np.eye(3))
    w = np.full(3, 1.0 / 3.0)
    sinkhorn_scaling(A, w, w, 2, 2, 0.0)
    power_iteration_kernel(np.eye(3), np.ones(3), 2, 0.0)
