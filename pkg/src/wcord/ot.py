"""Primal-form transport machinery: cosine costs, the proximal scaling solver,
an exact small-instance oracle, and the batch feature-matching loss.

The solver itself never touches the gradient tape; the feature-matching loss
rebuilds the cost matrix with tape operations and treats the solved plan as a
constant, so gradients reach the student features only through the cost.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, DomainError, SolverUnderflowError
from .tensor import Tensor, div, matmul, mul, row_sum, scale_rows, sqrt, sub, transpose, tsum

UNDERFLOW_FLOOR = 1e-300
ENUM_MAX_N = 8


@dataclass
class CostMatrix:
    """Nonnegative pairwise cost matrix with its metric tag."""

    values: np.ndarray
    metric: str = "cosine"

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class SinkhornConfig:
    epsilon: float
    outer_iters: int = 50
    inner_iters: int = 25
    marginal_tol: float = 1e-6

    def validate(self) -> None:
        if not self.epsilon > 0.0:
            raise ContractError(f"epsilon must be positive, got {self.epsilon}")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ContractError("iteration counts must be >= 1")
        if not self.marginal_tol >= 0.0:
            raise ContractError("marginal_tol must be >= 0")


@dataclass
class TransportPlan:
    pi: np.ndarray
    u: np.ndarray
    v: np.ndarray
    outer_used: int
    inner_iters: int
    residual: float
    converged: bool

    @property
    def iterations_used(self) -> tuple[int, int]:
        return self.outer_used, self.outer_used * self.inner_iters


def _feature_matrix(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"expected a 2-d feature matrix, got shape {arr.shape}")
    return arr


def cosine_cost(ht, hs) -> CostMatrix:
    """C[i, j] = 1 - cos(ht_i, hs_j); entries lie in [0, 2]."""
    a = _feature_matrix(ht)
    b = _feature_matrix(hs)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    for side, norms in (("row", na), ("column", nb)):
        bad = np.nonzero(norms == 0.0)[0]
        if bad.size:
            raise DomainError(f"cosine_cost: zero-norm {side} vector at index {int(bad[0])}")
    sim = (a / na[:, None]) @ (b / nb[:, None]).T
    return CostMatrix(np.clip(1.0 - sim, 0.0, 2.0), metric="cosine")


def cosine_cost_graph(ht_fixed: np.ndarray, hs: Tensor) -> Tensor:
    """Tape-tracked cosine cost against a fixed teacher feature matrix."""
    a = _feature_matrix(ht_fixed)
    na = np.linalg.norm(a, axis=1)
    if np.any(na == 0.0):
        raise DomainError("cosine_cost: zero-norm row vector in fixed features")
    a_hat = a / na[:, None]
    norms = sqrt(row_sum(mul(hs, hs)))
    if np.any(norms.data == 0.0):
        raise DomainError("cosine_cost: zero-norm column vector in tracked features")
    hs_hat = scale_rows(hs, div(Tensor(1.0), norms))
    return sub(Tensor(1.0), matmul(Tensor(a_hat), transpose(hs_hat)))


def _check_marginal(w: np.ndarray, name: str, size: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (size,):
        raise ContractError(f"{name} must have length {size}, got shape {w.shape}")
    if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
        raise ContractError(f"{name} must lie on the probability simplex")
    return w


def uniform_marginal(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def solve_transport(C, u, v, cfg: SinkhornConfig) -> tuple[TransportPlan, float]:
    """Run the proximal scaling iteration; returns the plan and W = <pi, C>."""
    cfg.validate()
    cost = C.values if isinstance(C, CostMatrix) else np.asarray(C, dtype=np.float64)
    if cost.ndim != 2:
        raise ContractError(f"cost matrix must be 2-d, got shape {cost.shape}")
    n, m = cost.shape
    u = _check_marginal(u, "u", n)
    v = _check_marginal(v, "v", m)
    A = np.exp(-cost / cfg.epsilon)
    if np.any(A.sum(axis=1) < UNDERFLOW_FLOOR) or np.any(A.sum(axis=0) < UNDERFLOW_FLOOR):
        raise SolverUnderflowError(
            "exp(-C/epsilon) underflowed to an all-zero row or column; "
            f"increase epsilon (currently {cfg.epsilon:g})"
        )
    pi, outer_used, residual = kernels.sinkhorn_scaling(
        A, u, v, cfg.outer_iters, cfg.inner_iters, cfg.marginal_tol
    )
    plan = TransportPlan(
        pi=pi,
        u=u,
        v=v,
        outer_used=outer_used,
        inner_iters=cfg.inner_iters,
        residual=float(residual),
        converged=bool(residual <= cfg.marginal_tol),
    )
    return plan, float((pi * cost).sum())


def exact_assignment_cost(C) -> float:
    """Exact unregularized transport cost for a square cost matrix with
    uniform marginals: (1/n) min over permutations of the assignment sum.

    Brute-force enumeration; refuses n > 8.
    """
    cost = C.values if isinstance(C, CostMatrix) else np.asarray(C, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ContractError(f"exact_assignment_cost needs a square matrix, got {cost.shape}")
    n = cost.shape[0]
    if n > ENUM_MAX_N:
        raise ContractError(f"exact_assignment_cost: n={n} exceeds the enumeration bound {ENUM_MAX_N}")
    best = min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
    return float(best) / n


def entropy_term(pi) -> float:
    """Sum of pi * log(pi); zero entries contribute 0 (x log x limit)."""
    values = pi.pi if isinstance(pi, TransportPlan) else np.asarray(pi, dtype=np.float64)
    positive = values[values > UNDERFLOW_FLOOR]
    return float((positive * np.log(positive)).sum())


def auto_epsilon(cost_mean: float, scale: float = 0.01, floor: float = 1e-3) -> float:
    """Scale-aware default entropic weight: scale * mean(C), floored for
    degenerate all-zero cost matrices."""
    eps = scale * cost_mean
    return eps if eps > 0.0 else floor


def lckt_loss(ht, hs: Tensor, cfg: SinkhornConfig) -> Tensor:
    """Batch feature-matching loss <pi, C> with the plan held constant.

    `ht` is the fixed reference feature matrix (no gradient), `hs` the
    tape-tracked one. The solver runs outside the tape; gradients flow only
    through the cost entries.
    """
    ht_arr = _feature_matrix(ht)
    if ht_arr.shape[0] != hs.shape[0]:
        raise ContractError(
            f"lckt_loss: batch sizes disagree, {ht_arr.shape[0]} vs {hs.shape[0]}"
        )
    cost_t = cosine_cost_graph(ht_arr, hs)
    n, m = cost_t.shape
    plan, _w = solve_transport(
        cost_t.data, uniform_marginal(n), uniform_marginal(m), cfg
    )
    return tsum(mul(cost_t, Tensor(plan.pi)))
