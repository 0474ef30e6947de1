"""Dual-form contrastive machinery: spectral-normalized 1-Lipschitz critic,
the buffered-negative contrastive loss, the sigmoid NCE baseline, and the
discrete mutual-information bound used to sanity-check both.

Power iteration runs on raw weight arrays (one step per training forward,
converged in verification mode); the layer then normalizes its weight by
sigma = u' W v with u, v held constant, so the tape sees an exact linear
function of the weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError
from .tensor import (
    Tape,
    Tensor,
    add_rowvec,
    clip,
    concat_cols,
    div,
    log,
    matmul,
    relu,
    repeat_rows,
    reshape,
    sigmoid,
    sub,
    tmean,
    transpose,
)

CLAMP = 1e-7


@dataclass
class PowerIterationResult:
    sigma: float
    u: np.ndarray
    v: np.ndarray
    degenerate: bool
    iters_used: int


def power_iteration(W, u0, iters: int, tol: float = 0.0) -> PowerIterationResult:
    """Estimate the largest singular value of W by alternating matvecs.

    The estimate never exceeds the true value and is nondecreasing in the
    iteration count for a fixed start vector. A zero matrix (or a start
    vector in the kernel of W') comes back with sigma 0 and the degenerate
    flag set.
    """
    W = np.asarray(W, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    if iters < 1:
        raise ContractError(f"power_iteration: iters must be >= 1, got {iters}")
    if W.ndim != 2 or u0.shape != (W.shape[0],):
        raise ContractError(f"power_iteration: W {W.shape} with u0 {u0.shape}")
    sigma, u, v, used = kernels.power_iteration_kernel(W, u0.copy(), iters, tol)
    return PowerIterationResult(float(sigma), u, v, degenerate=(sigma == 0.0), iters_used=used)


def jacobi_largest_singular_value(W, sweeps: int = 100, tol: float = 1e-14) -> float:
    """Largest singular value via cyclic Jacobi diagonalization of W'W.

    Independent of the power-iteration path; serves as its oracle in tests.
    """
    W = np.asarray(W, dtype=np.float64)
    G = W.T @ W
    n = G.shape[0]
    G = G.copy()
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(G[p, q]))
                if abs(G[p, q]) <= tol * max(abs(G[p, p]), abs(G[q, q]), 1e-30):
                    continue
                theta = 0.5 * np.arctan2(2.0 * G[p, q], G[q, q] - G[p, p])
                c, s = np.cos(theta), np.sin(theta)
                J = np.eye(n)
                J[p, p] = c
                J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                G = J.T @ G @ J
        if off <= tol:
            break
    return float(np.sqrt(max(G.diagonal().max(), 0.0)))


class SpectralLayer:
    """Linear layer whose weight is divided by a power-iteration estimate of
    its largest singular value before use. Bias is left unnormalized (it does
    not affect the Lipschitz constant)."""

    def __init__(self, weight: Tensor, bias: Tensor, rng: np.random.Generator, power_iters: int = 1):
        self.weight = weight
        self.bias = bias
        self.power_iters = power_iters
        u = rng.standard_normal(weight.shape[0])
        self.u_vec = u / np.linalg.norm(u)
        self.v_vec = np.zeros(weight.shape[1])

    def refresh_power(self, iters: int = 50, tol: float = 1e-13) -> float:
        res = power_iteration(self.weight.data, self.u_vec, iters, tol)
        if not res.degenerate:
            self.u_vec, self.v_vec = res.u, res.v
        return res.sigma

    def sigma_estimate(self) -> float:
        if not self.v_vec.any():
            return 0.0
        return float(self.u_vec @ self.weight.data @ self.v_vec)

    def normalized_weight(self, update_power: bool = True) -> Tensor:
        if update_power:
            self.refresh_power(iters=self.power_iters, tol=0.0)
        if not self.v_vec.any():
            return self.weight
        u_row = Tensor(self.u_vec[None, :])
        v_col = Tensor(self.v_vec[:, None])
        sigma = matmul(matmul(u_row, self.weight), v_col)
        return div(self.weight, sigma)

    def apply(self, x: Tensor, spectral: bool = True, update_power: bool = True) -> Tensor:
        w = self.normalized_weight(update_power) if spectral else self.weight
        return add_rowvec(matmul(x, transpose(w)), self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Critic:
    """Pair-scoring MLP over concatenated (teacher, student) embeddings.

    spectral=True gives the 1-Lipschitz critic with raw scalar scores;
    spectral=False with sigmoid_output=True gives the squashed critic for
    the NCE baseline.
    """

    def __init__(
        self,
        pair_dim: int,
        hidden: int = 128,
        *,
        spectral: bool = True,
        sigmoid_output: bool = False,
        power_iters: int = 1,
        seed: int = 0,
        tape: Tape | None = None,
    ):
        self.pair_dim = pair_dim
        self.hidden = hidden
        self.spectral = spectral
        self.sigmoid_output = sigmoid_output
        rng = np.random.default_rng([seed, 71])
        self.layers = []
        for fan_in, fan_out in ((pair_dim, hidden), (hidden, 1)):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = Tensor(rng.uniform(-limit, limit, size=(fan_out, fan_in)), tape)
            b = Tensor(np.zeros(fan_out), tape)
            self.layers.append(SpectralLayer(w, b, rng, power_iters))

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def refresh_power(self, iters: int = 50) -> None:
        for layer in self.layers:
            layer.refresh_power(iters=iters)

    def forward_matrix(self, pairs: Tensor, update_power: bool = True) -> Tensor:
        """Score a batch of concatenated pairs; returns an (n, 1) tensor."""
        if pairs.shape[1] != self.pair_dim:
            raise ContractError(
                f"critic expects pair width {self.pair_dim}, got {pairs.shape[1]}"
            )
        h = relu(self.layers[0].apply(pairs, self.spectral, update_power))
        out = self.layers[1].apply(h, self.spectral, update_power)
        return sigmoid(out) if self.sigmoid_output else out

    def clone(self) -> "Critic":
        other = Critic(
            self.pair_dim,
            self.hidden,
            spectral=self.spectral,
            sigmoid_output=self.sigmoid_output,
        )
        for mine, theirs in zip(self.layers, other.layers):
            theirs.weight = Tensor(mine.weight.data.copy())
            theirs.bias = Tensor(mine.bias.data.copy())
            theirs.u_vec = mine.u_vec.copy()
            theirs.v_vec = mine.v_vec.copy()
            theirs.power_iters = mine.power_iters
        return other


def _as_row(t) -> Tensor:
    t = t if isinstance(t, Tensor) else Tensor(t)
    if t.data.ndim == 1:
        return reshape(t, (1, t.size))
    return t


def critic_forward(critic: Critic, ht, hs, update_power: bool = False) -> Tensor:
    """Score a single (teacher, student) pair; returns a 1x1 tensor."""
    pair = concat_cols(_as_row(ht), _as_row(hs))
    return critic.forward_matrix(pair, update_power=update_power)


@dataclass
class PairBatch:
    """Congruent pairs (same sample through teacher and student) plus M
    buffered incongruent teacher features per student row.

    neg_teacher stacks the negatives for student row i at rows
    [i*M, (i+1)*M); the builder guarantees no negative shares its anchor's
    sample id.
    """

    teacher: np.ndarray
    student: Tensor
    neg_teacher: np.ndarray
    m_negatives: int

    def __post_init__(self):
        n = self.teacher.shape[0]
        if self.student.shape[0] != n:
            raise ContractError("congruent teacher/student row counts disagree")
        if n == 0 or self.neg_teacher.shape[0] == 0:
            raise ContractError("pair batch needs at least one congruent and one incongruent pair")
        if self.neg_teacher.shape[0] != n * self.m_negatives:
            raise ContractError(
                f"expected {n * self.m_negatives} incongruent rows, got {self.neg_teacher.shape[0]}"
            )


def build_pair_batch(buffer, ids, teacher_feats: np.ndarray, student_feats: Tensor, m: int) -> PairBatch:
    """Draw m buffered teacher negatives per sample, excluding the anchor id."""
    negs = [buffer.sample_negatives(sample_id, m, side="teacher") for sample_id in ids]
    return PairBatch(
        teacher=teacher_feats,
        student=student_feats,
        neg_teacher=np.concatenate(negs, axis=0),
        m_negatives=m,
    )


def gckt_loss(critic: Critic, batch: PairBatch, update_power: bool = True) -> Tensor:
    """Mean congruent score minus M times the mean incongruent score."""
    cong = concat_cols(Tensor(batch.teacher), batch.student)
    incong = concat_cols(Tensor(batch.neg_teacher), repeat_rows(batch.student, batch.m_negatives))
    s_cong = critic.forward_matrix(cong, update_power=update_power)
    s_incong = critic.forward_matrix(incong, update_power=False)
    return sub(tmean(s_cong), Tensor(float(batch.m_negatives)) * tmean(s_incong))


def nce_loss(critic: Critic, batch: PairBatch, update_power: bool = True) -> Tensor:
    """Mean log-score on congruent pairs plus mean log(1 - score) on
    incongruent pairs; scores clamped away from {0, 1} before the logs."""
    if not critic.sigmoid_output:
        raise ContractError("nce_loss needs a critic with sigmoid output")
    cong = concat_cols(Tensor(batch.teacher), batch.student)
    incong = concat_cols(Tensor(batch.neg_teacher), repeat_rows(batch.student, batch.m_negatives))
    g_cong = clip(critic.forward_matrix(cong, update_power=update_power), CLAMP, 1.0 - CLAMP)
    g_incong = clip(critic.forward_matrix(incong, update_power=False), CLAMP, 1.0 - CLAMP)
    return tmean(log(g_cong)) + tmean(log(sub(Tensor(1.0), g_incong)))


def mi_bound_discrete(joint) -> tuple[float, float]:
    """For a finite joint table: the contrastive lower bound
    E_p[log(p / (p + mu nu))] and the exact mutual information.

    The bound never exceeds the exact value; zero cells contribute nothing
    to either sum.
    """
    p = np.asarray(joint, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] > 16 or p.shape[1] > 16:
        raise ContractError(f"joint must be 2-d with support at most 16x16, got {p.shape}")
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise ContractError("joint table must be a normalized probability table")
    mu = p.sum(axis=1)
    nu = p.sum(axis=0)
    prod = np.outer(mu, nu)
    mask = p > 0.0
    bound = float((p[mask] * np.log(p[mask] / (p[mask] + prod[mask]))).sum())
    exact = float((p[mask] * np.log(p[mask] / prod[mask])).sum())
    return bound, exact
