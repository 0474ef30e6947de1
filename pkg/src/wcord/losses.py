"""Classification and distillation losses plus the unified objective.

The composite objective is assembled in one canonical order so the logged
components reconstruct the total bit-for-bit:

    total = ((ce + alpha*kl) - lambda1*contrastive) + lambda2*transport

Inactive terms simply do not appear in the graph; reconstruction treats them
as 0.0, which leaves floats unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critic import Critic, PairBatch, build_pair_batch, gckt_loss, nce_loss
from .errors import ContractError
from .ot import SinkhornConfig, auto_epsilon, cosine_cost, lckt_loss
from .tensor import Tensor, add, log, mul, neg, row_sum, softmax_rows, sub, tmean


def one_hot(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= n_classes):
        raise ContractError(f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def ce_loss(z: Tensor, y) -> Tensor:
    """Mean negative log softmax probability of the true class."""
    mask = one_hot(y, z.shape[1])
    log_p = log(softmax_rows(z, 1.0))
    return neg(tmean(row_sum(mul(Tensor(mask), log_p))))


def softened_kl(z_student: Tensor, z_teacher, rho: float) -> Tensor:
    """Mean over the batch of KL(softmax(zT/rho) || softmax(zS/rho)).

    Teacher logits are treated as constants.
    """
    if not rho > 0.0:
        raise ContractError(f"temperature must be positive, got {rho}")
    zt = z_teacher.data if isinstance(z_teacher, Tensor) else np.asarray(z_teacher, dtype=np.float64)
    if zt.shape != z_student.shape:
        raise ContractError(f"logit shapes disagree: {zt.shape} vs {z_student.shape}")
    scaled = zt / rho
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled)
    p_t = e / e.sum(axis=1, keepdims=True)
    log_pt = np.log(p_t)
    log_ps = log(softmax_rows(z_student, rho))
    per_row = row_sum(mul(Tensor(p_t), sub(Tensor(log_pt), log_ps)))
    return tmean(per_row)


def kd_loss(z_student: Tensor, z_teacher, y, alpha: float, rho: float) -> Tensor:
    """Cross-entropy plus alpha-weighted softened KL to the teacher."""
    ce = ce_loss(z_student, y)
    if alpha == 0.0:
        return ce
    return add(ce, mul(softened_kl(z_student, z_teacher, rho), Tensor(float(alpha))))


@dataclass
class LossComponents:
    """Raw and weighted term values for one step; reconstructs the total."""

    ce: float
    gckt_raw: float = 0.0
    lckt_raw: float = 0.0
    kdkl_raw: float = 0.0
    gckt_w: float = 0.0
    lckt_w: float = 0.0
    kdkl_w: float = 0.0
    total: float = 0.0

    def reconstruct(self) -> float:
        return ((self.ce + self.kdkl_w) - self.gckt_w) + self.lckt_w

    def identity_gap(self) -> float:
        return self.total - self.reconstruct()


OBJECTIVES = ("ce_only", "kd", "nce", "gckt", "lckt", "wcord", "wcord_kd")
CONTRASTIVE_OBJECTIVES = ("nce", "gckt", "wcord", "wcord_kd")
TRANSPORT_OBJECTIVES = ("lckt", "wcord", "wcord_kd")
EMBEDDING_OBJECTIVES = CONTRASTIVE_OBJECTIVES + ("lckt",)
KD_OBJECTIVES = ("kd", "wcord_kd")


def composite_loss(
    objective: str,
    *,
    z_student: Tensor,
    y,
    z_teacher=None,
    student_embed: Tensor | None = None,
    teacher_embed: np.ndarray | None = None,
    ids=None,
    critic: Critic | None = None,
    buffer=None,
    alpha: float = 1.0,
    rho: float = 4.0,
    lambda1: float = 0.8,
    lambda2: float = 0.05,
    m_negatives: int = 16,
    sinkhorn_epsilon: float | None = None,
    sinkhorn_outer: int = 50,
    sinkhorn_inner: int = 25,
    sinkhorn_tol: float = 1e-6,
    update_power: bool = True,
) -> tuple[Tensor, LossComponents]:
    """Assemble the selected objective; returns the loss tensor and the
    per-term component record. For the `nce` objective the contrastive term
    is logged in the gckt slot."""
    if objective not in OBJECTIVES:
        raise ContractError(f"unknown objective {objective!r}; pick one of {OBJECTIVES}")

    total = ce_loss(z_student, y)
    comps = LossComponents(ce=total.item())

    if objective in KD_OBJECTIVES:
        kl = softened_kl(z_student, z_teacher, rho)
        comps.kdkl_raw = kl.item()
        weighted = mul(kl, Tensor(float(alpha)))
        comps.kdkl_w = weighted.item()
        total = add(total, weighted)

    if objective in CONTRASTIVE_OBJECTIVES:
        if critic is None or buffer is None or student_embed is None or teacher_embed is None:
            raise ContractError(f"objective {objective!r} needs critic, buffer and embeddings")
        batch = build_pair_batch(buffer, ids, teacher_embed, student_embed, m_negatives)
        if objective == "nce":
            term = nce_loss(critic, batch, update_power=update_power)
        else:
            term = gckt_loss(critic, batch, update_power=update_power)
        comps.gckt_raw = term.item()
        weighted = mul(term, Tensor(float(lambda1)))
        comps.gckt_w = weighted.item()
        total = sub(total, weighted)

    if objective in TRANSPORT_OBJECTIVES:
        if student_embed is None or teacher_embed is None:
            raise ContractError(f"objective {objective!r} needs embeddings")
        eps = sinkhorn_epsilon
        if eps is None:
            eps = auto_epsilon(cosine_cost(teacher_embed, student_embed.data).mean())
        cfg = SinkhornConfig(eps, sinkhorn_outer, sinkhorn_inner, sinkhorn_tol)
        term = lckt_loss(teacher_embed, student_embed, cfg)
        comps.lckt_raw = term.item()
        weighted = mul(term, Tensor(float(lambda2)))
        comps.lckt_w = weighted.item()
        total = add(total, weighted)

    comps.total = total.item()
    return total, comps


def wcord_loss(
    student_embed: Tensor,
    z_student: Tensor,
    teacher_embed: np.ndarray,
    y,
    ids,
    critic: Critic,
    buffer,
    *,
    lambda1: float = 0.8,
    lambda2: float = 0.05,
    m_negatives: int = 16,
    sinkhorn_epsilon: float | None = None,
    sinkhorn_outer: int = 50,
    sinkhorn_inner: int = 25,
    sinkhorn_tol: float = 1e-6,
    update_power: bool = True,
) -> tuple[Tensor, LossComponents]:
    """The unified objective: ce - lambda1 * contrastive + lambda2 * transport."""
    return composite_loss(
        "wcord",
        z_student=z_student,
        y=y,
        student_embed=student_embed,
        teacher_embed=teacher_embed,
        ids=ids,
        critic=critic,
        buffer=buffer,
        lambda1=lambda1,
        lambda2=lambda2,
        m_negatives=m_negatives,
        sinkhorn_epsilon=sinkhorn_epsilon,
        sinkhorn_outer=sinkhorn_outer,
        sinkhorn_inner=sinkhorn_inner,
        sinkhorn_tol=sinkhorn_tol,
        update_power=update_power,
    )
