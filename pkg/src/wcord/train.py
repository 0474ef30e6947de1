"""Training loops: teacher pre-training, distillation under a selectable
objective, evaluation, and linear probing.

Everything is plain SGD with a fixed learning rate and is bitwise
reproducible for a given (config, seed): batch order, parameter init, buffer
sampling and critic init all draw from independent child streams of the run
seed. report.csv is byte-stable across replays, so its elapsed_s column
carries a 0.0 placeholder; measured wall-clock lives on the TrainReport
object (and in run_meta.json when driven through the CLI).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .buffer import MemoryBuffer
from .critic import Critic
from .data import Dataset, TwoViewDataset
from .errors import ContractError, DomainError, TrainingDivergedError
from .losses import (
    CONTRASTIVE_OBJECTIVES,
    EMBEDDING_OBJECTIVES,
    OBJECTIVES,
    LossComponents,
    ce_loss,
    composite_loss,
)
from .nets import MlpSpec, Model, forward, init_params
from .tensor import (
    Tape,
    Tensor,
    add_rowvec,
    backward,
    detach_all,
    div,
    matmul,
    parameters_on,
    row_sum,
    scale_rows,
    sqrt,
    transpose,
)


@dataclass
class DistillConfig:
    alpha: float = 1.0
    rho: float = 4.0
    lambda1: float = 0.8
    lambda2: float = 0.05
    m_negatives: int = 16
    sinkhorn_epsilon: float | None = None  # None = 0.01 * mean(C) per batch
    sinkhorn_outer: int = 50
    sinkhorn_inner: int = 25
    sinkhorn_tol: float = 1e-6
    lr: float = 0.05
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    critic_hidden: int = 128
    buffer_capacity: int | None = None  # None = dataset size

    def validate(self) -> None:
        if not self.rho > 0.0:
            raise ContractError(f"rho must be positive, got {self.rho}")
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise ContractError("lambda1 and lambda2 must be >= 0")
        if self.m_negatives < 1:
            raise ContractError("m_negatives must be >= 1")
        if self.lambda2 > 0.0 and self.batch_size < 2:
            raise ContractError("batch_size must be >= 2 when the transport term is active")
        if not self.lr > 0.0:
            raise ContractError("lr must be positive")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.sinkhorn_epsilon is not None and not self.sinkhorn_epsilon > 0.0:
            raise ContractError("sinkhorn_epsilon must be positive when given")


@dataclass
class EpochLog:
    epoch: int
    ce: float
    gckt: float
    lckt: float
    kdkl: float
    test_acc: float
    elapsed_s: float


@dataclass
class TrainReport:
    seed: int
    objective: str
    epoch_logs: list[EpochLog] = field(default_factory=list)
    step_components: list[LossComponents] = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def final_test_acc(self) -> float:
        return self.epoch_logs[-1].test_acc if self.epoch_logs else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch,ce,gckt,lckt,kdkl,test_acc,elapsed_s\n")
            for row in self.epoch_logs:
                fh.write(
                    f"{row.epoch},{row.ce!r},{row.gckt!r},{row.lckt!r},"
                    f"{row.kdkl!r},{row.test_acc!r},0.0\n"
                )


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        chunk = order[start : start + batch_size]
        if len(chunk) >= 2 or batch_size == 1:
            yield chunk


def _inputs(ds) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(teacher-side X, student-side X, labels, ids) for plain or two-view data."""
    if isinstance(ds, TwoViewDataset):
        return ds.view_a, ds.view_b, ds.y, ds.ids
    return ds.X, ds.X, ds.y, ds.ids


def _student_dataset(ds) -> Dataset:
    if isinstance(ds, TwoViewDataset):
        return Dataset(ds.view_b, ds.y, ds.ids, split=ds.split)
    return ds


def evaluate(model: Model, ds: Dataset) -> float:
    """Fraction of argmax(logits) == label; ties break to the lowest class."""
    _h, z = forward(model, ds.X)
    pred = np.argmax(z.data, axis=1)
    return float((pred == ds.y).mean())


def _l2_normalize_rows(t: Tensor) -> Tensor:
    return scale_rows(t, div(Tensor(1.0), sqrt(row_sum(t * t))))


def _check_finite(total: Tensor, comps: LossComponents, epoch: int) -> None:
    if not np.isfinite(total.data).all():
        raise TrainingDivergedError(
            f"non-finite loss at epoch {epoch}",
            diagnostics={
                "epoch": epoch,
                "ce": comps.ce,
                "gckt": comps.gckt_raw,
                "lckt": comps.lckt_raw,
                "kdkl": comps.kdkl_raw,
            },
        )


def train_teacher(
    train_ds: Dataset, test_ds: Dataset, spec: MlpSpec, cfg: DistillConfig
) -> tuple[Model, TrainReport]:
    """SGD on cross-entropy; the returned model is frozen."""
    cfg.validate()
    started = time.perf_counter()
    ss = np.random.SeedSequence(cfg.seed)
    init_seed, shuffle_seed = ss.spawn(2)
    model = init_params(spec, init_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    report = TrainReport(seed=cfg.seed, objective="teacher_ce")
    for epoch in range(1, cfg.epochs + 1):
        sums = np.zeros(4)
        steps = 0
        for idx in _batches(len(train_ds), cfg.batch_size, shuffle_rng):
            tape = Tape()
            params = model.parameters()
            parameters_on(tape, params)
            try:
                _h, z = forward(model, Tensor(train_ds.X[idx]))
                loss = ce_loss(z, train_ds.y[idx])
            except DomainError as exc:
                raise TrainingDivergedError(
                    f"loss computation failed at epoch {epoch}: {exc}",
                    diagnostics={"epoch": epoch},
                ) from exc
            comps = LossComponents(ce=loss.item(), total=loss.item())
            _check_finite(loss, comps, epoch)
            backward(loss)
            for p in params:
                p.data -= cfg.lr * p.grad
            detach_all(params)
            report.step_components.append(comps)
            sums += np.array([comps.ce, 0.0, 0.0, 0.0])
            steps += 1
        acc = evaluate(model, test_ds)
        mean = sums / max(steps, 1)
        report.epoch_logs.append(EpochLog(epoch, mean[0], mean[1], mean[2], mean[3], acc, 0.0))
    model.freeze()
    report.wall_clock_s = time.perf_counter() - started
    return model, report


def distill_student(
    train_ds,
    test_ds,
    teacher: Model,
    student_spec: MlpSpec,
    cfg: DistillConfig,
    objective: str,
) -> tuple[Model, TrainReport]:
    """Distill under the selected objective.

    Per step: teacher forward (no gradients) -> project + normalize student
    embeddings -> buffer upsert -> loss -> backward -> SGD step. Teacher
    parameters are never touched. For two-view data the teacher consumes
    view A and the student view B.
    """
    cfg.validate()
    if objective not in OBJECTIVES:
        raise ContractError(f"unknown objective {objective!r}; pick one of {OBJECTIVES}")
    if not teacher.frozen:
        raise ContractError("teacher must be frozen before distillation")
    started = time.perf_counter()

    xa_train, xb_train, y_train, ids_train = _inputs(train_ds)
    test_student_ds = _student_dataset(test_ds)
    if teacher.spec.in_dim != xa_train.shape[1]:
        raise ContractError("teacher input width does not match teacher-side data")

    ss = np.random.SeedSequence(cfg.seed)
    init_seed, proj_seed, critic_seed, buffer_seed, shuffle_seed = ss.spawn(5)
    student = init_params(student_spec, init_seed)
    trainables = list(student.parameters())

    needs_embed = objective in EMBEDDING_OBJECTIVES
    projector = None
    buffer = None
    critic = None
    if needs_embed:
        d_t, d_s = teacher.spec.embed_dim, student_spec.embed_dim
        limit = np.sqrt(6.0 / (d_t + d_s))
        projector = Tensor(np.random.default_rng(proj_seed).uniform(-limit, limit, size=(d_t, d_s)))
        trainables.append(projector)
        capacity = cfg.buffer_capacity if cfg.buffer_capacity is not None else len(y_train)
        buffer = MemoryBuffer(d_t, capacity, seed=buffer_seed)
    if objective in CONTRASTIVE_OBJECTIVES:
        critic = Critic(
            2 * teacher.spec.embed_dim,
            cfg.critic_hidden,
            spectral=(objective != "nce"),
            sigmoid_output=(objective == "nce"),
            power_iters=1,
            seed=int(np.random.default_rng(critic_seed).integers(2**31)),
        )
        trainables.extend(critic.parameters())

    shuffle_rng = np.random.default_rng(shuffle_seed)
    report = TrainReport(seed=cfg.seed, objective=objective)
    for epoch in range(1, cfg.epochs + 1):
        sums = np.zeros(4)
        steps = 0
        for idx in _batches(len(y_train), cfg.batch_size, shuffle_rng):
            tape = Tape()
            parameters_on(tape, trainables)
            try:
                comps = _distill_step(
                    objective, teacher, student, projector, critic, buffer, cfg,
                    xa_train[idx], xb_train[idx], y_train[idx], ids_train[idx],
                    epoch,
                )
            except DomainError as exc:
                detach_all(trainables)
                raise TrainingDivergedError(
                    f"loss computation failed at epoch {epoch}: {exc}",
                    diagnostics={"epoch": epoch},
                ) from exc
            for p in trainables:
                p.data -= cfg.lr * p.grad
            detach_all(trainables)
            report.step_components.append(comps)
            sums += np.array([comps.ce, comps.gckt_w, comps.lckt_w, comps.kdkl_w])
            steps += 1
        acc = evaluate(student, test_student_ds)
        mean = sums / max(steps, 1)
        report.epoch_logs.append(EpochLog(epoch, mean[0], mean[1], mean[2], mean[3], acc, 0.0))
    report.wall_clock_s = time.perf_counter() - started
    return student, report


def _distill_step(objective, teacher, student, projector, critic, buffer, cfg, xa, xb, y, ids, epoch):
    z_teacher = None
    teacher_embed = None
    student_embed = None
    if objective != "ce_only":
        h_t, z_t = forward(teacher, xa)
        z_teacher = z_t.data
        if objective in EMBEDDING_OBJECTIVES:
            norms = np.linalg.norm(h_t.data, axis=1, keepdims=True)
            if np.any(norms == 0.0):
                raise DomainError("teacher produced a zero embedding; cannot normalize")
            teacher_embed = h_t.data / norms

    h_s, z_s = forward(student, Tensor(xb))
    if objective in EMBEDDING_OBJECTIVES:
        student_embed = _l2_normalize_rows(matmul(h_s, transpose(projector)))
        for row, sample_id in enumerate(ids):
            buffer.upsert(int(sample_id), teacher_embed[row], student_embed.data[row])

    total, comps = composite_loss(
        objective,
        z_student=z_s,
        y=y,
        z_teacher=z_teacher,
        student_embed=student_embed,
        teacher_embed=teacher_embed,
        ids=ids,
        critic=critic,
        buffer=buffer,
        alpha=cfg.alpha,
        rho=cfg.rho,
        lambda1=cfg.lambda1,
        lambda2=cfg.lambda2,
        m_negatives=cfg.m_negatives,
        sinkhorn_epsilon=cfg.sinkhorn_epsilon,
        sinkhorn_outer=cfg.sinkhorn_outer,
        sinkhorn_inner=cfg.sinkhorn_inner,
        sinkhorn_tol=cfg.sinkhorn_tol,
    )
    _check_finite(total, comps, epoch)
    backward(total)
    return comps


def probe_features(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_test: np.ndarray,
    y_test: np.ndarray,
    n_classes: int,
    *,
    epochs: int = 60,
    lr: float = 0.2,
    batch_size: int = 64,
    seed: int = 0,
) -> float:
    """Train a single linear layer + softmax on fixed features; test accuracy."""
    ss = np.random.SeedSequence([seed, 97])
    init_seed, shuffle_seed = ss.spawn(2)
    d = x_train.shape[1]
    limit = np.sqrt(6.0 / (d + n_classes))
    rng = np.random.default_rng(init_seed)
    w = Tensor(rng.uniform(-limit, limit, size=(n_classes, d)))
    b = Tensor(np.zeros(n_classes))
    shuffle_rng = np.random.default_rng(shuffle_seed)
    for _epoch in range(epochs):
        for idx in _batches(len(y_train), batch_size, shuffle_rng):
            tape = Tape()
            parameters_on(tape, [w, b])
            z = add_rowvec(matmul(Tensor(x_train[idx]), transpose(w)), b)
            loss = ce_loss(z, y_train[idx])
            backward(loss)
            for p in (w, b):
                p.data -= lr * p.grad
            detach_all([w, b])
    logits = x_test @ w.data.T + b.data
    return float((np.argmax(logits, axis=1) == y_test).mean())


def embed_dataset(model: Model, ds: Dataset) -> np.ndarray:
    h, _z = forward(model, ds.X)
    return h.data


def linear_probe(
    model: Model,
    train_ds: Dataset,
    test_ds: Dataset,
    *,
    epochs: int = 60,
    lr: float = 0.2,
    batch_size: int = 64,
    seed: int = 0,
) -> float:
    """Freeze the model, train a linear classifier on its embeddings."""
    h_train = embed_dataset(model, train_ds)
    h_test = embed_dataset(model, test_ds)
    n_classes = max(train_ds.n_classes, test_ds.n_classes)
    return probe_features(
        h_train, train_ds.y, h_test, test_ds.y, n_classes,
        epochs=epochs, lr=lr, batch_size=batch_size, seed=seed,
    )
