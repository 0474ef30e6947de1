"""Wasserstein contrastive representation distillation toolkit.

Primal-form entropic transport matching and a dual-form spectral-normalized
contrastive critic, composed into a unified distillation objective, plus the
desk-scale training harness and CLI that drive them.
"""

from .buffer import MemoryBuffer
from .critic import (
    Critic,
    PairBatch,
    critic_forward,
    gckt_loss,
    jacobi_largest_singular_value,
    mi_bound_discrete,
    nce_loss,
    power_iteration,
)
from .data import Dataset, TwoViewDataset, gen_clusters, load_csv, save_csv, split_views, train_test_split
from .kernels import NUMBA_ENABLED
from .losses import ce_loss, composite_loss, kd_loss, softened_kl, wcord_loss
from .nets import MlpSpec, Model, forward, init_params, load_model, save_model
from .ot import (
    CostMatrix,
    SinkhornConfig,
    TransportPlan,
    cosine_cost,
    entropy_term,
    exact_assignment_cost,
    lckt_loss,
    solve_transport,
)
from .tensor import Tape, Tensor, backward, finite_difference_grad
from .train import (
    DistillConfig,
    TrainReport,
    distill_student,
    evaluate,
    linear_probe,
    train_teacher,
)

__version__ = "0.1.0"
