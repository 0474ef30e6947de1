"""Transport machinery against the permutation-enumeration oracle and the
printed-algorithm invariants."""

import itertools

import numpy as np
import pytest

from wcord.errors import ContractError, DomainError, SolverUnderflowError
from wcord.ot import (
    CostMatrix,
    SinkhornConfig,
    auto_epsilon,
    cosine_cost,
    cosine_cost_graph,
    entropy_term,
    exact_assignment_cost,
    lckt_loss,
    solve_transport,
    uniform_marginal,
)
from wcord.tensor import Tape, Tensor, backward, finite_difference_grad


def random_features(seed, n, d=6):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    return x


def random_cost(seed, n, m=None, d=6):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, d))
    b = rng.normal(size=(m or n, d))
    return cosine_cost(a, b)


# cosine cost -----------------------------------------------------------------

def test_cosine_self_distance_zero():
    v = np.array([[3.0, 4.0]])
    assert cosine_cost(v, v).values[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_cosine_orthogonal_is_one():
    C = cosine_cost(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    assert C.values[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_cosine_antipodal_is_two():
    x = np.array([[0.3, -2.0, 1.0]])
    assert cosine_cost(x, -x).values[0, 0] == pytest.approx(2.0, abs=1e-15)


def test_cosine_zero_norm_row_names_index():
    bad = np.array([[1.0, 0.0], [0.0, 0.0]])
    good = np.array([[1.0, 0.0]])
    with pytest.raises(DomainError, match="index 1"):
        cosine_cost(bad, good)
    with pytest.raises(DomainError, match="column"):
        cosine_cost(good, bad)


def test_cosine_entries_in_range():
    C = random_cost(5, 9, 7)
    assert C.values.min() >= 0.0 and C.values.max() <= 2.0


def test_cosine_graph_matches_plain():
    a = random_features(1, 5)
    b = random_features(2, 4)
    plain = cosine_cost(a, b).values
    graph = cosine_cost_graph(a, Tensor(b)).data.T  # graph computes rows for `a`
    assert np.abs(cosine_cost_graph(a, Tensor(b)).data - plain).max() <= 1e-12


# the solver ------------------------------------------------------------------

def test_single_atom():
    plan, w = solve_transport(np.array([[0.3]]), [1.0], [1.0], SinkhornConfig(0.1))
    assert plan.pi == pytest.approx(np.array([[1.0]]))
    assert w == pytest.approx(0.3)


def test_zero_cost_matrix():
    n = 4
    plan, w = solve_transport(
        np.zeros((n, n)), uniform_marginal(n), uniform_marginal(n), SinkhornConfig(0.5)
    )
    assert w == pytest.approx(0.0, abs=1e-15)
    assert np.abs(plan.pi.sum(axis=1) - 0.25).max() <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_solver_tracks_enumeration_oracle(seed):
    C = random_cost(100 + seed, 5)
    eps = 0.01 * C.mean()
    plan, w = solve_transport(C, uniform_marginal(5), uniform_marginal(5), SinkhornConfig(eps))
    exact = exact_assignment_cost(C)
    assert abs(w - exact) <= 0.05 * C.mean()


def test_marginals_validated():
    C = np.zeros((2, 2))
    cfg = SinkhornConfig(0.1)
    with pytest.raises(ContractError):
        solve_transport(C, [0.7, 0.7], [0.5, 0.5], cfg)
    with pytest.raises(ContractError):
        solve_transport(C, [0.5, 0.5], [1.5, -0.5], cfg)


def test_underflow_guard_advises_epsilon():
    C = np.array([[900.0, 900.0], [0.0, 0.0]])
    with pytest.raises(SolverUnderflowError, match="epsilon"):
        solve_transport(C, uniform_marginal(2), uniform_marginal(2), SinkhornConfig(1.0))


def test_config_validation():
    with pytest.raises(ContractError):
        SinkhornConfig(0.0).validate()
    with pytest.raises(ContractError):
        SinkhornConfig(0.1, outer_iters=0).validate()


# enumeration oracle ----------------------------------------------------------

def test_exact_assignment_trivial_cases():
    assert exact_assignment_cost(np.array([[0.0, 1.0], [1.0, 0.0]])) == 0.0
    assert exact_assignment_cost(np.array([[1.0, 0.0], [0.0, 1.0]])) == 0.0


def test_exact_assignment_two_enumeration_orders():
    rng = np.random.default_rng(3)
    C = rng.uniform(0, 2, size=(4, 4))

    def dfs(row, used, acc):
        if row == 4:
            return acc
        best = np.inf
        for j in range(4):
            if j not in used:
                best = min(best, dfs(row + 1, used | {j}, acc + C[row, j]))
        return best

    recursive = dfs(0, frozenset(), 0.0) / 4
    direct = min(sum(C[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4))) / 4
    assert exact_assignment_cost(C) == pytest.approx(direct, abs=1e-15)
    assert direct == pytest.approx(recursive, abs=1e-12)


def test_exact_assignment_refuses_large_n():
    with pytest.raises(ContractError, match="enumeration bound"):
        exact_assignment_cost(np.zeros((9, 9)))


# entropy ---------------------------------------------------------------------

def test_entropy_uniform_plan():
    n = 5
    pi = np.full((n, n), 1.0 / n**2)
    assert entropy_term(pi) == pytest.approx(-2.0 * np.log(n), abs=1e-12)


def test_entropy_deterministic_plan():
    pi = np.zeros((3, 3))
    pi[1, 2] = 1.0
    assert entropy_term(pi) == 0.0


def test_entropy_matches_direct_summation():
    rng = np.random.default_rng(4)
    pi = rng.uniform(size=(4, 6))
    pi /= pi.sum()
    direct = sum(p * np.log(p) for p in pi.reshape(-1) if p > 0)
    assert entropy_term(pi) == pytest.approx(direct, abs=1e-12)


# module invariants -----------------------------------------------------------

@pytest.mark.parametrize("n", [4, 9, 16])
def test_solved_plans_are_feasible(n):
    C = random_cost(200 + n, n)
    eps = 0.01 * C.mean()
    plan, w = solve_transport(
        C, uniform_marginal(n), uniform_marginal(n), SinkhornConfig(eps, 50, 25, marginal_tol=0.0)
    )
    assert plan.pi.min() >= 0.0
    assert plan.residual <= 1e-4
    assert w >= 0.0


@pytest.mark.parametrize("seed", range(4))
def test_scaling_invariance(seed):
    C = random_cost(300 + seed, 6)
    eps = 0.01 * C.mean()
    u = uniform_marginal(6)
    s = 3.7
    base_plan, base_w = solve_transport(C, u, u, SinkhornConfig(eps))
    scaled_plan, scaled_w = solve_transport(
        CostMatrix(s * C.values), u, u, SinkhornConfig(s * eps)
    )
    assert np.abs(base_plan.pi - scaled_plan.pi).max() <= 1e-10
    assert abs(scaled_w - s * base_w) <= 1e-10 * max(1.0, s * base_w)


@pytest.mark.parametrize("seed", range(4))
def test_transpose_symmetry(seed):
    C = random_cost(400 + seed, 6)
    eps = 0.01 * C.mean()
    u = uniform_marginal(6)
    cfg = SinkhornConfig(eps, outer_iters=600, inner_iters=25, marginal_tol=0.0)
    plan_f, w_f = solve_transport(C, u, u, cfg)
    plan_t, w_t = solve_transport(CostMatrix(np.ascontiguousarray(C.values.T)), u, u, cfg)
    assert abs(w_f - w_t) <= 1e-10
    assert np.abs(plan_f.pi - plan_t.pi.T).max() <= 1e-10


# the batch-matching loss -----------------------------------------------------

def test_lckt_self_transport_is_small():
    h = random_features(7, 6)
    eps = auto_epsilon(cosine_cost(h, h).mean())
    assert eps <= 0.01 * 2.0
    loss = lckt_loss(h, Tensor(h.copy()), SinkhornConfig(eps))
    assert 0.0 <= loss.item() <= 0.05


def test_lckt_single_pair_is_exact_cost():
    a = random_features(8, 1)
    b = random_features(9, 1)
    loss = lckt_loss(a, Tensor(b), SinkhornConfig(0.05))
    assert loss.item() == pytest.approx(cosine_cost(a, b).values[0, 0], abs=1e-12)


def test_lckt_batch_size_mismatch():
    with pytest.raises(ContractError):
        lckt_loss(random_features(1, 3), Tensor(random_features(2, 4)), SinkhornConfig(0.05))


def test_lckt_solver_leaves_tape_untouched():
    h_t = random_features(10, 5)
    tape = Tape()
    hs = Tensor(random_features(11, 5), tape)
    records_before_loss = len(tape)
    loss = lckt_loss(h_t, hs, SinkhornConfig(0.01, 60, 25))
    graph_records = len(tape) - records_before_loss
    # rebuild the identical cost graph alone: the solver must add nothing
    tape2 = Tape()
    hs2 = Tensor(hs.data.copy(), tape2)
    from wcord.ot import cosine_cost_graph as ccg
    from wcord.tensor import mul, tsum

    _cost_only = tsum(mul(ccg(h_t, hs2), Tensor(np.ones((5, 5)))))
    assert graph_records == len(tape2)
    backward(loss)
    assert hs.grad is not None


def test_lckt_envelope_gradient_matches_full_resolve():
    h_t = random_features(12, 4, d=3)
    hs0 = random_features(13, 4, d=3)
    C0 = cosine_cost(h_t, hs0)
    cfg = SinkhornConfig(0.01 * C0.mean(), outer_iters=80, inner_iters=25, marginal_tol=0.0)

    tape = Tape()
    hs = Tensor(hs0.copy(), tape)
    backward(lckt_loss(h_t, hs, cfg))

    fd = finite_difference_grad(lambda t: lckt_loss(h_t, t, cfg), hs0, h=1e-6)
    rel = np.abs(hs.grad - fd).max() / np.abs(fd).max()
    assert rel <= 0.05
