import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2vtrade.optim import (
    AllocationProblem,
    NoFeasiblePairs,
    NonConvergence,
    ProblemTooLarge,
    constraint_residual,
    gradient,
    objective,
    oracle_allocation,
    project,
    projected_gradient_residual,
    solve_allocation,
    utilities,
)

from oracles import central_diff, lattice_oracle, log_welfare, rel_err

G22 = [[0.10, 0.06], [0.08, 0.12]]


def test_single_pair_saturates():
    sol = solve_allocation(AllocationProblem([[0.10]], [10.0], [6.0]))
    assert sol.x[0, 0] == pytest.approx(6.0, abs=1e-6)


def test_symmetric_split():
    sol = solve_allocation(AllocationProblem([[0.1], [0.1]], [10.0, 10.0], [8.0]))
    np.testing.assert_allclose(sol.x[:, 0], [4.0, 4.0], atol=1e-5)


def test_asymmetric_instance_matches_oracle():
    prob = AllocationProblem(G22, [3.0, 10.0], [4.0, 4.0])
    sol = solve_allocation(prob)
    ox = oracle_allocation(prob, 0.05)
    # independent loop-based lattice search agrees with the vectorized oracle
    lx, lv = lattice_oracle(G22, [3.0, 10.0], [4.0, 4.0], 0.25)
    np.testing.assert_allclose(sol.x, ox, atol=1e-3)
    np.testing.assert_allclose(lx, [[3.0, 0.0], [1.0, 4.0]])
    assert objective(prob, sol.x) >= lv - 1e-9


def test_oracle_examples():
    np.testing.assert_allclose(oracle_allocation(AllocationProblem([[0.1]], [10.0], [6.0]), 0.5), [[6.0]])
    np.testing.assert_allclose(
        oracle_allocation(AllocationProblem([[0.1], [0.1]], [10.0, 10.0], [8.0]), 0.25), [[4.0], [4.0]]
    )


def test_oracle_too_large():
    with pytest.raises(ProblemTooLarge):
        oracle_allocation(AllocationProblem(np.ones((4, 2)), np.ones(4), np.ones(2)), 0.5)


def test_no_feasible_pairs():
    with pytest.raises(NoFeasiblePairs):
        solve_allocation(AllocationProblem(np.zeros((0, 0)), [], []))
    with pytest.raises(NoFeasiblePairs):
        solve_allocation(AllocationProblem([[-0.1]], [1.0], [1.0]))


def test_problem_validation():
    with pytest.raises(ValueError):
        AllocationProblem([[0.1, 0.2]], [1.0], [1.0])
    with pytest.raises(ValueError):
        AllocationProblem([[0.1]], [-1.0], [1.0])
    with pytest.raises(ValueError):
        AllocationProblem([[0.1]], [1.0], [1.0], epsilon=0.0)


def test_nonconvergence_carries_best_iterate():
    prob = AllocationProblem(G22, [3.0, 10.0], [4.0, 4.0])
    with pytest.raises(NonConvergence) as e:
        solve_allocation(prob, max_iter=1, raise_on_failure=True)
    sol = e.value.solution
    assert not sol.converged
    assert constraint_residual(prob, sol.x) <= 1e-9
    assert solve_allocation(prob, max_iter=1).converged is False


def test_objective_and_gradient_against_oracles(rng):
    for _ in range(10):
        g = rng.uniform(0, 0.3, (3, 2))
        prob = AllocationProblem(g, [5.0, 5.0, 5.0], [5.0, 5.0])
        x = rng.uniform(0.1, 2.0, g.shape)
        assert objective(prob, x) == pytest.approx(log_welfare(g.tolist(), x.tolist()))
        fd = central_diff(lambda v: objective(prob, v.reshape(g.shape)), x.ravel(), 1e-7)
        assert rel_err(gradient(prob, x).ravel(), fd) < 1e-5


def test_projection_lands_in_polytope(rng):
    mask = np.ones((4, 3), bool)
    rc, cc = np.array([1.0, 2.0, 0.5, 3.0]), np.array([1.5, 1.0, 2.0])
    for _ in range(20):
        p = project(rng.normal(0, 2, (4, 3)), mask, rc, cc)
        assert p.min() >= -1e-12
        assert np.all(p.sum(1) <= rc + 1e-9) and np.all(p.sum(0) <= cc + 1e-9)


problems = st.tuples(
    st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31 - 1)
).map(lambda t: _rand_problem(*t))


def _rand_problem(nb, ns, seed):
    r = np.random.default_rng(seed)
    g = r.uniform(-0.2, 0.4, (nb, ns))
    return AllocationProblem(g, r.uniform(0.5, 6.0, nb), r.uniform(0.5, 6.0, ns))


@given(problems)
def test_solution_feasible_and_stationary(prob):
    if not prob.feasible.any():
        return
    sol = solve_allocation(prob)
    assert sol.converged
    assert constraint_residual(prob, sol.x) < 1e-6
    assert projected_gradient_residual(prob, sol.x) < 1e-5
    ub, us = utilities(prob, sol.x)
    assert np.all(ub >= 0) and np.all(us >= 0)


@settings(max_examples=25)
@given(problems, st.floats(0.1, 50.0))
def test_surplus_scaling_invariance(prob, k):
    if not prob.feasible.any():
        return
    a = solve_allocation(prob)
    b = solve_allocation(AllocationProblem(prob.surplus * k, prob.buyer_caps, prob.seller_caps,
                                           prob.epsilon, prob.feasible))
    # epsilon does not scale with g, so compare objectives at matching scale
    assert objective(prob, b.x) >= objective(prob, a.x) - 1e-4


@settings(max_examples=30)
@given(problems)
def test_never_worse_than_oracle(prob):
    if not prob.feasible.any():
        return
    sol = solve_allocation(prob)
    ox = oracle_allocation(prob, 0.25)
    assert objective(prob, sol.x) >= objective(prob, ox) - 1e-6


def _crowded(seed=0, nb=40, ns=11):
    # many buyers chasing a few sellers, one nearly empty: the regime of large fleets
    r = np.random.default_rng(seed)
    g = r.uniform(0.08, 0.2, (nb, ns))
    g[:, r.choice(ns, 3, replace=False)] = -0.1
    sc = r.uniform(0.5, 5.5, ns)
    sc[0] = 1e-3
    return AllocationProblem(g, r.uniform(4.0, 5.5, nb), sc)


@pytest.mark.parametrize("seed", range(3))
def test_crowded_instance_low_rank_and_dense_paths_agree(seed, monkeypatch):
    import v2vtrade.optim as optim

    prob = _crowded(seed)
    monkeypatch.setattr(optim, "DENSE_LIMIT", 0)
    fast = solve_allocation(prob)
    monkeypatch.setattr(optim, "DENSE_LIMIT", 10**6)
    dense = solve_allocation(prob)
    assert fast.converged and dense.converged
    assert dense.residual < 1e-9 and fast.residual < 1e-6
    assert constraint_residual(prob, fast.x) < 1e-6
    # the low-rank path gives up a little accuracy to cancellation
    assert objective(prob, fast.x) == pytest.approx(objective(prob, dense.x), abs=1e-4)
