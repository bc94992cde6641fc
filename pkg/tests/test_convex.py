import numpy as np
import pytest

from ris_airfl.convex import (EMBEDDING, INFEASIBLE, MIN_BETA, MIN_Q0, OPTIMAL, BlockSdpProblem,
                              QcqpProblem, Quadratic, SdpInequality, solve_block_sdp, solve_qcqp)
from ris_airfl.errors import InvalidInputError

from conftest import cn


def _herm(rng, n):
    A = cn(rng, (n, n))
    return 0.5 * (A + A.conj().T)


# block SDP ----------------------------------------------------------------------

def test_sdp_trace_bound_example():
    n = 3
    prob = BlockSdpProblem([-np.eye(n)], [SdpInequality({0: np.eye(n)}, 1.0)])
    X, rep = solve_block_sdp(prob)
    assert rep.status == OPTIMAL
    assert abs(rep.objective + 1) < 1e-6
    assert abs(np.trace(X[0]).real - 1) < 1e-6
    assert EMBEDDING in rep.solver


def test_sdp_pin_feasibility_example():
    n = 3
    prob = BlockSdpProblem([np.zeros((n, n))], [SdpInequality({0: np.eye(n)}, 1.0)], pins=[(0, 0, 1.0)])
    X, rep = solve_block_sdp(prob)
    assert rep.status == OPTIMAL
    E = np.zeros((n, n))
    E[0, 0] = 1
    assert np.abs(X[0] - E).max() < 1e-4
    assert abs(rep.objective) < 1e-9


def test_sdp_detects_infeasibility():
    prob = BlockSdpProblem([np.eye(2)], [SdpInequality({0: np.eye(2)}, 0.5)], pins=[(0, 0, 1.0)])
    _, rep = solve_block_sdp(prob)
    assert rep.status == INFEASIBLE


def test_sdp_rejects_non_hermitian():
    with pytest.raises(InvalidInputError):
        BlockSdpProblem([np.array([[0, 1], [0, 0]])])
    with pytest.raises(InvalidInputError):
        solve_block_sdp(BlockSdpProblem([np.eye(2)]), feas_tol=0)


def _random_sdp(seed, n=3, K=3, n_coupled=5):
    rng = np.random.default_rng(seed)
    costs = [_herm(rng, n) for _ in range(K)]
    ineqs = [SdpInequality({k: np.eye(n)}, 2.0 * n) for k in range(K)]
    for _ in range(n_coupled):
        coeffs = {k: _herm(rng, n) for k in range(K)}
        slack = sum(np.trace(Mk).real for Mk in coeffs.values())   # value at X_k = I
        ineqs.append(SdpInequality(coeffs, slack + rng.uniform(0.5, 2.0)))
    return BlockSdpProblem(costs, ineqs)


def _feasible(prob, X, tol=0.0):
    ineq, _, eig = prob.violations(X)
    return np.all(ineq <= tol) and np.all(eig <= 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_sdp_random_sandwich_and_rank_one_oracle(seed):
    prob = _random_sdp(seed)
    X, rep = solve_block_sdp(prob)
    assert rep.status == OPTIMAL
    scale = max(1.0, abs(rep.objective))
    # weak duality: dual <= primal <= dual + opt_tol
    assert rep.dual_objective <= rep.objective + 1e-6 * scale
    assert rep.objective <= rep.dual_objective + 1e-6 * scale
    for Xk in X:
        assert np.linalg.eigvalsh(Xk).min() >= -1e-7
    # the relaxation lower-bounds every feasible rank-one candidate on a random grid
    rng = np.random.default_rng(100 + seed)
    best = np.inf
    for _ in range(2000):
        cand = []
        for k in range(prob.K):
            x = cn(rng, prob.n)
            cand.append(rng.uniform(0, 2 * prob.n) * np.outer(x, x.conj()) / np.vdot(x, x).real)
        if _feasible(prob, cand):
            best = min(best, prob.objective(cand))
    assert np.isfinite(best)
    assert rep.objective <= best + 1e-6 * scale


@pytest.mark.parametrize("seed", range(3))
def test_sdp_never_worse_than_explicit_feasible_points(seed):
    prob = _random_sdp(seed)
    X, rep = solve_block_sdp(prob)
    rng = np.random.default_rng(seed)
    count = 0
    while count < 100:
        cand = []
        for _ in range(prob.K):
            W = cn(rng, (prob.n, prob.n))
            cand.append(W @ W.conj().T / prob.n)
        if _feasible(prob, cand):
            count += 1
            assert rep.objective <= prob.objective(cand) + 1e-6


# QCQP ---------------------------------------------------------------------------

def _ball(c, r, xi=1.0):
    c = np.asarray(c, float)
    return Quadratic(np.zeros(c.size), xi, c, -r)


def test_qcqp_single_ball_min_beta():
    c = np.array([1.0, -2.0, 0.5])
    x, beta, rep = solve_qcqp(QcqpProblem(3, constraints=[_ball(c, 0.7)], mode=MIN_BETA))
    assert rep.status == OPTIMAL
    assert np.allclose(x, c, atol=1e-6) and abs(beta + 0.7) < 1e-7


def test_qcqp_unconstrained_stationary_point():
    q0 = Quadratic([1.0, -2.0], 4.0, [0.5, 0.5], 3.0)
    x, beta, rep = solve_qcqp(QcqpProblem(2, q0))
    assert beta is None and np.allclose(x, [0.25, 1.0])


@pytest.mark.parametrize("seed", range(5))
def test_qcqp_two_balls_segment_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 8
    c1, c2 = rng.standard_normal(n), rng.standard_normal(n)
    q1 = _ball(c1, rng.uniform(0, 1), rng.uniform(0.5, 2))
    q2 = _ball(c2, rng.uniform(0, 1), rng.uniform(0.5, 2))
    prob = QcqpProblem(n, constraints=[q1, q2], mode=MIN_BETA)
    x, beta, rep = solve_qcqp(prob)
    assert rep.status == OPTIMAL
    ts = np.linspace(0, 1, 200001)
    seg = c1[None, :] + ts[:, None] * (c2 - c1)[None, :]
    grid = np.maximum([q1(p) for p in seg[::1]], [q2(p) for p in seg])
    assert abs(beta - grid.min()) <= 1e-4
    assert abs(beta - max(q1(x), q2(x))) <= 1e-7


def _random_min_q0(seed, n=5, m=4):
    rng = np.random.default_rng(seed)
    q0 = Quadratic(rng.standard_normal(n), rng.uniform(0.1, 2), rng.standard_normal(n), 0.0)
    cons = [Quadratic(rng.standard_normal(n), rng.uniform(0.5, 2), np.zeros(n), -rng.uniform(0.5, 2))
            for _ in range(m)]
    return QcqpProblem(n, q0, cons, MIN_Q0)


@pytest.mark.parametrize("seed", range(5))
def test_qcqp_never_worse_than_feasible_points(seed):
    prob = _random_min_q0(seed)
    x, _, rep = solve_qcqp(prob)
    assert rep.status == OPTIMAL
    assert prob.max_violation(x) <= 1e-7 * 10
    rng = np.random.default_rng(seed)
    count = 0
    while count < 100:
        p = rng.standard_normal(prob.n) * rng.uniform(0, 1)
        if prob.max_violation(p) == 0:
            count += 1
            assert prob.objective(x) <= prob.objective(p) + 1e-6


@pytest.mark.parametrize("mode", [MIN_Q0, MIN_BETA])
def test_qcqp_warm_start_terminates_quickly(mode):
    prob = _random_min_q0(7)
    if mode == MIN_BETA:
        prob = QcqpProblem(prob.n, constraints=prob.constraints, mode=MIN_BETA)
    x, beta, rep = solve_qcqp(prob)
    ws = (x, rep.extra["multipliers"]) + ((beta,) if beta is not None else ())
    x2, _, rep2 = solve_qcqp(prob, warm_start=ws)
    assert rep2.status == OPTIMAL and rep2.iterations <= 2
    assert np.allclose(x2, x)


def test_qcqp_min_q0_infeasible():
    n = 2
    cons = [_ball([0, 0], 0.1), _ball([5, 0], 0.1)]
    prob = QcqpProblem(n, Quadratic(np.zeros(n), 1.0, np.zeros(n)), cons, MIN_Q0)
    _, _, rep = solve_qcqp(prob)
    assert rep.status == INFEASIBLE and rep.constraint_index in (0, 1)


def test_quadratic_validation():
    with pytest.raises(InvalidInputError):
        Quadratic([1.0], -1.0, [0.0])
    with pytest.raises(InvalidInputError):
        QcqpProblem(2, mode=MIN_BETA)
