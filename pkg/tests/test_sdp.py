import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import minimize_scalar

from pbcert.polynomial import VariableSet, parse
from pbcert.sdp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    SdpFormatError,
    SdpProblem,
    SolverOptions,
    dump,
    get_backend,
    load,
    solve,
)
from pbcert.sos import SosProblem


def single_block(C, rows, rhs, sense="min", n_free=0, free_cols=None):
    """One 2x2 (or kxk) block; ``rows`` are symmetric matrices acting via <A, X>."""
    k = C.shape[0]
    iu = np.triu_indices(k)
    weight = np.where(iu[0] == iu[1], 1.0, 2.0)
    A = np.array([M[iu] * weight for M in rows])
    c = C[iu] * weight
    if n_free:
        A = np.hstack([np.asarray(free_cols, dtype=float), A])
        c = np.concatenate([np.zeros(n_free), c])
    return SdpProblem([k], n_free, sp.csr_matrix(A), np.asarray(rhs, float), c, sense)


def test_min_trace_with_unit_corner():
    prob = single_block(np.eye(2), [np.array([[1.0, 0], [0, 0]])], [1.0])
    sol = solve(prob)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(sol.blocks[0], np.diag([1.0, 0.0]), atol=1e-6)


def test_sos_instance_is_feasible():
    prob = SosProblem(VariableSet(("x1",)))
    prob.add_sos(parse("1 + x1^2", prob.vars))
    assert solve(prob.compile().sdp).status == OPTIMAL


@pytest.mark.parametrize("c", [-1.0, -0.1, 0.1, 1.0])
def test_sublevel_relaxation_matches_eigenvalue_check(c):
    # x^2 - c on [1, x] has the unique Gram diag(-c, 1)
    v = VariableSet(("x1",))
    prob = SosProblem(v)
    prob.add_sos(parse(f"x1^2 - ({c})", v))
    feasible = np.linalg.eigvalsh(np.diag([-c, 1.0]))[0] >= 0
    assert (solve(prob.compile().sdp).status == OPTIMAL) == feasible
    if not feasible:
        assert solve(prob.compile().sdp).status == INFEASIBLE


def _sweep_oracle(C, A):
    """min <C, vv^T>/<A, vv^T> over the unit circle: extreme points of {X >= 0, <A, X> = 1}."""
    def ratio(t):
        v = np.array([math.cos(t), math.sin(t)])
        return (v @ C @ v) / (v @ A @ v)

    grid = np.linspace(0.0, math.pi, 20001)
    vals = np.array([ratio(t) for t in grid])
    k = int(np.argmin(vals))
    step = grid[1] - grid[0]
    res = minimize_scalar(ratio, bounds=(grid[k] - step, grid[k] + step), method="bounded",
                          options={"xatol": 1e-12})
    return min(res.fun, vals[k])


def test_two_by_two_matches_brute_force(rng):
    for _ in range(25):
        M = rng.normal(size=(2, 2))
        C = M + M.T
        R = rng.normal(size=(2, 2))
        A = R @ R.T + 0.2 * np.eye(2)
        sol = solve(single_block(C, [A], [1.0]))
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(_sweep_oracle(C, A), abs=1e-6)


def test_infeasible_negative_diagonal():
    prob = single_block(np.zeros((2, 2)), [np.array([[1.0, 0], [0, 0]])], [-1.0])
    sol = solve(prob)
    assert sol.status == INFEASIBLE
    assert sol.certificate is not None and "y" in sol.certificate


def test_unbounded_below():
    # min -X11 subject to X12 = 0
    prob = single_block(np.array([[-1.0, 0], [0, 0]]), [np.array([[0, 0.5], [0.5, 0]])], [0.0])
    sol = solve(prob)
    assert sol.status == UNBOUNDED
    assert sol.certificate is not None and "ray" in sol.certificate


def test_free_variable_and_maximize():
    # max w subject to X11 + w = 1, X22 = 1 (X PSD)  ->  w = 1 with X11 = 0
    rows = [np.array([[1.0, 0], [0, 0]]), np.array([[0, 0], [0, 1.0]])]
    prob = single_block(np.zeros((2, 2)), rows, [1.0, 1.0], sense="max", n_free=1, free_cols=[[1.0], [0.0]])
    prob.c[0] = 1.0
    sol = solve(prob)
    assert sol.status == OPTIMAL
    assert sol.free[0] == pytest.approx(1.0, abs=1e-6)


def test_scalar_blocks_are_nonnegative():
    # min x + y with x - y = 1 and x, y >= 0  ->  1
    A = sp.csr_matrix([[1.0, -1.0]])
    sol = solve(SdpProblem([1, 1], 0, A, [1.0], [1.0, 1.0]))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    assert min(float(b[0, 0]) for b in sol.blocks) >= -1e-8


def test_optimal_solution_invariants(rng):
    v = VariableSet(("x1", "x2"))
    prob = SosProblem(v)
    s = prob.new_scalar("t")
    prob.add_sos(parse("x1^4 + x2^4 + x1^2*x2^2 - 2*x1*x2 + 3", v) - s.expr)
    prob.maximize(s.expr)
    sdp = prob.compile().sdp
    sol = solve(sdp)
    assert sol.status == OPTIMAL
    for B in sol.blocks:
        np.testing.assert_array_equal(B, B.T)
        assert np.linalg.eigvalsh(B)[0] >= -1e-8
    # weak duality for the maximization: primal <= dual up to slack
    assert sol.objective <= sol.dual_objective + 1e-9 * (1 + abs(sol.objective))
    assert sol.residuals["primal"] <= 1e-8 and sol.residuals["dual"] <= 1e-8


def test_dump_load_round_trip(rng):
    M = rng.normal(size=(2, 2))
    prob = single_block(M + M.T, [np.eye(2)], [1.0])
    text = dump(prob)
    again = load(text)
    assert dump(again) == text
    assert solve(again).objective == pytest.approx(solve(prob).objective, abs=1e-9)


@pytest.mark.parametrize("text", ["", "sdp 2\n", "sdp 1\nsense min\noffset 0.0\nfree 0\nblocks 1\nobjective 1\n"])
def test_load_rejects_malformed(text):
    with pytest.raises(SdpFormatError):
        load(text)


def test_problem_validation():
    with pytest.raises(ValueError):
        SdpProblem([2], 0, sp.csr_matrix((1, 2)), [0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        SdpProblem([0], 0, sp.csr_matrix((0, 0)), [], [])


def test_env_overrides_solver_tolerances(monkeypatch):
    monkeypatch.setenv("PBCERT_SDP_FEASTOL", "1e-6")
    monkeypatch.setenv("PBCERT_SDP_MAXITER", "17")
    opts = SolverOptions.from_env()
    assert opts.feastol == 1e-6 and opts.max_iters == 17 and opts.gaptol == 1e-8


def test_iteration_cap_is_reported():
    prob = single_block(np.eye(2), [np.array([[1.0, 0], [0, 0]])], [1.0])
    sol = solve(prob, SolverOptions(max_iters=1))
    assert sol.status == "max-iter"


def test_agrees_with_external_solver(rng):
    pytest.importorskip("cvxpy")
    ext = get_backend("cvxpy")
    for _ in range(5):
        M = rng.normal(size=(2, 2))
        C = M + M.T
        R = rng.normal(size=(2, 2))
        prob = single_block(C, [R @ R.T + 0.2 * np.eye(2)], [1.0])
        assert solve(prob).objective == pytest.approx(ext(prob).objective, abs=1e-6)


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("nope")
