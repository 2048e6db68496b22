import numpy as np
import pytest

from adaptive_lq import (KrylovError, OCProblem, TimeGrid, apply_system_operator, assemble_rhs, evaluate_cost,
                         flow_map, solve_fom)
from adaptive_lq.fom import default_fom_tolerance
from adaptive_lq.validate import random_stable_system

from conftest import scalar


def test_rhs_examples():
    assert assemble_rhs(scalar(x0=1.0, xT=0.0))[0] == 1.0
    assert assemble_rhs(scalar(m=0.0))[0] == 0.0
    P = scalar(a=-1.0, K=20)
    Q = scalar(a=-1.0, K=20, xT=flow_map(P, [1.0])[0])
    assert assemble_rhs(Q)[0] == 0.0


def test_rhs_is_cached():
    P = scalar()
    assemble_rhs(P)
    sweeps = P.counter["forward_sweeps"]
    assemble_rhs(P)
    assert P.counter["forward_sweeps"] == sweeps


def test_system_operator_examples():
    P = scalar(K=10)
    assert apply_system_operator(P, [0.0])[0] == 0.0
    assert apply_system_operator(scalar(m=0.0), [3.0])[0] == 3.0
    assert apply_system_operator(P, [2.0])[0] == pytest.approx(4.0, abs=1e-13)


def test_fom_scalar_closed_form():
    P = scalar(K=10)
    sol = solve_fom(P, 1e-12)
    assert abs(sol.final_adjoint.value[0] - 0.5) <= 1e-10
    np.testing.assert_allclose(sol.control, -0.5, atol=1e-10)
    assert abs(sol.state[-1, 0] - 0.5) <= 1e-10
    assert abs(sol.cost - 0.25) <= 1e-10


def test_fom_decaying_scalar():
    lam = (1 - np.exp(-2.0)) / 2
    expected = np.exp(-1.0) / (1 + lam)
    assert expected == pytest.approx(0.2568394402449214, abs=1e-15)
    sol = solve_fom(scalar(a=-1.0, K=6000), 1e-12)
    assert abs(sol.final_adjoint.value[0] - expected) <= 1e-6


def test_fom_zero_rhs():
    P = scalar(a=-1.0, K=50, x0=1.0)
    xT = flow_map(P, [1.0])
    Q = scalar(a=-1.0, K=50, x0=1.0, xT=xT[0])
    sol = solve_fom(Q, 1e-10)
    assert sol.final_adjoint.value[0] == 0.0
    np.testing.assert_array_equal(sol.control, 0.0)
    free = flow_map(Q, [1.0])
    np.testing.assert_allclose(sol.state[-1], free)
    assert sol.cost == pytest.approx(0.5 * (free[0] - xT[0]) ** 2, abs=1e-30)


@pytest.mark.parametrize("weight", ["identity", "general"])
def test_fom_solution_invariants(weight):
    P = random_stable_system(6, 2, seed=3, steps=200)
    if weight == "general":
        L = np.random.default_rng(4).standard_normal((6, 3))
        P = OCProblem(A=P.A, B=P.B, M=L @ L.T, R=P.R, x0=P.x0, xT=P.xT, grid=P.grid)
    tol = 1e-11
    sol = solve_fom(P, tol)
    recomputed = np.linalg.norm(assemble_rhs(P) - apply_system_operator(P, sol.final_adjoint.value))
    assert abs(recomputed - sol.final_adjoint.residual_norm) <= 1e-10
    assert sol.final_adjoint.residual_norm <= 10 * tol
    np.testing.assert_array_equal(sol.state[0], P.x0)
    np.testing.assert_array_equal(sol.adjoint[-1], sol.final_adjoint.value)
    terminal = P.M @ (sol.state[-1] - P.xT)
    assert np.linalg.norm(sol.adjoint[-1] - terminal) <= 10 * tol


def test_operator_application_count():
    P = random_stable_system(6, 2, seed=5, steps=100)
    sol = solve_fom(P, 1e-10)
    assert sol.operator_applications == sol.final_adjoint.iterations
    # one extra application for the rhs sweep is a flow map, not a Gramian
    assert P.counter["adjoint_sweeps"] == sol.final_adjoint.iterations + 1


def test_cost_is_locally_optimal():
    P = scalar(a=-1.0, K=400)
    sol = solve_fom(P, 1e-12)
    from adaptive_lq import propagate_forward

    for delta in (1e-2, -1e-2):
        u = sol.control + delta
        x = propagate_forward(P, P.x0, u)
        assert evaluate_cost(P, u, x[-1]) > sol.cost


def test_krylov_failure_carries_residual():
    P = random_stable_system(6, 2, seed=6, steps=50)
    with pytest.raises(KrylovError) as info:
        solve_fom(P, 1e-14, maxiter=1)
    assert info.value.best_residual > 0 and info.value.iterations == 1
    L = np.random.default_rng(4).standard_normal((6, 6))
    Q = OCProblem(A=P.A, B=P.B, M=L @ L.T, R=P.R, x0=P.x0, xT=P.xT, grid=P.grid)
    with pytest.raises(KrylovError):
        solve_fom(Q, 1e-14, maxiter=1)


def test_bad_tolerance():
    with pytest.raises(ValueError):
        solve_fom(scalar(), 0.0)
    assert default_fom_tolerance(1e-4) == 1e-10
    assert default_fom_tolerance(1e-9) == pytest.approx(1e-11)
