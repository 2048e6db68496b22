"""Full-order solve of the final-time-adjoint system ``(I + M Lambda) phi = rhs``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .dynamics import OCProblem, apply_gramian, evaluate_cost, flow_map, optimality_trajectories

__all__ = [
    "KrylovError",
    "FinalTimeAdjoint",
    "FOMSolution",
    "assemble_rhs",
    "apply_system_operator",
    "solve_fom",
    "default_fom_tolerance",
]

MAX_ITERATIONS = 200


class KrylovError(RuntimeError):
    def __init__(self, message: str, best_residual: float, iterations: int):
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations


@dataclass
class FinalTimeAdjoint:
    value: np.ndarray
    residual_norm: float
    iterations: int = 0


@dataclass
class FOMSolution:
    final_adjoint: FinalTimeAdjoint
    adjoint: np.ndarray
    control: np.ndarray
    state: np.ndarray
    cost: float
    operator_applications: int


def default_fom_tolerance(tolerance: float) -> float:
    return min(1e-10, tolerance / 100)


def assemble_rhs(problem: OCProblem) -> np.ndarray:
    """``M (flow_map(x0) - xT)``, computed once per problem instance."""
    rhs = problem.cache.get("rhs")
    if rhs is None:
        rhs = problem.M @ (flow_map(problem, problem.x0) - problem.xT)
        problem.cache["rhs"] = rhs
    return rhs


def apply_system_operator(problem: OCProblem, p) -> np.ndarray:
    """``p + M Lambda p``; accepts a vector or an (n, k) block."""
    p = np.asarray(p, dtype=float)
    return p + problem.M @ apply_gramian(problem, p)


def _cg(op, b, tol, maxiter):
    x = np.zeros_like(b)
    r = b.copy()
    d = r.copy()
    rs = r @ r
    best = np.sqrt(rs)
    it = 0
    while np.sqrt(rs) > tol:
        if it >= maxiter:
            raise KrylovError(f"CG did not reach {tol:g} in {maxiter} iterations", best, it)
        q = op(d)
        alpha = rs / (d @ q)
        x += alpha * d
        r -= alpha * q
        rs_new = r @ r
        d = r + (rs_new / rs) * d
        rs = rs_new
        best = min(best, np.sqrt(rs))
        it += 1
    return x, it


def _gmres(op, b, tol, maxiter):
    n = b.shape[0]
    count = [0]

    def matvec(v):
        count[0] += 1
        return op(v)

    linop = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    restart = min(maxiter, n)
    x, info = spla.gmres(linop, b, x0=np.zeros_like(b), rtol=0.0, atol=tol,
                         restart=restart, maxiter=max(1, maxiter // restart))
    if info != 0:
        raise KrylovError(f"GMRES did not reach {tol:g} in {maxiter} iterations",
                          float(np.linalg.norm(b - op(x))), count[0])
    return x, count[0]


def solve_fom(problem: OCProblem, tol: float, maxiter: int = MAX_ITERATIONS) -> FOMSolution:
    """Krylov solve of the final-time-adjoint system followed by trajectory recovery.

    CG is used when ``M`` is the identity (the operator is then symmetric
    positive definite), GMRES without restarts otherwise. The stopping
    criterion is the absolute residual ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    rhs = assemble_rhs(problem)
    before = problem.counter["gramian_applications"]
    op = lambda v: apply_system_operator(problem, v)
    if not np.any(rhs):
        value, iterations = np.zeros_like(rhs), 0
    elif problem.m_is_identity:
        value, iterations = _cg(op, rhs, tol, maxiter)
    else:
        value, iterations = _gmres(op, rhs, tol, maxiter)
    applications = problem.counter["gramian_applications"] - before

    adjoint, control, state = optimality_trajectories(problem, value)
    # x(T) = flow(x0) - Lambda phi, so the terminal defect equals the residual
    residual = float(np.linalg.norm(problem.M @ (state[-1] - problem.xT) - value))
    return FOMSolution(
        final_adjoint=FinalTimeAdjoint(value, residual, iterations),
        adjoint=adjoint,
        control=control,
        state=state,
        cost=evaluate_cost(problem, control, state[-1]),
        operator_applications=applications,
    )
