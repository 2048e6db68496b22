"""Residual-based a posteriori error estimate for approximate final-time adjoints.

For an approximation ``p`` of the optimal final-time adjoint the estimate is
the Euclidean norm of the residual ``rhs - (I + M Lambda) p``. When
``M Lambda`` is positive semidefinite it bounds the true error from above and
overestimates it by at most ``||I + M Lambda||``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import OCProblem, apply_gramian
from .fom import apply_system_operator, assemble_rhs

__all__ = ["ErrorEstimate", "estimate_error", "residual_from_state", "operator_norm_estimate"]


@dataclass(frozen=True)
class ErrorEstimate:
    eta: float
    gramian_applications: int = 1


def estimate_error(problem: OCProblem, p) -> ErrorEstimate:
    rhs = assemble_rhs(problem)
    eta = float(np.linalg.norm(rhs - apply_system_operator(problem, p)))
    return ErrorEstimate(eta, 1)


def residual_from_state(problem: OCProblem, p, final_state) -> float:
    """Same quantity as :func:`estimate_error`, read off a recovered trajectory.

    If ``final_state`` is x(T) of the trajectory driven by the control of
    ``p`` from ``x0``, then ``x(T) = flow(x0) - Lambda p`` and the residual
    collapses to the terminal defect ``M (x(T) - xT) - p``. No extra sweeps.
    """
    return float(np.linalg.norm(problem.M @ (np.asarray(final_state) - problem.xT) - np.asarray(p)))


def operator_norm_estimate(problem: OCProblem, iterations: int = 50, seed: int = 0) -> float:
    """Power-iteration lower estimate of ``||I + M Lambda||_2``.

    For ``M = I`` the operator is symmetric and is iterated directly;
    otherwise the iteration runs on ``S^T S`` using ``S^T = I + Lambda M``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(problem.n)
    v /= np.linalg.norm(v)
    symmetric = problem.m_is_identity or problem.M.nnz == 0
    estimate = 0.0
    for _ in range(iterations):
        w = apply_system_operator(problem, v)
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            break
        if not symmetric:
            w = w + apply_gramian(problem, problem.M @ w)
        v = w / np.linalg.norm(w)
    return estimate
