"""Reduced-basis ROM: least-squares final-time adjoint over the span of snapshots."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .dynamics import OCProblem, optimality_trajectories
from .fom import apply_system_operator, assemble_rhs

__all__ = [
    "ReducedBasis",
    "RBSolution",
    "SingularBasisError",
    "extend_basis",
    "solve_rb",
    "recover_solution",
    "write_basis",
    "read_basis",
]

log = logging.getLogger(__name__)

DEPENDENCE_TOL = 1e-10


class SingularBasisError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReducedBasis:
    """Raw (not orthonormalized) snapshots stored as the columns of an (n, N) array."""

    vectors: np.ndarray
    parameters: tuple = ()

    @classmethod
    def empty(cls, n: int) -> "ReducedBasis":
        return cls(np.zeros((n, 0)), ())

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return self.vectors.shape[1]

    def expand(self, coefficients) -> np.ndarray:
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (len(self),):
            raise ValueError(f"expected {len(self)} coefficients, got {coefficients.shape}")
        return self.vectors @ coefficients


@dataclass
class RBSolution:
    coefficients: np.ndarray
    final_adjoint: np.ndarray
    control: np.ndarray
    state: np.ndarray
    adjoint: np.ndarray | None = field(default=None, repr=False)


def extend_basis(basis: ReducedBasis, snapshot, source_parameter=None) -> tuple[ReducedBasis, bool]:
    """Append ``snapshot`` unless it is (numerically) in the span of ``basis``.

    Returns the new basis and whether the snapshot was accepted.
    """
    snapshot = np.asarray(snapshot, dtype=float).reshape(-1)
    if snapshot.shape != (basis.n,):
        raise ValueError(f"snapshot must have length {basis.n}")
    norm = np.linalg.norm(snapshot)
    if norm == 0.0:
        log.warning("zero snapshot rejected")
        return basis, False
    if len(basis):
        coef = np.linalg.lstsq(basis.vectors, snapshot, rcond=None)[0]
        defect = np.linalg.norm(snapshot - basis.vectors @ coef)
        if defect <= DEPENDENCE_TOL * norm:
            log.warning("snapshot rejected: relative projection defect %.3e", defect / norm)
            return basis, False
    param = None if source_parameter is None else tuple(float(v) for v in np.ravel(source_parameter))
    vectors = np.column_stack([basis.vectors, snapshot])
    return ReducedBasis(vectors, basis.parameters + (param,)), True


def _solve_normal_equations(gram: np.ndarray, projected: np.ndarray) -> np.ndarray:
    # Jacobi scaling before Cholesky; snapshots of similar parameters are nearly parallel
    scale = 1.0 / np.sqrt(np.diag(gram))
    scaled = gram * np.outer(scale, scale)
    try:
        return scale * sla.cho_solve(sla.cho_factor(scaled), scale * projected)
    except (np.linalg.LinAlgError, ValueError):
        pass
    N = gram.shape[0]
    shift = 1e-12 * np.trace(scaled) / N
    try:
        return scale * sla.cho_solve(sla.cho_factor(scaled + shift * np.eye(N)), scale * projected)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularBasisError(f"Gram matrix of the {N}-dimensional basis is singular") from exc


def recover_solution(problem: OCProblem, basis: ReducedBasis, coefficients) -> RBSolution:
    final_adjoint = basis.expand(coefficients) if len(basis) else np.zeros(problem.n)
    adjoint, control, state = optimality_trajectories(problem, final_adjoint)
    return RBSolution(np.asarray(coefficients, dtype=float), final_adjoint, control, state, adjoint)


def solve_rb(problem: OCProblem, basis: ReducedBasis) -> RBSolution:
    """Normal-equation solve ``X^T X alpha = X^T rhs`` with ``X = (I + M Lambda) Phi``.

    The N operator applications share one batched sweep pair.
    """
    if basis.n != problem.n:
        raise ValueError("basis and problem dimensions differ")
    if not len(basis):
        return recover_solution(problem, basis, np.zeros(0))
    rhs = assemble_rhs(problem)
    images = apply_system_operator(problem, basis.vectors)
    gram = images.T @ images
    coefficients = _solve_normal_equations(gram, images.T @ rhs)
    return recover_solution(problem, basis, coefficients)


def write_basis(path, basis: ReducedBasis) -> None:
    """Text file: header ``n N`` then the n*N values in column-major order."""
    values = basis.vectors.reshape(-1, order="F")
    lines = [f"{basis.n} {len(basis)}"] + [repr(float(v)) for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_basis(path, parameters=()) -> ReducedBasis:
    tokens = Path(path).read_text().split()
    n, N = int(tokens[0]), int(tokens[1])
    values = np.array([float(t) for t in tokens[2:]])
    if values.size != n * N:
        raise ValueError(f"{path}: expected {n * N} values, found {values.size}")
    return ReducedBasis(np.ascontiguousarray(values.reshape((n, N), order="F")), tuple(parameters))
