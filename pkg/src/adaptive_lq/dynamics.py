"""Crank-Nicolson propagation of the controlled state and adjoint equations.

Everything here works on plain numpy arrays:

* a state (or adjoint) trajectory has shape ``(K + 1, n)``,
* a control trajectory has shape ``(K + 1, m)``,

with row ``k`` holding the sample at ``t_k = k T / K``.

The weighted controllability Gramian is never assembled. Applying it to a
terminal adjoint ``p`` amounts to one backward adjoint sweep, recovering the
control ``u = -R^{-1} B^T phi`` and one forward sweep from zero; the result is
``-x(T)``. Controls enter the forward step through the average of two nodal
samples, which makes the discrete Gramian an exactly symmetric positive
semidefinite matrix.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

__all__ = [
    "IntegrationError",
    "TimeGrid",
    "OCProblem",
    "propagate_forward",
    "propagate_adjoint",
    "control_from_adjoint",
    "apply_gramian",
    "flow_map",
    "evaluate_cost",
    "optimality_trajectories",
]


class IntegrationError(RuntimeError):
    """The implicit Crank-Nicolson step matrix could not be factorized."""


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


class _CNStepper:
    """Solves ``(I - h Op) y = rhs`` and applies ``I + h Op``.

    A tridiagonal ``Op`` goes through LAPACK ``gttrf``/``gttrs``; anything
    else through a sparse LU. Both factorizations happen once.
    """

    def __init__(self, op: sp.csr_matrix, h: float):
        self.n = op.shape[0]
        self.h = h
        coo = op.tocoo()
        # scipy's gttrf wrapper mis-sizes its second superdiagonal for n = 2
        self.tridiagonal = self.n != 2 and bool(np.all(np.abs(coo.row - coo.col) <= 1))
        if self.tridiagonal:
            diag = op.diagonal(0)
            lower = op.diagonal(-1) if self.n > 1 else np.zeros(0)
            upper = op.diagonal(1) if self.n > 1 else np.zeros(0)
            self._diags = (h * lower, h * diag, h * upper)
            if self.n == 1:
                pivot = 1.0 - h * diag[0]
                if pivot == 0.0:
                    raise IntegrationError("implicit step matrix is singular")
                self._lu = None
                self._pivot = pivot
                return
            dl, d, du, du2, ipiv, info = lapack.dgttrf(-h * lower, 1.0 - h * diag, -h * upper)
            if info != 0:
                raise IntegrationError(f"implicit step matrix is singular (gttrf info={info})")
            self._lu = (dl, d, du, du2, ipiv)
        else:
            eye = sp.identity(self.n, format="csc")
            self._explicit = (eye + h * op).tocsr()
            try:
                self._splu = spla.splu((eye - h * op).tocsc())
            except RuntimeError as exc:
                raise IntegrationError(f"implicit step matrix is singular: {exc}") from exc

    def explicit(self, y: np.ndarray) -> np.ndarray:
        if self.tridiagonal:
            lower, diag, upper = self._diags
            out = y + diag[:, None] * y
            if self.n > 1:
                out[1:] += lower[:, None] * y[:-1]
                out[:-1] += upper[:, None] * y[1:]
            return out
        return self._explicit @ y

    def implicit_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.tridiagonal:
            if self._lu is None:
                return rhs / self._pivot
            x, info = lapack.dgttrs(*self._lu, rhs)
            if info != 0:
                raise IntegrationError(f"gttrs failed with info={info}")
            return x
        return self._splu.solve(rhs)


def _as_csr(mat, shape=None) -> sp.csr_matrix:
    out = sp.csr_matrix(np.atleast_2d(mat) if not sp.issparse(mat) else mat, dtype=float)
    if shape is not None and out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class OCProblem:
    """One instance of the linear-quadratic optimal control problem.

    ``A`` (n x n), ``B`` (n x m) and ``M`` (n x n) are stored as CSR matrices,
    ``R`` (m x m) as a dense array. ``counter`` tallies sweeps for cost
    accounting and ``cache`` holds per-instance results such as the
    right-hand side of the final-time-adjoint system.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    R: np.ndarray
    x0: np.ndarray
    xT: np.ndarray
    grid: TimeGrid
    parameter: np.ndarray | None = None
    counter: Counter = field(default_factory=Counter, repr=False)
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        A = _as_csr(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _as_csr(self.B)
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        M = _as_csr(self.M, (n, n))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape != (m, m):
            raise ValueError(f"R must be {m}x{m}, got {R.shape}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        xT = np.asarray(self.xT, dtype=float).reshape(-1)
        if x0.shape != (n,) or xT.shape != (n,):
            raise ValueError("x0 and xT must have length n")

        asym = abs(M - M.T)
        if asym.nnz and asym.max() > 1e-12 * max(abs(M).max(), 1.0):
            raise ValueError("M must be symmetric")
        if n <= 64 and M.nnz and np.linalg.eigvalsh(M.toarray()).min() < -1e-12 * abs(M).max():
            raise ValueError("M must be positive semidefinite")
        if not np.allclose(R, R.T, rtol=0, atol=1e-12 * np.abs(R).max()):
            raise ValueError("R must be symmetric")
        try:
            r_factor = sla.cho_factor(R)
        except np.linalg.LinAlgError as exc:
            raise ValueError("R must be positive definite") from exc

        for name, value in (("A", A), ("B", B), ("M", M), ("R", R), ("x0", x0), ("xT", xT)):
            object.__setattr__(self, name, value)
        if self.parameter is not None:
            object.__setattr__(self, "parameter", np.asarray(self.parameter, dtype=float).reshape(-1))
        object.__setattr__(self, "_r_factor", r_factor)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @cached_property
    def _forward(self) -> _CNStepper:
        return _CNStepper(self.A, 0.5 * self.grid.dt)

    @cached_property
    def _backward(self) -> _CNStepper:
        return _CNStepper(self.A.T.tocsr(), 0.5 * self.grid.dt)

    @cached_property
    def _dense_B(self) -> np.ndarray:
        return self.B.toarray()

    @cached_property
    def _r_inverse(self) -> np.ndarray:
        return sla.cho_solve(self._r_factor, np.eye(self.m))

    @cached_property
    def _gain(self) -> np.ndarray:
        """Dense ``R^{-1} B^T`` (m x n)."""
        return sla.cho_solve(self._r_factor, self.B.T.toarray())

    @cached_property
    def m_is_identity(self) -> bool:
        diff = self.M - sp.identity(self.n, format="csr")
        return diff.nnz == 0 or abs(diff).max() == 0.0


# ---------------------------------------------------------------------------
# sweeps on column blocks: every vector argument is an (n, k) array


def _adjoint_sweep(problem: OCProblem, terminal: np.ndarray, keep: bool):
    """Backward CN sweep. Returns (adjoint trajectory or None, B^T phi samples)."""
    K = problem.grid.steps
    stepper = problem._backward
    Bt = problem.B.T.tocsr()
    phi = np.asfortranarray(terminal, dtype=float)
    k_cols = phi.shape[1]
    bt_phi = np.empty((K + 1, problem.m, k_cols))
    traj = np.empty((K + 1, problem.n, k_cols)) if keep else None
    bt_phi[K] = Bt @ phi
    if keep:
        traj[K] = phi
    for k in range(K - 1, -1, -1):
        phi = stepper.implicit_solve(stepper.explicit(phi))
        bt_phi[k] = Bt @ phi
        if keep:
            traj[k] = phi
    problem.counter["adjoint_sweeps"] += k_cols
    return traj, bt_phi


def _forward_sweep(problem: OCProblem, x_init: np.ndarray, controls: np.ndarray | None, keep: bool):
    """Forward CN sweep; ``controls`` has shape (K + 1, m, k) or is None."""
    K = problem.grid.steps
    h = 0.5 * problem.grid.dt
    stepper = problem._forward
    x = np.asfortranarray(x_init, dtype=float)
    k_cols = x.shape[1]
    traj = np.empty((K + 1, problem.n, k_cols)) if keep else None
    if keep:
        traj[0] = x
    if controls is not None and not problem.B.nnz:
        controls = None
    if controls is not None:
        summed = h * (controls[:-1] + controls[1:])  # (K, m, k)
        B = problem._dense_B
    for k in range(K):
        rhs = stepper.explicit(x)
        if controls is not None:
            rhs += B @ summed[k]
        x = stepper.implicit_solve(np.asfortranarray(rhs))
        if keep:
            traj[k + 1] = x
    problem.counter["forward_sweeps"] += k_cols
    return traj if keep else x


def _gain_controls(problem: OCProblem, bt_phi: np.ndarray) -> np.ndarray:
    """u_k = -R^{-1} B^T phi_k for stacked samples of shape (K + 1, m, k)."""
    return -np.einsum("ij,kjc->kic", problem._r_inverse, bt_phi)


def _columns(v: np.ndarray, n: int) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        if v.shape[0] != n:
            raise ValueError(f"expected a vector of length {n}, got {v.shape}")
        return v[:, None], True
    if v.shape[0] != n:
        raise ValueError(f"expected {n} rows, got {v.shape}")
    return v, False


# ---------------------------------------------------------------------------
# public operations


def propagate_forward(problem: OCProblem, x_init, control) -> np.ndarray:
    """Crank-Nicolson solution of ``x' = A x + B u`` from ``x_init``.

    Parameters
    ----------
    problem : OCProblem
    x_init : array, shape (n,)
    control : array, shape (K + 1, m), or None for zero control

    Returns
    -------
    array, shape (K + 1, n)
    """
    x_init, _ = _columns(x_init, problem.n)
    controls = None
    if control is not None:
        control = np.asarray(control, dtype=float)
        if control.shape != (problem.grid.steps + 1, problem.m):
            raise ValueError(f"control must have shape {(problem.grid.steps + 1, problem.m)}, got {control.shape}")
        controls = control[:, :, None]
    return _forward_sweep(problem, x_init, controls, keep=True)[:, :, 0]


def propagate_adjoint(problem: OCProblem, terminal) -> np.ndarray:
    """Backward CN solution of ``-phi' = A^T phi`` with ``phi(T) = terminal``; shape (K + 1, n)."""
    terminal, _ = _columns(terminal, problem.n)
    traj, _ = _adjoint_sweep(problem, terminal, keep=True)
    return traj[:, :, 0]


def control_from_adjoint(problem: OCProblem, adjoint) -> np.ndarray:
    adjoint = np.asarray(adjoint, dtype=float)
    if adjoint.shape != (problem.grid.steps + 1, problem.n):
        raise ValueError(f"adjoint must have shape {(problem.grid.steps + 1, problem.n)}, got {adjoint.shape}")
    return -(adjoint @ problem._gain.T)


def apply_gramian(problem: OCProblem, p) -> np.ndarray:
    """Matrix-free product with the weighted controllability Gramian.

    ``p`` may be a single vector (n,) or a block of columns (n, k); blocks
    share one sweep pair.
    """
    cols, single = _columns(p, problem.n)
    if not problem.B.nnz:
        out = np.zeros_like(cols)
    else:
        _, bt_phi = _adjoint_sweep(problem, cols, keep=False)
        controls = _gain_controls(problem, bt_phi)
        out = -_forward_sweep(problem, np.zeros_like(cols), controls, keep=False)
    problem.counter["gramian_applications"] += cols.shape[1]
    return out[:, 0] if single else np.asarray(out)


def flow_map(problem: OCProblem, x_init) -> np.ndarray:
    """Final state of the uncontrolled dynamics, by the same CN scheme."""
    cols, single = _columns(x_init, problem.n)
    out = _forward_sweep(problem, cols, None, keep=False)
    return out[:, 0] if single else np.asarray(out)


def evaluate_cost(problem: OCProblem, control, final_state) -> float:
    """Quadratic cost with trapezoidal quadrature of the control energy."""
    control = np.asarray(control, dtype=float)
    if control.shape != (problem.grid.steps + 1, problem.m):
        raise ValueError(f"control must have shape {(problem.grid.steps + 1, problem.m)}, got {control.shape}")
    dev = np.asarray(final_state, dtype=float) - problem.xT
    terminal = float(dev @ (problem.M @ dev))
    energy = np.einsum("ki,ij,kj->k", control, problem.R, control)
    quad = problem.grid.dt * (energy.sum() - 0.5 * (energy[0] + energy[-1]))
    return float(0.5 * (terminal + quad))


def optimality_trajectories(problem: OCProblem, final_adjoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adjoint, control and state trajectories determined by a final-time adjoint.

    One backward and one forward sweep; the state starts at ``problem.x0``.
    """
    adjoint = propagate_adjoint(problem, final_adjoint)
    control = control_from_adjoint(problem, adjoint)
    state = propagate_forward(problem, problem.x0, control)
    problem.counter["recoveries"] += 1
    return adjoint, control, state
