"""Machine-learning ROM: one greedy kernel interpolant per reduced-basis coefficient.

Each coefficient ``alpha_i(mu)`` gets its own scalar surrogate trained by the
f-greedy variant of the vectorial kernel orthogonal greedy algorithm (VKOGA):
centers are picked one at a time where the current interpolant's residual is
largest, and the interpolant is updated through an orthogonalized (Newton)
kernel basis so that each step costs one kernel column.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dynamics import OCProblem
from .rbrom import RBSolution, ReducedBasis, recover_solution

__all__ = [
    "KernelConfig",
    "CoefficientTrainingSet",
    "CoefficientSurrogate",
    "gaussian_kernel",
    "train_vkoga",
    "predict",
    "solve_ml",
]

log = logging.getLogger(__name__)

# squared power function below this (relative to k(x, x)) marks a degenerate
# center; with a ridge the power stays above the ridge in exact arithmetic, so
# there the floor drops to a tenth of the ridge
POWER_FLOOR = 1e-11
REFINEMENT_STEPS = 2


@dataclass(frozen=True)
class KernelConfig:
    shape: float = 1.0
    max_centers: int = 2000
    greedy_tolerance: float = 1e-10
    # tiny ridge keeps flat-kernel interpolants stable on near-degenerate centers
    regularization: float = 1e-12

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError("shape must be positive")
        if self.max_centers < 1:
            raise ValueError("max_centers must be >= 1")
        if self.greedy_tolerance < 0 or self.regularization < 0:
            raise ValueError("greedy_tolerance and regularization must be non-negative")


@dataclass
class CoefficientTrainingSet:
    """Samples ``(mu, alpha_i(mu))`` for one coefficient index.

    A repeated parameter replaces the earlier sample. ``basis_sizes`` records
    the basis size each sample was computed with.
    """

    samples: dict = field(default_factory=dict)

    def add(self, mu, value: float, basis_size: int) -> None:
        key = tuple(float(v) for v in np.ravel(mu))
        self.samples.pop(key, None)
        self.samples[key] = (float(value), int(basis_size))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def parameters(self) -> np.ndarray:
        return np.array(list(self.samples.keys()), dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.samples.values()], dtype=float)

    @property
    def basis_sizes(self) -> list[int]:
        return [s for _, s in self.samples.values()]


def gaussian_kernel(x, y, shape: float) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.exp(-shape * np.sum((x - y) ** 2)))


def _kernel_matrix(X: np.ndarray, Y: np.ndarray, shape: float) -> np.ndarray:
    sq = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
    return np.exp(-shape * sq)


@dataclass
class CoefficientSurrogate:
    """Greedy kernel interpolant of one coefficient, kept in Newton form.

    ``newton`` is the lower-triangular matrix of Newton basis values at the
    centers (a Cholesky factor of the center kernel matrix) and ``weights``
    are the Newton coefficients, one per center. Predictions evaluate the
    Newton basis by forward substitution, which avoids the huge, cancelling
    coefficients of the plain kernel expansion.
    """

    centers: np.ndarray  # (c, p), unscaled parameters
    weights: np.ndarray  # (c,)
    newton: np.ndarray  # (c, c)
    shape: float = 1.0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    trained_on: int = 0
    skipped: list = field(default_factory=list)

    @classmethod
    def zero(cls, shape: float = 1.0) -> "CoefficientSurrogate":
        return cls(np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0)), shape)

    @property
    def is_zero(self) -> bool:
        return self.weights.size == 0

    def _scale(self, mu: np.ndarray) -> np.ndarray:
        if self.lower is None:
            return mu
        return (mu - self.lower) / (self.upper - self.lower)

    def evaluate(self, mus) -> np.ndarray:
        """Predictions at the rows of ``mus`` (shape (q, p))."""
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        if self.is_zero:
            return np.zeros(mus.shape[0])
        cols = _kernel_matrix(self._scale(self.centers), self._scale(mus), self.shape)
        basis = sla.solve_triangular(self.newton, cols, lower=True)
        return self.weights @ basis

    def __call__(self, mu) -> float:
        return float(self.evaluate(mu)[0])

    def kernel_weights(self) -> np.ndarray:
        """Coefficients of the equivalent expansion ``sum_j beta_j k(., c_j)``."""
        if self.is_zero:
            return np.zeros(0)
        return sla.solve_triangular(self.newton.T, self.weights, lower=False)

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "newton": self.newton.tolist(),
            "shape": self.shape,
            "lower": None if self.lower is None else self.lower.tolist(),
            "upper": None if self.upper is None else self.upper.tolist(),
            "trained_on": self.trained_on,
            "skipped": list(self.skipped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientSurrogate":
        weights = np.asarray(d["weights"], dtype=float)
        c = weights.size
        return cls(
            np.asarray(d["centers"], dtype=float).reshape(c, -1) if c else np.zeros((0, 0)),
            weights,
            np.asarray(d["newton"], dtype=float).reshape(c, c),
            float(d["shape"]),
            None if d.get("lower") is None else np.asarray(d["lower"], dtype=float),
            None if d.get("upper") is None else np.asarray(d["upper"], dtype=float),
            int(d.get("trained_on", 0)),
            list(d.get("skipped", [])),
        )


def train_vkoga(data: CoefficientTrainingSet, config: KernelConfig = KernelConfig(), bounds=None) -> CoefficientSurrogate:
    """f-greedy kernel interpolation of one coefficient.

    Parameters
    ----------
    data : CoefficientTrainingSet
    config : KernelConfig
    bounds : (lower, upper) arrays, optional
        Parameter box; inputs are rescaled to the unit cube before the kernel
        is evaluated.

    Returns
    -------
    CoefficientSurrogate
        Interpolates the training values at its centers (for zero
        regularization). Points whose power function has collapsed are
        skipped and listed in ``skipped``.
    """
    if len(data) == 0:
        return CoefficientSurrogate.zero(config.shape)
    params = data.parameters
    y = data.values
    lower = upper = None
    X = params
    if bounds is not None:
        lower = np.asarray(bounds[0], dtype=float)
        upper = np.asarray(bounds[1], dtype=float)
        X = (params - lower) / (upper - lower)

    m = len(y)
    reg = config.regularization
    floor = min(POWER_FLOOR, 0.1 * reg) if reg > 0 else POWER_FLOOR
    cap = min(config.max_centers, m)
    residual = y.copy()
    power = np.full(m, 1.0 + reg)
    newton = np.zeros((m, cap))
    coeffs = []
    selected = []
    skipped = []
    available = np.ones(m, dtype=bool)

    while len(selected) < cap and available.any():
        scores = np.where(available, np.abs(residual), -1.0)
        i = int(np.argmax(scores))
        if scores[i] <= config.greedy_tolerance:
            break
        available[i] = False
        if power[i] <= floor:
            skipped.append(i)
            log.info("skipping degenerate center %s (power %.2e)", params[i], power[i])
            continue
        k = len(selected)
        col = _kernel_matrix(X, X[i : i + 1], config.shape)[:, 0]
        col[i] += reg
        root = np.sqrt(power[i])
        v = (col - newton[:, :k] @ newton[i, :k]) / root
        c = residual[i] / root
        residual -= c * v
        power -= v**2
        newton[:, k] = v
        coeffs.append(c)
        selected.append(i)

    if not selected:
        surrogate = CoefficientSurrogate.zero(config.shape)
        surrogate.trained_on, surrogate.skipped = m, skipped
        return surrogate
    newton = newton[selected, : len(selected)].copy()
    system = _kernel_matrix(X[selected], X[selected], config.shape) + reg * np.eye(len(selected))
    return CoefficientSurrogate(
        centers=params[selected].copy(),
        weights=_refine(newton, np.asarray(coeffs), system, y[selected]),
        newton=newton,
        shape=config.shape,
        lower=lower,
        upper=upper,
        trained_on=m,
        skipped=skipped,
    )


def _refine(newton, weights, system, targets, steps: int = REFINEMENT_STEPS):
    """Iterative refinement of the Newton coefficients against the center system.

    The greedy recursion loses accuracy once the power function gets small,
    so the center values drift from the data; ``newton`` is an approximate
    Cholesky factor of ``system`` and serves as the preconditioner.
    """
    for _ in range(steps):
        beta = sla.solve_triangular(newton.T, weights, lower=False)
        weights = weights + sla.solve_triangular(newton, targets - system @ beta, lower=True)
    return weights


def predict(surrogates, mu) -> np.ndarray:
    return np.array([s(mu) for s in surrogates], dtype=float)


def solve_ml(problem: OCProblem, basis: ReducedBasis, surrogates, mu) -> RBSolution:
    if len(surrogates) != len(basis):
        raise ValueError(f"{len(surrogates)} surrogates for a basis of size {len(basis)}")
    return recover_solution(problem, basis, predict(surrogates, mu))
