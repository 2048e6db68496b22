"""1D heat equation with Dirichlet boundary control on both ends.

``v_t = mu_1 v_yy`` on (0, 1), ``v(t, 0) = u_1(t)``, ``v(t, 1) = u_2(t)``,
``v(0, y) = sin(pi y)``, target ``v_T(y) = mu_2 y``. Central differences on
``n`` inner points; the boundary values enter through the eliminated
neighbours of the first and last inner node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dynamics import OCProblem, TimeGrid

__all__ = ["HeatConfig", "build_heat_problem", "parameter_grid", "ScalarConfig", "build_scalar_problem"]


def _check_box(mu: np.ndarray, lower, upper) -> None:
    if mu.shape != (len(lower),):
        raise ValueError(f"parameter must have {len(lower)} components, got {mu.shape}")
    if np.any(mu < np.asarray(lower) - 1e-12) or np.any(mu > np.asarray(upper) + 1e-12):
        raise ValueError(f"parameter {mu.tolist()} outside the box {list(lower)} x {list(upper)}")


@dataclass(frozen=True)
class HeatConfig:
    inner_points: int = 200
    time_steps: int = 6000
    horizon: float = 0.1
    mu1_range: tuple[float, float] = (1.0, 2.0)
    mu2_range: tuple[float, float] = (0.5, 1.5)
    control_weight: float = 1e-2
    terminal_weight: str = "identity"

    def __post_init__(self):
        if self.inner_points < 1 or self.time_steps < 1 or not self.horizon > 0:
            raise ValueError("inner_points, time_steps and horizon must be positive")
        if not self.control_weight > 0:
            raise ValueError("control_weight must be positive")
        if self.terminal_weight != "identity":
            raise ValueError(f"unsupported terminal_weight {self.terminal_weight!r}")

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([self.mu1_range[0], self.mu2_range[0]]),
                np.array([self.mu1_range[1], self.mu2_range[1]]))


def build_heat_problem(config: HeatConfig, mu) -> OCProblem:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    _check_box(mu, *config.bounds)
    n = config.inner_points
    h = 1.0 / (n + 1)
    y = h * np.arange(1, n + 1)
    c = mu[0] / h**2
    A = sp.diags([np.full(n - 1, c), np.full(n, -2 * c), np.full(n - 1, c)], [-1, 0, 1], format="csr")
    B = sp.csr_matrix(([c, c], ([0, n - 1], [0, 1])), shape=(n, 2))
    return OCProblem(
        A=A,
        B=B,
        M=sp.identity(n, format="csr"),
        R=config.control_weight * np.eye(2),
        x0=np.sin(np.pi * y),
        xT=mu[1] * y,
        grid=TimeGrid(config.horizon, config.time_steps),
        parameter=mu,
    )


def parameter_grid(config, counts=(100, 100), seed: int = 0) -> list[np.ndarray]:
    """Shuffled tensor grid over the parameter box (endpoints included)."""
    lower, upper = config.bounds
    if len(counts) != len(lower) or min(counts) < 1:
        raise ValueError(f"counts must be {len(lower)} positive integers")
    axes = [np.linspace(lo, hi, c) if c > 1 else np.array([lo]) for lo, hi, c in zip(lower, upper, counts)]
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lower))
    order = np.random.default_rng(seed).permutation(len(points))
    return [points[i] for i in order]


@dataclass(frozen=True)
class ScalarConfig:
    """Scalar test family ``x' = a x + b u`` with parameter ``mu = (a, target)``."""

    b: float = 1.0
    control_weight: float = 1.0
    terminal_weight: float = 1.0
    x0: float = 1.0
    horizon: float = 1.0
    time_steps: int = 6000
    a_range: tuple[float, float] = (-1.0, 0.0)
    target_range: tuple[float, float] = (0.0, 1.0)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([self.a_range[0], self.target_range[0]]),
                np.array([self.a_range[1], self.target_range[1]]))


def build_scalar_problem(config: ScalarConfig, mu) -> OCProblem:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    _check_box(mu, *config.bounds)
    return OCProblem(
        A=[[mu[0]]],
        B=[[config.b]],
        M=[[config.terminal_weight]],
        R=[[config.control_weight]],
        x0=[config.x0],
        xT=[mu[1]],
        grid=TimeGrid(config.horizon, config.time_steps),
        parameter=mu,
    )
