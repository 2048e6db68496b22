"""Adaptive, certified ML-ROM -> RB-ROM -> FOM dispatcher.

Every query first evaluates the kernel surrogate and its residual estimate.
If the estimate exceeds the tolerance the RB-ROM is solved and certified; if
that fails too the full-order model is solved. FOM snapshots extend the
reduced basis, certified RB coefficients become training data for the
per-coefficient surrogates.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dynamics import OCProblem
from .estimator import residual_from_state
from .fom import KrylovError, default_fom_tolerance, solve_fom
from .mlrom import CoefficientSurrogate, CoefficientTrainingSet, KernelConfig, solve_ml, train_vkoga
from .rbrom import ReducedBasis, extend_basis, solve_rb

__all__ = [
    "MODELS",
    "HierarchyConfig",
    "HierarchyState",
    "QueryRecord",
    "QueryResult",
    "AdaptiveModelHierarchy",
    "retrain",
    "summarize",
    "SummaryStats",
]

log = logging.getLogger(__name__)

MODELS = ("ML", "RB", "FOM")


@dataclass(frozen=True)
class HierarchyConfig:
    tolerance: float = 1e-4
    retrain_interval: int = 5
    fom_tolerance: float | None = None
    kernel: KernelConfig = KernelConfig()
    # also train on the unit coefficient vector of each new FOM snapshot
    harvest_fom_coefficients: bool = False
    # what happens to ML training data computed with a smaller basis once the
    # basis grows: "refresh" re-solves the RB-ROM at the most recent
    # `max_refresh` parameters, "discard" drops them, "keep" leaves them
    stale_samples: str = "refresh"
    max_refresh: int = 100

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.retrain_interval < 1:
            raise ValueError("retrain_interval must be >= 1")
        if self.stale_samples not in ("refresh", "discard", "keep"):
            raise ValueError(f"unknown stale_samples policy {self.stale_samples!r}")
        if self.fom_tolerance is None:
            object.__setattr__(self, "fom_tolerance", default_fom_tolerance(self.tolerance))
        if not 0 < self.fom_tolerance <= self.tolerance / 10:
            raise ValueError("fom_tolerance must lie in (0, tolerance / 10]")


@dataclass
class QueryRecord:
    index: int
    parameter: tuple
    model_used: str
    eta_ml: float
    eta_rb: float | None = None
    basis_size_after: int = 0
    gramian_applications: int = 0
    t_ml: float = 0.0
    t_rb: float = 0.0
    t_fom: float = 0.0
    t_train: float = 0.0
    fom_residual: float | None = None
    refresh_solves: int = 0


@dataclass
class HierarchyState:
    basis: ReducedBasis
    surrogates: list = field(default_factory=list)
    coefficient_data: list = field(default_factory=list)
    pending_samples: int = 0
    records: list = field(default_factory=list)

    @classmethod
    def fresh(cls, n: int) -> "HierarchyState":
        return cls(ReducedBasis.empty(n))

    def check(self) -> None:
        N = len(self.basis)
        if len(self.surrogates) != N or len(self.coefficient_data) != N:
            raise AssertionError(
                f"basis size {N}, {len(self.surrogates)} surrogates, {len(self.coefficient_data)} data sets"
            )


@dataclass
class QueryResult:
    control: np.ndarray
    final_adjoint: np.ndarray
    record: QueryRecord
    state: np.ndarray | None = None


def retrain(state: HierarchyState, config: HierarchyConfig, bounds=None) -> HierarchyState:
    """Fresh surrogate per coefficient from its current data; resets the sample counter."""
    surrogates = [train_vkoga(data, config.kernel, bounds) for data in state.coefficient_data]
    for i, s in enumerate(surrogates):
        if s.skipped:
            log.info("coefficient %d: %d degenerate samples skipped", i, len(s.skipped))
    return replace(state, surrogates=surrogates, pending_samples=0)


class AdaptiveModelHierarchy:
    """Certified model hierarchy for a parametrized problem family.

    Parameters
    ----------
    problem_builder : callable
        Maps a parameter vector to an :class:`OCProblem`.
    config : HierarchyConfig
    bounds : (lower, upper), optional
        Parameter box used to rescale surrogate inputs.
    state : HierarchyState, optional
        Resume from a previous state; defaults to an empty basis.
    """

    def __init__(self, problem_builder: Callable[[np.ndarray], OCProblem], config: HierarchyConfig,
                 bounds=None, state: HierarchyState | None = None):
        self.problem_builder = problem_builder
        self.config = config
        self.bounds = bounds
        self.state = state

    @property
    def records(self) -> list[QueryRecord]:
        return [] if self.state is None else self.state.records

    def query(self, mu) -> QueryResult:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        problem = self.problem_builder(mu)
        if self.state is None:
            self.state = HierarchyState.fresh(problem.n)
        state = self.state
        eps = self.config.tolerance
        record = QueryRecord(index=len(state.records), parameter=tuple(mu.tolist()), model_used="ML", eta_ml=np.nan)

        tic = time.perf_counter()
        ml = solve_ml(problem, state.basis, state.surrogates, mu)
        record.eta_ml = residual_from_state(problem, ml.final_adjoint, ml.state[-1])
        record.t_ml = time.perf_counter() - tic
        if record.eta_ml <= eps:
            return self._finish(problem, record, ml.control, ml.final_adjoint, ml.state)

        tic = time.perf_counter()
        rb = solve_rb(problem, state.basis)
        record.eta_rb = residual_from_state(problem, rb.final_adjoint, rb.state[-1])
        record.t_rb = time.perf_counter() - tic
        if record.eta_rb <= eps:
            record.model_used = "RB"
            tic = time.perf_counter()
            N = len(state.basis)
            for i in range(N):
                state.coefficient_data[i].add(mu, rb.coefficients[i], N)
            state.pending_samples += 1
            if state.pending_samples >= self.config.retrain_interval:
                self.state = state = retrain(state, self.config, self.bounds)
            record.t_train = time.perf_counter() - tic
            return self._finish(problem, record, rb.control, rb.final_adjoint, rb.state)

        record.model_used = "FOM"
        tic = time.perf_counter()
        try:
            fom = solve_fom(problem, self.config.fom_tolerance)
        except KrylovError:
            record.t_fom = time.perf_counter() - tic
            self._finish(problem, record, None, None, None)
            raise
        record.t_fom = time.perf_counter() - tic
        record.fom_residual = fom.final_adjoint.residual_norm

        tic = time.perf_counter()
        refresh_sweeps = 0
        basis, accepted = extend_basis(state.basis, fom.final_adjoint.value, mu)
        if accepted:
            stale = state.coefficient_data
            state.basis = basis
            state.coefficient_data = stale + [CoefficientTrainingSet()]
            if self.config.stale_samples != "keep":
                state.coefficient_data = [CoefficientTrainingSet() for _ in state.coefficient_data]
            if self.config.stale_samples == "refresh" and stale:
                recent = list(stale[0].samples)[-self.config.max_refresh:]
                record.refresh_solves, refresh_sweeps = len(recent), self._refresh(recent)
            if self.config.harvest_fom_coefficients:
                N = len(basis)
                for i, data in enumerate(state.coefficient_data):
                    data.add(mu, 1.0 if i == N - 1 else 0.0, N)
            self.state = state = retrain(state, self.config, self.bounds)
        record.t_train = time.perf_counter() - tic
        return self._finish(problem, record, fom.control, fom.final_adjoint.value, fom.state, refresh_sweeps)

    def _refresh(self, parameters) -> int:
        """Recompute RB coefficients at ``parameters`` with the current basis; returns the sweeps spent."""
        state = self.state
        N = len(state.basis)
        sweeps = 0
        for key in parameters:
            mu = np.asarray(key)
            problem = self.problem_builder(mu)
            coefficients = solve_rb(problem, state.basis).coefficients
            sweeps += problem.counter["adjoint_sweeps"]
            for i in range(N):
                state.coefficient_data[i].add(mu, coefficients[i], N)
        return sweeps

    def _finish(self, problem, record, control, final_adjoint, trajectory, extra_sweeps: int = 0) -> QueryResult:
        record.basis_size_after = len(self.state.basis)
        record.gramian_applications = int(problem.counter["adjoint_sweeps"]) + extra_sweeps
        self.state.records.append(record)
        self.state.check()
        return QueryResult(control, final_adjoint, record, trajectory)


@dataclass
class SummaryStats:
    """Per-model counts and timings of a run.

    ``served`` counts queries answered by the model, ``solves`` counts
    evaluations (including ones that failed certification), ``estimates``
    counts residual evaluations.
    """

    queries: int
    served: dict
    solves: dict
    estimates: dict
    total_time: dict
    mean_time_per_served: dict
    mean_time_per_solve: dict
    final_basis_size: int
    training_time: float
    series: dict = field(repr=False, default_factory=dict)

    def to_dict(self, with_series: bool = False) -> dict:
        out = {k: getattr(self, k) for k in (
            "queries", "served", "solves", "estimates", "total_time",
            "mean_time_per_served", "mean_time_per_solve", "final_basis_size", "training_time")}
        if with_series:
            out["series"] = self.series
        return out


def summarize(records: list[QueryRecord]) -> SummaryStats:
    served = {m: sum(r.model_used == m for r in records) for m in MODELS}
    rb_solves = sum(r.eta_rb is not None for r in records)
    solves = {"ML": len(records), "RB": rb_solves, "FOM": served["FOM"]}
    estimates = {"ML": len(records), "RB": rb_solves, "FOM": 0}
    total = {
        "ML": float(sum(r.t_ml for r in records)),
        "RB": float(sum(r.t_rb for r in records)),
        "FOM": float(sum(r.t_fom for r in records)),
    }
    per_served = {m: (total[m] / served[m] if served[m] else 0.0) for m in MODELS}
    per_solve = {m: (total[m] / solves[m] if solves[m] else 0.0) for m in MODELS}
    series = {
        "model_used": [r.model_used for r in records],
        "eta_ml": [r.eta_ml for r in records],
        "eta_rb": [r.eta_rb for r in records],
        "basis_size": [r.basis_size_after for r in records],
        "t_ml": [r.t_ml for r in records],
        "t_rb": [r.t_rb for r in records],
        "t_fom": [r.t_fom for r in records],
    }
    return SummaryStats(
        queries=len(records),
        served=served,
        solves=solves,
        estimates=estimates,
        total_time=total,
        mean_time_per_served=per_served,
        mean_time_per_solve=per_solve,
        final_basis_size=records[-1].basis_size_after if records else 0,
        training_time=float(sum(r.t_train for r in records)),
        series=series,
    )
