"""Cross-module property suite with independent oracles.

Each check returns a :class:`Check`; :func:`run_suite` runs them all and
the ``validate`` subcommand prints one line per check. The oracles here
(block matrix exponential and Gauss-Legendre quadrature for the Gramian,
closed-form scalar solutions) share no code with the solvers they check.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .dynamics import OCProblem, TimeGrid, apply_gramian, flow_map, propagate_adjoint
from .estimator import estimate_error, operator_norm_estimate
from .fom import apply_system_operator, assemble_rhs, solve_fom
from .heat1d import HeatConfig, build_heat_problem, parameter_grid
from .hierarchy import AdaptiveModelHierarchy, HierarchyConfig, summarize
from .mlrom import CoefficientTrainingSet, KernelConfig, train_vkoga
from .rbrom import ReducedBasis, extend_basis, solve_rb

__all__ = [
    "Check",
    "random_stable_system",
    "gramian_van_loan",
    "gramian_gauss",
    "assemble_gramian",
    "check_symmetry",
    "check_psd",
    "run_suite",
    "SCALES",
]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34} {self.detail}"


# ---------------------------------------------------------------------------
# oracles


def random_stable_system(n: int = 6, m: int = 2, seed: int = 0, horizon: float = 1.0, steps: int = 6000) -> OCProblem:
    """Dense random system with spectrum in the open left half plane and M = I."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    S = rng.standard_normal((n, n))
    A = -(G @ G.T / n + 0.5 * np.eye(n)) + 0.5 * (S - S.T)
    B = rng.standard_normal((n, m))
    F = rng.standard_normal((m, m))
    R = F @ F.T + m * np.eye(m)
    return OCProblem(A=A, B=B, M=np.eye(n), R=R, x0=rng.standard_normal(n), xT=rng.standard_normal(n),
                     grid=TimeGrid(horizon, steps))


def _dense(problem: OCProblem):
    return problem.A.toarray(), problem.B.toarray(), problem.R, problem.grid.horizon


def gramian_van_loan(problem: OCProblem) -> np.ndarray:
    """``int_0^T e^{As} B R^{-1} B^T e^{A^T s} ds`` from one block exponential."""
    A, B, R, T = _dense(problem)
    n = A.shape[0]
    Q = B @ np.linalg.solve(R, B.T)
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -A
    block[:n, n:] = Q
    block[n:, n:] = A.T
    E = sla.expm(block * T)
    return E[n:, n:].T @ E[:n, n:]


def gramian_gauss(problem: OCProblem, panels: int = 64, order: int = 10) -> np.ndarray:
    """Composite Gauss-Legendre quadrature of the Gramian integrand."""
    A, B, R, T = _dense(problem)
    Q = B @ np.linalg.solve(R, B.T)
    xs, ws = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, T, panels + 1)
    W = np.zeros_like(A)
    for a, b in zip(edges[:-1], edges[1:]):
        for x, w in zip(xs, ws):
            s = 0.5 * (b - a) * x + 0.5 * (a + b)
            E = sla.expm(A * s)
            W += 0.5 * (b - a) * w * (E @ Q @ E.T)
    return W


def assemble_gramian(problem: OCProblem, gramian: Callable | None = None) -> np.ndarray:
    gramian = gramian or apply_gramian
    return np.asarray(gramian(problem, np.eye(problem.n)))


# ---------------------------------------------------------------------------
# individual checks


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300))


def check_symmetry(problem: OCProblem, gramian: Callable = apply_gramian, trials: int = 5, seed: int = 1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v, w = rng.standard_normal((2, problem.n))
        lhs, rhs = gramian(problem, v) @ w, v @ gramian(problem, w)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return worst <= 1e-10, worst


def check_psd(problem: OCProblem, gramian: Callable = apply_gramian, trials: int = 5, seed: int = 2):
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        v = rng.standard_normal(problem.n)
        worst = min(worst, (gramian(problem, v) @ v) / (v @ v))
    return worst >= -1e-12, worst


def _timed(name: str, fn) -> Check:
    tic = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crashing check is a failed check
        passed, detail = False, f"raised {type(exc).__name__}: {exc}"
    return Check(name, bool(passed), detail, time.perf_counter() - tic)


def _transposition(scale):
    P = random_stable_system(5, 2, seed=3, steps=scale["steps"])
    rng = np.random.default_rng(4)
    v, w = rng.standard_normal((2, P.n))
    lhs = flow_map(P, v) @ w
    rhs = v @ propagate_adjoint(P, w)[0]
    err = abs(lhs - rhs) / abs(lhs)
    return err <= 1e-12, f"relative mismatch {err:.1e}"


def _gramian_symmetry(scale):
    ok, worst = check_symmetry(random_stable_system(6, 2, seed=5, steps=scale["steps"]))
    return ok, f"worst relative asymmetry {worst:.1e}"


def _gramian_psd(scale):
    ok, worst = check_psd(random_stable_system(6, 2, seed=6, steps=scale["steps"]))
    return ok, f"min Rayleigh quotient {worst:.3e}"


def _gramian_linearity(scale):
    P = random_stable_system(6, 2, seed=7, steps=scale["steps"])
    rng = np.random.default_rng(8)
    v, w = rng.standard_normal((2, P.n))
    lhs = apply_gramian(P, 2.5 * v - 0.75 * w)
    rhs = 2.5 * apply_gramian(P, v) - 0.75 * apply_gramian(P, w)
    err = _rel(lhs, rhs)
    return err <= 1e-12, f"relative defect {err:.1e}"


def _gramian_oracle(scale):
    P = random_stable_system(6, 2, seed=9, steps=6000)
    W = assemble_gramian(P)
    exact = gramian_van_loan(P)
    err = _rel(W, exact)
    quad = _rel(gramian_gauss(P), exact)
    return err <= 1e-6 and quad <= 1e-10, f"vs block expm {err:.1e} (quadrature oracle agrees to {quad:.0e})"


def _cn_order(scale):
    def err(K):
        P = OCProblem(A=[[-1.0]], B=[[0.0]], M=[[1.0]], R=[[1.0]], x0=[1.0], xT=[0.0], grid=TimeGrid(1.0, K))
        return abs(flow_map(P, [1.0])[0] - np.exp(-1.0))

    ratios = [err(K) / err(2 * K) for K in (10, 20, 40)]
    return all(3.6 <= r <= 4.4 for r in ratios), "ratios " + ", ".join(f"{r:.3f}" for r in ratios)


def _heat(scale, mu):
    cfg = HeatConfig(inner_points=scale["n"], time_steps=scale["K"])
    return build_heat_problem(cfg, mu)


def _sandwich(scale):
    rng = np.random.default_rng(10)
    worst_low, worst_high = -np.inf, -np.inf
    for _ in range(scale["pairs"]):
        mu = np.array([rng.uniform(1, 2), rng.uniform(0.5, 1.5)])
        P = _heat(scale, mu)
        ref = solve_fom(P, 1e-12).final_adjoint.value
        p = ref + 10.0 ** rng.uniform(-6, 0) * rng.standard_normal(P.n)
        err = np.linalg.norm(ref - p)
        eta = estimate_error(P, p).eta
        bound = operator_norm_estimate(P, iterations=30)
        worst_low = max(worst_low, err - eta)
        worst_high = max(worst_high, eta / (bound * err))
    ok = worst_low <= 1e-9 and worst_high <= 1 + 1e-6
    return ok, f"max(err - eta) {worst_low:.1e}, max eta/(norm*err) {worst_high:.4f}"


def _rb_basis(scale, mus):
    basis = ReducedBasis.empty(scale["n"])
    for mu in mus:
        basis, _ = extend_basis(basis, solve_fom(_heat(scale, mu), 1e-12).final_adjoint.value, mu)
    return basis


def _rb_properties(scale):
    mus = [np.array([1.2, 0.7]), np.array([1.8, 1.3]), np.array([1.5, 1.0])]
    basis = _rb_basis(scale, mus)
    P = _heat(scale, mus[0])
    repro = estimate_error(P, solve_rb(P, basis).final_adjoint).eta

    Q = _heat(scale, np.array([1.35, 0.9]))
    etas = [estimate_error(Q, solve_rb(Q, ReducedBasis(basis.vectors[:, :k])).final_adjoint).eta for k in range(4)]
    monotone = all(b <= a + 1e-10 for a, b in zip(etas, etas[1:]))

    sol = solve_rb(Q, basis)
    best = estimate_error(Q, sol.final_adjoint).eta
    rng = np.random.default_rng(11)
    X = apply_system_operator(Q, basis.vectors)
    rhs = assemble_rhs(Q)
    # random coefficient vectors around the RB solution at scales 1e-8 .. 1
    spread = 10.0 ** rng.uniform(-8, 0, scale["search"])
    cands = sol.coefficients[:, None] * (1 + rng.uniform(-1, 1, (len(basis), scale["search"])) * spread)
    beaten = float(np.max(best - np.linalg.norm(rhs[:, None] - X @ cands, axis=0)))
    ok = repro <= 1e-11 and monotone and beaten <= 1e-8
    return ok, f"reproduction eta {repro:.1e}, etas {['%.1e' % e for e in etas]}, best improvement {beaten:.1e}"


def _kernel(scale):
    data = CoefficientTrainingSet()
    for x, y in ((0.0, 0.0), (1.0, 1.0), (2.0, 4.0)):
        data.add([x], y, 1)
    s = train_vkoga(data, KernelConfig(regularization=0.0))
    first = float(s.centers[0, 0])
    rng = np.random.default_rng(12)
    data = CoefficientTrainingSet()
    X = rng.uniform(0, 1, (40, 2))
    for x in X:
        data.add(x, np.sin(3 * x[0]) * np.cos(2 * x[1]), 1)
    cfg = KernelConfig(shape=5.0, regularization=0.0)
    s1, s2 = train_vkoga(data, cfg), train_vkoga(data, cfg)
    values = dict(zip(map(tuple, data.parameters), data.values))
    interp = max(abs(s1(c) - values[tuple(c)]) for c in s1.centers)
    same = np.array_equal(s1.weights, s2.weights) and np.array_equal(s1.centers, s2.centers)
    return first == 2.0 and interp <= 1e-8 and same, f"first pick {first}, center misfit {interp:.1e}, deterministic {same}"


def _dispatch(scale):
    cfg = HeatConfig(inner_points=scale["n"], time_steps=scale["K"])
    eps = 1e-4
    h = AdaptiveModelHierarchy(lambda mu: build_heat_problem(cfg, mu), HierarchyConfig(eps), bounds=cfg.bounds)
    grid = parameter_grid(cfg, scale["grid"], seed=0)
    results = [h.query(mu) for mu in grid]
    bad = []
    for r in h.records:
        if r.model_used == "ML" and not (r.eta_ml <= eps and r.eta_rb is None):
            bad.append(r.index)
        if r.model_used == "RB" and not (r.eta_ml > eps and r.eta_rb <= eps):
            bad.append(r.index)
        if r.model_used == "FOM" and not (r.eta_ml > eps and r.eta_rb > eps):
            bad.append(r.index)
    stats = summarize(h.records)
    counts_ok = stats.estimates["ML"] == len(grid) and stats.estimates["RB"] == stats.solves["RB"]
    growth_ok = stats.final_basis_size <= stats.served["FOM"]
    worst = 0.0
    for i in np.random.default_rng(13).choice(len(grid), scale["certify"], replace=False):
        ref = solve_fom(build_heat_problem(cfg, grid[i]), 1e-12).final_adjoint.value
        worst = max(worst, float(np.linalg.norm(ref - results[i].final_adjoint)))
    ok = not bad and counts_ok and growth_ok and worst <= eps + 1e-9
    return ok, f"served {stats.served}, worst certified error {worst:.1e}, violations {bad[:5]}"


def _sensitivity(scale):
    P = random_stable_system(6, 2, seed=14, steps=scale["steps"])
    negated = lambda problem, v: -apply_gramian(problem, v)
    sym, _ = check_symmetry(P, negated)
    psd, worst = check_psd(P, negated)
    return sym and not psd, f"negated Gramian: symmetry {'passes' if sym else 'fails'}, PSD {'passes' if psd else 'fails'} ({worst:.2e})"


SCALES = {
    "quick": dict(steps=600, n=20, K=200, pairs=10, search=1000, grid=(6, 6), certify=6),
    "full": dict(steps=6000, n=50, K=600, pairs=50, search=1000, grid=(12, 12), certify=20),
}

CHECKS = [
    ("forward/adjoint transposition", _transposition),
    ("Gramian symmetry", _gramian_symmetry),
    ("Gramian positive semidefinite", _gramian_psd),
    ("Gramian linearity", _gramian_linearity),
    ("Gramian dense oracle (n=6, K=6000)", _gramian_oracle),
    ("Crank-Nicolson order", _cn_order),
    ("estimator sandwich", _sandwich),
    ("RB reproduction/monotone/optimal", _rb_properties),
    ("kernel greedy interpolation", _kernel),
    ("hierarchy dispatch + certification", _dispatch),
    ("suite sensitivity (negated Gramian)", _sensitivity),
]


def run_suite(scale: str = "quick", report: Callable[[Check], None] | None = None) -> list[Check]:
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    params = SCALES[scale]
    checks = []
    for name, fn in CHECKS:
        check = _timed(name, lambda: fn(params))
        checks.append(check)
        if report is not None:
            report(check)
    return checks
