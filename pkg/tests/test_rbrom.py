import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptive_lq import (HeatConfig, ReducedBasis, build_heat_problem, estimate_error, extend_basis, read_basis,
                         solve_fom, solve_rb, write_basis)
from adaptive_lq.fom import apply_system_operator, assemble_rhs
from adaptive_lq.rbrom import SingularBasisError, _solve_normal_equations

from conftest import scalar

HEAT = HeatConfig(inner_points=20, time_steps=150)


def _basis(mus, cfg=HEAT):
    basis = ReducedBasis.empty(cfg.inner_points)
    for mu in mus:
        basis, ok = extend_basis(basis, solve_fom(build_heat_problem(cfg, mu), 1e-12).final_adjoint.value, mu)
        assert ok
    return basis


def test_extend_examples(caplog):
    v = np.array([1.0, 2.0, 0.0])
    b1, ok = extend_basis(ReducedBasis.empty(3), v, [1.0])
    assert ok and len(b1) == 1 and b1.parameters == ((1.0,),)
    b2, ok = extend_basis(b1, 2 * v, [2.0])
    assert not ok and b2 is b1
    assert "rejected" in caplog.text
    e = np.eye(3)
    b, _ = extend_basis(ReducedBasis.empty(3), e[0])
    b, ok = extend_basis(b, e[1])
    assert ok and np.array_equal(b.vectors, e[:, :2])
    _, ok = extend_basis(b, np.zeros(3))
    assert not ok
    with pytest.raises(ValueError):
        extend_basis(b, np.ones(4))


def test_empty_basis_gives_zero_solution():
    P = scalar(K=10)
    sol = solve_rb(P, ReducedBasis.empty(1))
    assert sol.coefficients.shape == (0,)
    assert sol.final_adjoint[0] == 0.0
    np.testing.assert_array_equal(sol.control, 0.0)
    assert estimate_error(P, sol.final_adjoint).eta == pytest.approx(1.0)


def test_scalar_normal_equations_by_hand():
    sol = solve_rb(scalar(K=10), ReducedBasis(np.array([[2.0]])))
    assert sol.coefficients[0] == pytest.approx(0.25, abs=1e-14)
    assert sol.final_adjoint[0] == pytest.approx(0.5, abs=1e-14)


def test_reproduction():
    mus = [np.array([1.1, 0.6]), np.array([1.9, 1.4])]
    basis = _basis(mus)
    for mu in mus:
        P = build_heat_problem(HEAT, mu)
        assert estimate_error(P, solve_rb(P, basis).final_adjoint).eta <= 10 * 1e-12


def test_monotone_under_extension():
    basis = _basis([[1.0, 0.5], [2.0, 1.5], [1.5, 1.0], [1.2, 1.3]])
    P = build_heat_problem(HEAT, [1.4, 0.7])
    etas = [estimate_error(P, solve_rb(P, ReducedBasis(basis.vectors[:, :k])).final_adjoint).eta for k in range(5)]
    assert all(b <= a + 1e-10 for a, b in zip(etas, etas[1:]))


def test_residual_optimal_against_random_search():
    basis = _basis([[1.0, 0.5], [2.0, 1.5], [1.5, 1.0]])
    P = build_heat_problem(HEAT, [1.3, 0.9])
    sol = solve_rb(P, basis)
    eta = estimate_error(P, sol.final_adjoint).eta
    X = apply_system_operator(P, basis.vectors)
    rhs = assemble_rhs(P)
    rng = np.random.default_rng(0)
    cands = sol.coefficients[:, None] + rng.standard_normal((3, 1000)) * np.abs(sol.coefficients)[:, None] \
        * 10.0 ** rng.uniform(-8, 0, 1000)
    assert np.min(np.linalg.norm(rhs[:, None] - X @ cands, axis=0)) >= eta - 1e-8


def test_sweep_accounting():
    basis = _basis([[1.0, 0.5], [2.0, 1.5]])
    P = build_heat_problem(HEAT, [1.3, 0.9])
    assemble_rhs(P)
    before = P.counter.copy()
    solve_rb(P, basis)
    assert P.counter["adjoint_sweeps"] - before["adjoint_sweeps"] == len(basis) + 1
    assert P.counter["forward_sweeps"] - before["forward_sweeps"] == len(basis) + 1


def test_singular_gram_fallback_and_failure():
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    x = _solve_normal_equations(G, np.array([1.0, 1.0]))
    assert np.all(np.isfinite(x))
    with pytest.raises(SingularBasisError):
        _solve_normal_equations(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))


@given(n=st.integers(1, 6), N=st.integers(0, 4), seed=st.integers(0, 1000))
def test_basis_roundtrip(tmp_path_factory, n, N, seed):
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((n, N)) * 10.0 ** rng.uniform(-200, 200, (n, N))
    path = tmp_path_factory.mktemp("b") / "basis.txt"
    write_basis(path, ReducedBasis(vectors))
    assert path.read_text().split("\n")[0] == f"{n} {N}"
    np.testing.assert_array_equal(read_basis(path).vectors, vectors)


def test_read_basis_rejects_truncated(tmp_path):
    (tmp_path / "b.txt").write_text("2 2\n1.0\n2.0\n3.0\n")
    with pytest.raises(ValueError):
        read_basis(tmp_path / "b.txt")
