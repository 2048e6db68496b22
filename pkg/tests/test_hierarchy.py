from functools import partial

import numpy as np
import pytest

from adaptive_lq import (AdaptiveModelHierarchy, CoefficientTrainingSet, HeatConfig, HierarchyConfig, HierarchyState,
                         KernelConfig, KrylovError, QueryRecord, ScalarConfig, assemble_rhs, build_heat_problem,
                         build_scalar_problem, parameter_grid, retrain, solve_fom, summarize)
from adaptive_lq import hierarchy as hier
from adaptive_lq.io import load_checkpoint, save_checkpoint

HEAT = HeatConfig(inner_points=12, time_steps=100)


def _heat(config=HierarchyConfig(), cfg=HEAT):
    return AdaptiveModelHierarchy(partial(build_heat_problem, cfg), config, cfg.bounds)


def test_config_validation():
    with pytest.raises(ValueError):
        HierarchyConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        HierarchyConfig(retrain_interval=0)
    with pytest.raises(ValueError):
        HierarchyConfig(tolerance=1e-4, fom_tolerance=1e-4)
    with pytest.raises(ValueError):
        HierarchyConfig(stale_samples="sometimes")
    assert HierarchyConfig(1e-4).fom_tolerance == 1e-10


def test_fresh_state_goes_to_fom():
    h = _heat()
    res = h.query([1.5, 1.0])
    r = res.record
    rhs = np.linalg.norm(assemble_rhs(build_heat_problem(HEAT, [1.5, 1.0])))
    assert r.model_used == "FOM" and r.basis_size_after == 1
    assert r.eta_ml == pytest.approx(rhs) and r.eta_rb == pytest.approx(rhs)
    assert r.fom_residual <= 1e-10
    assert len(h.state.surrogates) == 1 and h.state.surrogates[0].is_zero


def test_zero_rhs_served_by_ml():
    cfg = ScalarConfig(terminal_weight=0.0, time_steps=20)
    h = AdaptiveModelHierarchy(partial(build_scalar_problem, cfg), HierarchyConfig(), cfg.bounds)
    res = h.query([-0.5, 0.5])
    assert res.record.model_used == "ML" and res.record.eta_ml == 0.0 and res.record.eta_rb is None
    assert not np.any(res.control)


def test_requery_after_fom_uses_rb():
    h = _heat()
    h.query([1.2, 0.8])
    res = h.query([1.2, 0.8])
    r = res.record
    assert r.model_used == "RB" and r.eta_ml > 1e-4 and r.eta_rb <= 10 * 1e-10
    assert [len(d) for d in h.state.coefficient_data] == [1]
    assert h.state.pending_samples == 1


def test_retrain_fires_at_interval():
    h = _heat(HierarchyConfig(retrain_interval=2))
    h.query([1.2, 0.8])
    h.query([1.2, 0.8])
    assert h.state.surrogates[0].is_zero and h.state.pending_samples == 1
    h.query([1.2, 0.8])  # same point again: replaces the sample, still counts
    assert h.state.pending_samples == 0 and not h.state.surrogates[0].is_zero


def test_retrain_examples():
    empty = HierarchyState(basis=None, coefficient_data=[CoefficientTrainingSet(), CoefficientTrainingSet()],
                           pending_samples=3)
    out = retrain(empty, HierarchyConfig())
    assert all(s.is_zero for s in out.surrogates) and out.pending_samples == 0
    one = CoefficientTrainingSet()
    one.add([1.5, 1.0], 0.7, 1)
    out = retrain(HierarchyState(basis=None, coefficient_data=[one]), HierarchyConfig(), HEAT.bounds)
    assert out.surrogates[0]([1.5, 1.0]) == pytest.approx(0.7, abs=1e-10)
    again = retrain(HierarchyState(basis=None, coefficient_data=[one]), HierarchyConfig(), HEAT.bounds)
    assert np.array_equal(again.surrogates[0].weights, out.surrogates[0].weights)


@pytest.mark.parametrize("policy", ["refresh", "discard", "keep"])
def test_stale_sample_policies(policy):
    h = _heat(HierarchyConfig(stale_samples=policy, kernel=KernelConfig()))
    for mu in parameter_grid(HEAT, (5, 5), seed=1):
        h.query(mu)
        N = len(h.state.basis)
        sizes = [d.basis_sizes for d in h.state.coefficient_data]
        if policy == "keep":
            # coefficient i only ever holds samples from bases that contain snapshot i
            assert all(s >= i + 1 for i, ss in enumerate(sizes) for s in ss)
        else:
            assert all(s == N for ss in sizes for s in ss)
    assert summarize(h.records).served["FOM"] >= 2
    if policy == "refresh":
        assert any(r.refresh_solves for r in h.records)


def test_record_invariants_and_certification():
    eps = 1e-4
    h = _heat(HierarchyConfig(eps))
    grid = parameter_grid(HEAT, (6, 6), seed=2)
    results = [h.query(mu) for mu in grid]
    fom_calls = 0
    for mu, res in zip(grid, results):
        r = res.record
        if r.model_used == "ML":
            assert r.eta_ml <= eps and r.eta_rb is None
        elif r.model_used == "RB":
            assert r.eta_ml > eps and r.eta_rb <= eps
        else:
            assert r.eta_ml > eps and r.eta_rb > eps
            fom_calls += 1
        ref = solve_fom(build_heat_problem(HEAT, mu), 1e-12).final_adjoint.value
        assert np.linalg.norm(ref - res.final_adjoint) <= eps + 1e-9
    assert len(h.state.basis) <= fom_calls
    assert [r.index for r in h.records] == list(range(len(grid)))
    assert h.state.pending_samples < h.config.retrain_interval


def test_fom_failure_keeps_partial_record(monkeypatch):
    def boom(problem, tol):
        raise KrylovError("no", 1.0, 200)

    monkeypatch.setattr(hier, "solve_fom", boom)
    h = _heat()
    with pytest.raises(KrylovError):
        h.query([1.5, 1.0])
    assert len(h.records) == 1 and h.records[0].model_used == "FOM" and h.records[0].eta_rb is not None
    assert len(h.state.basis) == 0


def test_dependent_snapshot_skips_retraining(monkeypatch):
    h = _heat()
    h.query([1.5, 1.0])
    surrogates = h.state.surrogates
    monkeypatch.setattr(hier, "extend_basis", lambda basis, snapshot, mu: (basis, False))
    h.config = HierarchyConfig(tolerance=1e-12, fom_tolerance=1e-13)
    res = h.query([1.1, 0.6])
    assert res.record.model_used == "FOM" and len(h.state.basis) == 1
    assert h.state.surrogates is surrogates


def test_summarize_counts():
    assert summarize([]).served == {"ML": 0, "RB": 0, "FOM": 0}
    assert summarize([]).final_basis_size == 0
    recs = [
        QueryRecord(0, (1.0,), "FOM", 1.0, 1.0, 1, 10, 0.1, 0.2, 3.0),
        QueryRecord(1, (1.0,), "RB", 1e-3, 1e-6, 1, 3, 0.1, 0.2),
        QueryRecord(2, (1.0,), "ML", 1e-6, None, 1, 1, 0.1),
    ]
    s = summarize(recs)
    assert s.served == {"ML": 1, "RB": 1, "FOM": 1}
    assert s.solves == {"ML": 3, "RB": 2, "FOM": 1}
    assert s.estimates == {"ML": 3, "RB": 2, "FOM": 0}
    assert s.total_time["RB"] == pytest.approx(0.4) and s.mean_time_per_solve["RB"] == pytest.approx(0.2)
    assert s.final_basis_size == 1 and s.series["model_used"] == ["FOM", "RB", "ML"]


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    grid = parameter_grid(HEAT, (4, 4), seed=5)
    full = _heat()
    for mu in grid:
        full.query(mu)
    part = _heat()
    for mu in grid[:7]:
        part.query(mu)
    save_checkpoint(tmp_path / "ckpt", part.state)
    resumed = AdaptiveModelHierarchy(partial(build_heat_problem, HEAT), HierarchyConfig(), HEAT.bounds,
                                     load_checkpoint(tmp_path / "ckpt"))
    for mu in grid[7:]:
        resumed.query(mu)
    key = lambda r: (r.model_used, r.eta_ml, r.eta_rb, r.basis_size_after, r.gramian_applications)
    assert [key(r) for r in resumed.records] == [key(r) for r in full.records]
    np.testing.assert_array_equal(resumed.state.basis.vectors, full.state.basis.vectors)
