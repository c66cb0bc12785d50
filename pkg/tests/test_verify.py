import dataclasses
import json

import numpy as np
import pytest

from minnorm import synth, verify


@pytest.fixture(scope="module")
def small_run():
    return verify.run_all(verify.VerifyPlan(seed=5, prop1=40, prop2=40, prop3=40, prop4=30, qp=18,
                                            tiebreak=10, mc_draws=0))


def test_small_run_passes(small_run):
    assert [r.name for r in small_run if not r.passed] == []
    assert all(r.instances > 0 for r in small_run)


def test_report_is_json(small_run):
    rep = verify.report(small_run)
    back = json.loads(json.dumps(rep, default=float))
    assert back["passed"] is True and len(back["suites"]) == 8
    assert "PASS" in verify.format_report(small_run)


def test_empty_suite_does_not_pass():
    assert not verify.SuiteResult("x").passed


def test_rank_deficient_designs_are_errors():
    r = verify.prop1_suite(5, seed=0, rank_deficient=True)
    assert r.instances == 0 and len(r.errors) == 5 and not r.passed


def test_grid_oracle_on_known_optimum():
    A = np.eye(2)
    w, obj = verify._grid_oracle(A, np.array([0.3, 0.7]))
    np.testing.assert_allclose(w, [0.3, 0.7], atol=1e-12)
    assert obj == pytest.approx(0, abs=1e-20)
    w, obj = verify._grid_oracle(np.eye(3), np.array([2.0, 0.0, 0.0]))
    np.testing.assert_allclose(w, [1, 0, 0], atol=1e-12)
    assert obj == pytest.approx(1.0)


def test_qp_suite_catches_bad_solver(monkeypatch):
    real = synth.simplex_lsq

    def off_by_a_bit(A, y, settings=synth.SolverSettings()):
        sw = real(A, y, settings)
        return dataclasses.replace(sw, objective=sw.objective + 1e-3)

    monkeypatch.setattr(synth, "simplex_lsq", off_by_a_bit)
    assert verify.qp_suite(6, seed=0).violations == 6


def test_jensen_suite_flags_bad_weights():
    col = verify._Collected()
    F = np.array([[-1.0, 1.0]])
    col.jensen.append(("manual", np.zeros(1), F, np.zeros(1), np.array([0.5, 0.5])))
    assert verify.jensen_suite(col).passed
    col.jensen.append(("manual", np.zeros(1), F, np.zeros(1), np.array([0.9, 0.9])))
    assert len(verify.jensen_suite(col).errors) == 1


def test_prop5_suite_counts_premises():
    rng = np.random.default_rng(0)
    col = verify._Collected()
    for _ in range(30):
        k = int(rng.integers(1, 5))
        F = rng.normal(size=(6, k))
        lam = rng.dirichlet(np.ones(k))
        col.jensen.append(("manual", rng.normal(size=6), F, F @ lam, lam))
    r = verify.prop5_suite(col)
    assert r.violations == 0 and not r.errors
    assert r.extra["min_jensen_chain_slack"] >= -verify.PROP5_SLACK
