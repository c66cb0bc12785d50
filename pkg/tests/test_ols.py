import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minnorm import ols
from minnorm.errors import InputError, RankDeficientError


def data(X, Y):
    return ols.RegressionDataset(np.asarray(X, float), np.asarray(Y, float))


def test_two_column_single_row():
    d = data([[1, 1]], [4])
    fit = ols.fit_subset(d, [0, 1])
    np.testing.assert_allclose(fit.beta, [2, 2], atol=1e-14)
    assert fit.in_sample_rmse == pytest.approx(0, abs=1e-12)
    assert fit.norm == pytest.approx(np.sqrt(8))
    np.testing.assert_allclose(ols.fit_subset(d, [1]).beta, [0, 4], atol=1e-14)


def test_overdetermined_matches_normal_equations(rng):
    X = rng.normal(size=(10, 4))
    Y = rng.normal(size=10)
    J = [0, 2]
    textbook = np.linalg.solve(X[:, J].T @ X[:, J], X[:, J].T @ Y)
    fit = ols.fit_subset(data(X, Y), J)
    np.testing.assert_allclose(fit.beta[J], textbook, atol=1e-10)
    assert fit.beta[1] == 0 and fit.beta[3] == 0
    resid = Y - X[:, J] @ textbook
    assert fit.in_sample_rmse == pytest.approx(np.sqrt(resid @ resid / 10), rel=1e-12)


def test_subset_validation():
    d = data([[1, 1]], [4])
    for bad in ([], [0, 0], [2], [-1]):
        with pytest.raises(InputError):
            ols.fit_subset(d, bad)
    with pytest.raises(InputError):
        data([[1, 1]], [4, 5])
    with pytest.raises(RankDeficientError):
        ols.fit_subset(data([[1, 2], [2, 4]], [1, 1]), [0, 1])


def test_averaging_weights_examples():
    d = data([[1, 1]], [4])
    lam = ols.averaging_weights(d, [0, 1])
    np.testing.assert_allclose(lam.weights, [0.5, 0.5])
    loo = ols.loo_fits(d, [0, 1])
    np.testing.assert_allclose(loo[0].beta, [0, 4])
    np.testing.assert_allclose(loo[1].beta, [4, 0])
    assert lam.as_dict() == pytest.approx({0: 0.5, 1: 0.5}, abs=1e-14)


def test_unit_leverage_column_gets_zero_weight():
    d = data([[1, 0, 0]], [3])
    lam = ols.averaging_weights(d, [0, 1, 2])
    np.testing.assert_allclose(lam.weights, [0, 0.5, 0.5], atol=1e-15)
    resid, *_ = ols.averaging_residual(d, [0, 1, 2])
    assert resid <= 1e-12


def test_weights_need_interpolating_regime(rng):
    d = data(rng.normal(size=(3, 3)), rng.normal(size=3))
    with pytest.raises(InputError):
        ols.averaging_weights(d, [0, 1, 2])
    with pytest.raises(InputError):
        ols.loo_fits(d, [0, 1, 2])


def test_identity_sweep_3x8(rng):
    worst = 0.0
    for _ in range(500):
        d = data(rng.normal(size=(3, 8)), rng.normal(size=3))
        resid, lam, full, _ = ols.averaging_residual(d, range(8))
        worst = max(worst, resid / (1 + full.norm))
        assert lam.weights.min() >= 0 and abs(lam.weights.sum() - 1) <= 1e-10
    assert worst <= 1e-8


@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_fast_path_matches_refits(n, extra, seed):
    rng = np.random.default_rng(seed)
    d = data(rng.normal(size=(n, n + extra)), rng.normal(size=n))
    J = list(range(n + extra))
    slow = ols.loo_fits(d, J)
    fast = ols.loo_fits(d, J, fast=True)
    for j in J:
        assert np.linalg.norm(slow[j].beta - fast[j].beta) <= 1e-8 * (1 + slow[j].norm)
        assert fast[j].beta[j] == 0


def test_fast_path_with_unit_leverage():
    d = data([[1, 0, 0], [0, 1, 1]], [1, 2])
    slow = ols.loo_fits(d, [0, 1, 2])
    fast = ols.loo_fits(d, [0, 1, 2], fast=True)
    for j in range(3):
        np.testing.assert_allclose(slow[j].beta, fast[j].beta, atol=1e-12)


def test_variation_distance_examples():
    a = ols.SubsetFit(np.array([1.0, 0.0]), (0, 1), 0.0, 1.0)
    b = ols.SubsetFit(np.array([0.0, 1.0]), (0, 1), 0.0, 1.0)
    assert ols.variation_distance(a, a) == 0
    assert ols.variation_distance(a, b) == pytest.approx(np.sqrt(2))
    assert ols.variation_distance(a, b, "design_weighted", np.array([[1.0, 2.0]])) == pytest.approx(1.0)
    with pytest.raises(InputError):
        ols.variation_distance(a, b, "design_weighted")
    with pytest.raises(InputError):
        ols.variation_distance(a, ols.SubsetFit(np.zeros(3), (0,), 0.0, 0.0))
    with pytest.raises(InputError):
        ols.variation_distance(a, b, "manhattan")


def test_trace_variance_examples():
    assert ols.trace_variance_interpolating([[1.0, 1.0]], [0, 1], 1.0) == pytest.approx(0.5)
    X = [[2.0, 0, 0], [0, 2.0, 0]]
    assert ols.trace_variance_interpolating(X, [0, 1, 2], 1.0) == pytest.approx(0.5)
    assert ols.trace_variance_interpolating(X, [0, 1, 2], 3.0) == pytest.approx(1.5)
    with pytest.raises(InputError):
        ols.trace_variance_interpolating(X, [0, 1], 1.0)
    with pytest.raises(InputError):
        ols.trace_variance_interpolating(X, [0, 1, 2], 0.0)


def test_trace_variance_monte_carlo(rng):
    X = rng.normal(size=(2, 5))
    beta = rng.normal(size=5)
    exact = ols.trace_variance_interpolating(X, range(5), 2.0)
    mc = ols.monte_carlo_trace_variance(X, range(5), beta, 2.0, draws=100_000, seed=3)
    assert abs(mc - exact) / exact < 0.02


@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_trace_variance_drops_with_more_columns(n, extra, seed):
    X = np.random.default_rng(seed).normal(size=(n, n + extra))
    J = list(range(n + extra))
    full = ols.trace_variance_interpolating(X, J, 1.0)
    for j in J:
        rest = [i for i in J if i != j]
        s = np.linalg.svd(X[:, rest], compute_uv=False)
        assert full <= np.sum(1 / s**2) + 1e-9


def test_coefficient_norm():
    assert ols.coefficient_norm(ols.SubsetFit(np.zeros(2), (0,), 0.0, 0.0)) == 0
    assert ols.coefficient_norm(ols.SubsetFit(np.array([3.0, 4.0]), (0, 1), 0.0, 5.0)) == 5


@given(st.integers(1, 4), st.integers(0, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_norm_shrinks_as_interpolating_set_grows(n, extra, more, seed):
    rng = np.random.default_rng(seed)
    k = n + extra + more
    d = data(rng.normal(size=(n, k)), rng.normal(size=n))
    small = ols.fit_subset(d, range(n + extra))
    big = ols.fit_subset(d, range(k))
    assert big.norm <= small.norm + 1e-10
    assert big.in_sample_rmse <= 1e-8 * (1 + np.linalg.norm(d.Y) / np.sqrt(n))


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_variation_hierarchy_below_threshold(n, seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, n + 1))
    X = rng.normal(size=(n, p))
    A, B = data(X, rng.normal(size=n)), data(X, rng.normal(size=n))
    J = list(range(p))
    full = ols.variation_distance(ols.fit_subset(A, J), ols.fit_subset(B, J), "design_weighted", X)
    for j in J:
        rest = [i for i in J if i != j]
        sub = ols.variation_distance(ols.fit_subset(A, rest), ols.fit_subset(B, rest), "design_weighted", X)
        assert full >= sub - 1e-9


@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_variation_hierarchy_above_threshold(n, extra, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n + extra))
    A, B = data(X, rng.normal(size=n)), data(X, rng.normal(size=n))
    J = list(range(n + extra))
    full = ols.variation_distance(ols.fit_subset(A, J), ols.fit_subset(B, J))
    subs = [ols.variation_distance(ols.fit_subset(A, [i for i in J if i != j]),
                                   ols.fit_subset(B, [i for i in J if i != j])) for j in J]
    assert full <= min(subs) + 1e-9


@pytest.mark.parametrize("tiny", [1e-4, 1e-5, 1e-7])
def test_identity_with_leverage_near_one(rng, tiny):
    # |J| = n + 1 with null vector z: 1 - h_j = z_j^2, so column 2 is barely droppable
    n = 5
    z = rng.normal(size=n + 1)
    z[2] = 0.0
    z *= np.sqrt(1 - tiny**2) / np.linalg.norm(z)
    z[2] = tiny
    X = rng.normal(size=(n, n + 1))
    X -= np.outer(X @ z, z)
    data = ols.RegressionDataset(X, rng.normal(size=n))
    resid, lam, full, loo = ols.averaging_residual(data, range(n + 1))
    assert lam.weights[2] == pytest.approx(tiny**2, rel=1e-6)
    assert resid <= 1e-8 * (1 + full.norm)
