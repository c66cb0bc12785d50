import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minnorm import numcore
from minnorm.errors import InputError, RankDeficientError


def pinv_oracle(A, b):
    # independent route: numpy's own pseudoinverse
    return np.linalg.pinv(A, rcond=1e-10) @ b


def test_identity_design():
    assert np.allclose(numcore.min_norm_least_squares(np.eye(2), [1.0, 2.0]), [1.0, 2.0])


def test_single_row_closed_form():
    # A'(AA')^{-1} b = (1, 2)' * 5 / 5
    x = numcore.min_norm_least_squares([[1.0, 2.0]], [5.0])
    np.testing.assert_allclose(x, [1.0, 2.0], atol=1e-14)


def test_wide_gaussian_matches_pinv_and_interpolates(rng):
    A = rng.normal(size=(3, 7))
    b = rng.normal(size=3)
    x = numcore.min_norm_least_squares(A, b)
    np.testing.assert_allclose(x, pinv_oracle(A, b), atol=1e-10)
    np.testing.assert_allclose(A @ x, b, atol=1e-10)


def test_tall_full_rank_is_ols(rng):
    A = rng.normal(size=(9, 3))
    b = rng.normal(size=9)
    ols = np.linalg.solve(A.T @ A, A.T @ b)
    np.testing.assert_allclose(numcore.min_norm_least_squares(A, b), ols, atol=1e-10)


def test_errors():
    with pytest.raises(InputError):
        numcore.min_norm_least_squares(np.ones((2, 2)), np.ones(3))
    with pytest.raises(InputError):
        numcore.min_norm_least_squares([[np.nan, 1.0]], [1.0])
    with pytest.raises(InputError):
        numcore.min_norm_least_squares(np.ones((2, 2)), [1.0, np.inf])
    with pytest.raises(InputError):
        numcore.thin_svd(np.ones((2, 2)), tol=1.5)


@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_min_norm_property(n, extra, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n + extra))
    b = rng.normal(size=n)
    x = numcore.min_norm_least_squares(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-8 * (1 + np.linalg.norm(b))
    _, _, Vt = np.linalg.svd(A)
    null = Vt[n:].T
    for _ in range(5):
        other = x + null @ rng.normal(size=null.shape[1])
        assert np.linalg.norm(x) <= np.linalg.norm(other) + 1e-12


def test_leverage_examples():
    np.testing.assert_allclose(numcore.feature_leverages([[1, 0, 0], [0, 1, 0]]), [1, 1, 0], atol=1e-15)
    np.testing.assert_allclose(numcore.feature_leverages([[1.0, 1.0]]), [0.5, 0.5], atol=1e-15)
    assert numcore.feature_leverage([[1.0, 1.0]], 1) == pytest.approx(0.5)


def test_leverage_matches_direct_formula(rng):
    A = rng.normal(size=(2, 5))
    h = numcore.feature_leverages(A)
    G = np.linalg.inv(A @ A.T)
    direct = np.array([A[:, j] @ G @ A[:, j] for j in range(5)])
    np.testing.assert_allclose(h, direct, atol=1e-12)
    assert np.all((h >= 0) & (h <= 1 + 1e-12))
    assert abs(h.sum() - 2) <= 1e-10


def test_leverage_errors():
    with pytest.raises(RankDeficientError):
        numcore.feature_leverages([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
    with pytest.raises(InputError):
        numcore.feature_leverage([[1.0, 1.0]], 2)
    with pytest.raises(InputError):
        numcore.feature_leverages(np.ones((3, 2)))


def test_projection_examples(rng):
    np.testing.assert_allclose(numcore.row_space_projection([[1.0, 0.0]]), [[1, 0], [0, 0]], atol=1e-15)
    A = rng.normal(size=(2, 4))
    P = numcore.row_space_projection(A)
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    A6 = rng.normal(size=(2, 6))
    assert np.trace(numcore.row_space_projection(A6)) == pytest.approx(2.0, abs=1e-10)


@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_projection_properties(n, extra, seed):
    A = np.random.default_rng(seed).normal(size=(n, n + extra))
    P = numcore.row_space_projection(A)
    np.testing.assert_allclose(P, P.T, atol=1e-8)
    np.testing.assert_allclose(P @ P, P, atol=1e-8)
    np.testing.assert_allclose(P @ A.T, A.T, atol=1e-8)
    h = numcore.feature_leverages(A)
    np.testing.assert_allclose(np.diag(P), h, atol=1e-12)
    assert abs(h.sum() - n) <= 1e-8


def test_rank_decision_uses_relative_tolerance():
    A = np.diag([1.0, 1e-12])
    assert numcore.numerical_rank(A) == 1
    assert numcore.numerical_rank(A, tol=1e-13) == 2
    assert numcore.numerical_rank(np.zeros((2, 3))) == 0


def test_deterministic(rng):
    A = rng.normal(size=(4, 9))
    b = rng.normal(size=4)
    x1 = numcore.min_norm_least_squares(A, b)
    x2 = numcore.min_norm_least_squares(A.copy(), b.copy())
    assert x1.tobytes() == x2.tobytes()


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
def test_project_simplex(v):
    p = numcore.project_simplex(v)
    assert p.min() >= 0 and abs(p.sum() - 1) < 1e-12
    # KKT: p = max(v - theta, 0) for one common shift
    v = np.asarray(v)
    pos = p > 0
    theta = (v[pos] - p[pos]).mean()
    np.testing.assert_allclose(p[pos], v[pos] - theta, atol=1e-9)
    assert np.all(v[~pos] <= theta + 1e-9)
