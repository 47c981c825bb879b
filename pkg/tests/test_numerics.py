import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqpolicy.errors import FactorizationError, ParameterError
from seqpolicy.numerics import (RngStream, cholesky, inv_spd, ridge_fit, sample_inverse_gamma, sample_mvn,
                                solve_spd, stream_id)


@pytest.mark.parametrize("A, b, x", [
    (np.eye(3), [1, 2, 3], [1, 2, 3]),
    ([[4, 0], [0, 9]], [8, 18], [2, 2]),
    ([[2, 1], [1, 2]], [3, 3], [1, 1]),
])
def test_solve_spd_examples(A, b, x):
    assert np.allclose(solve_spd(A, b), x, atol=1e-14)


def test_solve_spd_residual_bound_random():
    g = np.random.default_rng(0)
    for _ in range(1000):
        d = int(g.integers(1, 21))
        M = g.standard_normal((d, d))
        A = M @ M.T + 0.1 * np.eye(d)
        b = g.standard_normal(d) * 10
        x = solve_spd(A, b)
        assert np.max(np.abs(A @ x - b)) <= 1e-8 * (1 + np.max(np.abs(b)))


def test_non_pd_raises():
    with pytest.raises(FactorizationError):
        solve_spd([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])
    with pytest.raises(FactorizationError, match="symmetric"):
        cholesky([[1.0, 0.5], [0.0, 1.0]])


def test_inv_spd():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(inv_spd(A) @ A, np.eye(2), atol=1e-14)


def test_ridge_examples():
    assert ridge_fit([[1.0], [1.0]], [2.0, 4.0], 0.0) == pytest.approx([3.0])
    assert ridge_fit(np.eye(2), [1.0, 1.0], 1.0) == pytest.approx([0.5, 0.5])
    with pytest.raises(FactorizationError, match="ridge"):
        ridge_fit(np.ones((3, 2)), [1.0, 2.0, 3.0], 0.0)


@given(st.integers(0, 10_000), st.floats(1e-3, 1e6))
def test_ridge_penalty_bound(seed, lam):
    g = np.random.default_rng(seed)
    X = g.standard_normal((8, 3))
    y = g.standard_normal(8)
    beta = ridge_fit(X, y, lam)
    assert np.linalg.norm(beta) <= np.linalg.norm(X.T @ y) / lam * (1 + 1e-9)


@given(st.integers(0, 10_000))
def test_ridge_matches_normal_equations(seed):
    g = np.random.default_rng(seed)
    X = g.standard_normal((20, 4))
    y = g.standard_normal(20)
    brute = np.linalg.solve(X.T @ X, X.T @ y)
    assert np.allclose(ridge_fit(X, y, 0.0), brute, atol=1e-8)


def test_sample_mvn_moments():
    rng = RngStream(1)
    draws = sample_mvn([0.0, 0.0], np.eye(2), rng, size=100_000)
    assert np.all(np.abs(draws.mean(axis=0)) <= 0.02)
    assert np.allclose(np.cov(draws.T), np.eye(2), atol=0.05)


def test_sample_mvn_zero_cov():
    assert sample_mvn([1.0, -2.0], np.zeros((2, 2)), RngStream(0)).tolist() == [1.0, -2.0]


@pytest.mark.parametrize("a, b, mean, tol", [(3.0, 4.0, 2.0, 0.05), (11.0, 10.0, 1.0, 0.03)])
def test_inverse_gamma_mean(a, b, mean, tol):
    draws = sample_inverse_gamma(a, b, RngStream(2), size=100_000)
    assert np.all(draws > 0)
    assert abs(draws.mean() - mean) <= tol


def test_inverse_gamma_bad_params():
    with pytest.raises(ParameterError):
        sample_inverse_gamma(0.0, 1.0, RngStream(0))
    with pytest.raises(ParameterError):
        sample_inverse_gamma(1.0, -1.0, RngStream(0))


def test_streams_reproducible_and_distinct():
    a = sample_mvn([0.0, 0.0], np.eye(2), RngStream(7, 3), size=5)
    b = sample_mvn([0.0, 0.0], np.eye(2), RngStream(7, 3), size=5)
    c = sample_mvn([0.0, 0.0], np.eye(2), RngStream(7, 4), size=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(sample_inverse_gamma(2, 1, RngStream(9), 4), sample_inverse_gamma(2, 1, RngStream(9), 4))
    assert stream_id(0, "mrt") == stream_id(0, "mrt") != stream_id(1, "mrt")


def test_choice_index_distribution():
    rng = RngStream(3)
    counts = np.bincount([rng.choice_index(np.array([0.2, 0.0, 0.8])) for _ in range(20_000)], minlength=3)
    assert counts[1] == 0
    assert abs(counts[0] / 20_000 - 0.2) < 0.015
