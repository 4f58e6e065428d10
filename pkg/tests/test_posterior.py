import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brrr.numerics import make_rng
from brrr.posterior import (
    DimensionError,
    PriorSpec,
    RegressionData,
    grad_neg_log_posterior,
    log_likelihood,
    log_posterior,
    log_prior,
    shrink,
)


def random_problem(seed, n=7, p=5, m=4, sigma2=1.3):
    rng = make_rng(seed)
    X = rng.standard_normal((n, p))
    Y = rng.standard_normal((n, m))
    B = rng.standard_normal((p, m))
    return RegressionData(X, Y, sigma2), B


def loop_log_likelihood(X, Y, B, sigma2):
    n, p = X.shape
    m = Y.shape[1]
    total = 0.0
    for i in range(n):
        for j in range(m):
            fitted = 0.0
            for k in range(p):
                fitted += X[i, k] * B[k, j]
            total += (Y[i, j] - fitted) ** 2
    return -total / (2 * sigma2)


def dense_log_prior(B, lam):
    p, m = B.shape
    sign, logdet = np.linalg.slogdet(lam**2 * np.eye(p) + B @ B.T)
    assert sign > 0
    return -0.5 * (p + m + 2) * logdet


def central_difference(f, B, eps=1e-5):
    G = np.empty_like(B)
    for idx in np.ndindex(B.shape):
        E = np.zeros_like(B)
        E[idx] = eps
        G[idx] = (f(B + E) - f(B - E)) / (2 * eps)
    return G


def random_orthogonal(rng, k):
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


class TestRegressionData:
    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            RegressionData(np.ones((3, 2)), np.ones((4, 1)))

    def test_sigma2_positive(self):
        with pytest.raises(ValueError):
            RegressionData(np.ones((3, 2)), np.ones((3, 1)), sigma2=0.0)

    def test_prior_lambda_positive(self):
        with pytest.raises(ValueError):
            PriorSpec(0.0)


class TestLogLikelihood:
    def test_exact_fit_is_zero(self):
        data, B = random_problem(1)
        exact = RegressionData(data.X, data.X @ B, 1.0)
        assert log_likelihood(exact, B) == pytest.approx(0.0, abs=1e-12)

    def test_zero_coefficients(self):
        data, _ = random_problem(2)
        expected = -np.sum(data.Y**2) / (2 * data.sigma2)
        assert log_likelihood(data, np.zeros((5, 4))) == pytest.approx(expected, rel=1e-14)

    def test_matches_loop_oracle(self):
        data, B = random_problem(3)
        oracle = loop_log_likelihood(data.X, data.Y, B, data.sigma2)
        assert log_likelihood(data, B) == pytest.approx(oracle, rel=1e-12)

    def test_dimension_mismatch(self):
        data, _ = random_problem(4)
        with pytest.raises(DimensionError):
            log_likelihood(data, np.zeros((4, 4)))


class TestLogPrior:
    @pytest.mark.parametrize("shape", [(3, 5), (6, 2), (4, 4)])
    def test_zero_lambda_one(self, shape):
        assert log_prior(np.zeros(shape), PriorSpec(1.0)) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("shape, lam", [((3, 5), 2.0), ((6, 2), 0.3), ((4, 4), 3.0)])
    def test_zero_general_lambda(self, shape, lam):
        p, m = shape
        assert log_prior(np.zeros(shape), lam) == pytest.approx(-(p + m + 2) * p * math.log(lam), rel=1e-12)

    def test_dense_determinant_oracle(self):
        B = make_rng(5).standard_normal((6, 4))
        assert log_prior(B, PriorSpec(3.0)) == pytest.approx(dense_log_prior(B, 3.0), rel=1e-9)

    @pytest.mark.parametrize("shape", [(2, 7), (7, 2), (5, 5)])
    def test_rectangular_both_ways(self, shape):
        B = make_rng(6).standard_normal(shape)
        assert log_prior(B, 1.7) == pytest.approx(dense_log_prior(B, 1.7), rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32))
    def test_rotation_invariance(self, p, m, seed):
        rng = make_rng(seed)
        B = rng.standard_normal((p, m))
        U, V = random_orthogonal(rng, p), random_orthogonal(rng, m)
        assert log_prior(U @ B @ V, 3.0) == pytest.approx(log_prior(B, 3.0), rel=1e-9, abs=1e-9)

    def test_decreases_as_singular_value_grows(self):
        rng = make_rng(8)
        U, V = random_orthogonal(rng, 5), random_orthogonal(rng, 3)
        s = np.array([2.0, 1.0, 0.5])
        values = []
        for grow in [0.0, 0.5, 1.0, 3.0]:
            t = s.copy()
            t[1] += grow
            B = U[:, :3] @ np.diag(t) @ V.T
            values.append(log_prior(B, 3.0))
        assert all(a > b for a, b in zip(values, values[1:]))


class TestLogPosterior:
    def test_prior_vanishes_at_zero(self):
        data, _ = random_problem(9)
        expected = -np.sum(data.Y**2) / (2 * data.sigma2)
        assert log_posterior(data, np.zeros((5, 4)), 1.0) == pytest.approx(expected, rel=1e-14)

    def test_additive(self):
        data, B = random_problem(10)
        assert log_posterior(data, B, 3.0) == log_likelihood(data, B) + log_prior(B, 3.0)

    def test_scalar_ordering(self):
        data = RegressionData([[1.0]], [[0.0]], 1.0)
        at_one = log_posterior(data, np.array([[1.0]]), 1.0)
        assert at_one == pytest.approx(-0.5 - 2 * math.log(2.0), rel=1e-14)
        assert log_posterior(data, np.zeros((1, 1)), 1.0) > at_one


class TestShrink:
    def test_zero(self):
        np.testing.assert_array_equal(shrink(np.zeros((4, 3)), 2.0), 0.0)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
    def test_identity(self, lam):
        np.testing.assert_allclose(shrink(np.eye(4), lam), np.eye(4) / (lam**2 + 1), rtol=1e-14)

    def test_direct_solve_oracle(self):
        B = make_rng(11).standard_normal((40, 8))
        direct = np.linalg.solve(9.0 * np.eye(40) + B @ B.T, B)
        assert np.linalg.norm(shrink(B, 3.0) - direct) <= 1e-10 * np.linalg.norm(direct)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 100), st.sampled_from([0.1, 3.0, 10.0]), st.integers(0, 2**32))
    def test_woodbury_identity(self, p, m, lam, seed):
        B = make_rng(seed).standard_normal((p, m))
        direct = np.linalg.solve(lam**2 * np.eye(p) + B @ B.T, B)
        assert np.linalg.norm(shrink(B, lam) - direct) <= 1e-10 * max(1.0, np.linalg.norm(B))

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            shrink(np.eye(2), 0.0)


class TestGradient:
    def test_at_zero(self):
        data, _ = random_problem(12)
        G = grad_neg_log_posterior(data, np.zeros((5, 4)), 3.0)
        np.testing.assert_allclose(G, -data.X.T @ data.Y / data.sigma2, rtol=1e-13)

    def test_finite_differences(self):
        data, B = random_problem(13)
        G = grad_neg_log_posterior(data, B, PriorSpec(3.0))
        fd = central_difference(lambda b: -log_posterior(data, b, 3.0), B)
        assert np.max(np.abs(G - fd) / np.maximum(np.abs(fd), 1e-3)) <= 1e-6

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 9), st.integers(1, 7), st.integers(1, 12), st.sampled_from([0.5, 3.0]),
           st.integers(0, 2**32))
    def test_finite_differences_property(self, p, m, n, lam, seed):
        data, B = random_problem(seed, n=n, p=p, m=m)
        G = grad_neg_log_posterior(data, B, lam)
        fd = central_difference(lambda b: -log_posterior(data, b, lam), B)
        np.testing.assert_allclose(G, fd, rtol=1e-6, atol=1e-6)

    def test_vanishes_at_grid_map(self):
        # 1x1 problem: -logpost(b) = (3 - b)^2 / 2 + 2 log(1 + b^2)
        data = RegressionData([[1.0]], [[3.0]], 1.0)
        step = 1e-5
        grid = np.arange(-10.0, 10.0, step)
        neg = 0.5 * (3.0 - grid) ** 2 + 2.0 * np.log1p(grid**2)
        b_map = grid[np.argmin(neg)]
        g = grad_neg_log_posterior(data, np.array([[b_map]]), 1.0)[0, 0]
        # second derivative at the mode is below 2, so |g| <= 2 * step
        assert abs(g) <= 2 * step

    def test_dimension_mismatch(self):
        data, _ = random_problem(14)
        with pytest.raises(DimensionError):
            grad_neg_log_posterior(data, np.zeros((4, 5)), 3.0)
