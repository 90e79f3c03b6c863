import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgbic.errors import DataError, RankDeficientError
from hgbic.families import BERNOULLI_LOGIT, GAUSSIAN, GlmFamily
from hgbic.glm import check_rank, fit_qmle, log_likelihood, score
from hgbic.models import FitOptions, ModelSupport


class TestLogLikelihood:
    def test_standard_normal_at_zero(self):
        value = log_likelihood(GAUSSIAN, np.array([[1.0]]), np.array([0.0]), np.array([0.0]))
        assert value == pytest.approx(-0.5 * math.log(2.0 * math.pi), abs=1e-12)

    def test_symmetric_coin(self):
        value = log_likelihood(BERNOULLI_LOGIT, np.array([[1.0]]), np.array([1.0]), np.array([0.0]))
        assert value == pytest.approx(math.log(0.5), abs=1e-12)

    def test_two_observations(self):
        X = np.array([[1.0], [1.0]])
        y = np.array([1.0, 0.0])
        assert log_likelihood(BERNOULLI_LOGIT, X, y, np.array([0.0])) == pytest.approx(-1.386294, abs=1e-6)
        theta = 0.7
        expected = theta - 2.0 * math.log1p(math.exp(theta))
        assert log_likelihood(BERNOULLI_LOGIT, X, y, np.array([theta])) == pytest.approx(expected, abs=1e-12)

    def test_dispersion_ignored_for_logit(self):
        X = np.array([[1.0], [2.0]])
        y = np.array([1.0, 0.0])
        beta = np.array([0.3])
        assert log_likelihood(BERNOULLI_LOGIT, X, y, beta, 5.0) == log_likelihood(BERNOULLI_LOGIT, X, y, beta)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            log_likelihood(GAUSSIAN, np.ones((3, 2)), np.ones(3), np.ones(3))

    def test_non_finite_input(self):
        with pytest.raises(DataError):
            log_likelihood(GAUSSIAN, np.array([[np.inf]]), np.array([0.0]), np.array([0.0]))

    @settings(max_examples=50, deadline=None)
    @given(
        b1=st.floats(-5.0, 5.0),
        b2=st.floats(-5.0, 5.0),
        c1=st.floats(-5.0, 5.0),
        c2=st.floats(-5.0, 5.0),
    )
    def test_concave_along_segments(self, b1, b2, c1, c2):
        X = np.array([[1.0, 0.5], [-0.3, 1.2], [2.0, -1.0], [0.1, 0.4]])
        y = np.array([1.0, 0.0, 1.0, 0.0])
        a = np.array([b1, b2])
        b = np.array([c1, c2])
        for family in (GAUSSIAN, BERNOULLI_LOGIT):
            mid = log_likelihood(family, X, y, 0.5 * (a + b))
            ends = 0.5 * (log_likelihood(family, X, y, a) + log_likelihood(family, X, y, b))
            assert mid >= ends - 1e-9 * max(1.0, abs(ends))


class TestScore:
    def test_zero_at_ols(self, rng):
        X = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        np.testing.assert_allclose(score(GAUSSIAN, X, y, beta), 0.0, atol=1e-10)

    def test_logit_at_zero(self, rng):
        X = rng.standard_normal((10, 2))
        y = (rng.random(10) < 0.5).astype(float)
        np.testing.assert_allclose(score(BERNOULLI_LOGIT, X, y, np.zeros(2)), X.T @ (y - 0.5))

    def test_analytic_root(self):
        X = np.array([[1.0], [1.0]])
        y = np.array([1.0, 0.0])
        beta = 0.4
        expected = 1.0 - 2.0 / (1.0 + math.exp(-beta))
        assert score(BERNOULLI_LOGIT, X, y, np.array([beta]))[0] == pytest.approx(expected)
        assert score(BERNOULLI_LOGIT, X, y, np.array([0.0]))[0] == 0.0


class TestCheckRank:
    def test_full_rank(self, rng):
        check_rank(rng.standard_normal((10, 3)))

    def test_duplicated_column(self, rng):
        x = rng.standard_normal(10)
        with pytest.raises(RankDeficientError):
            check_rank(np.column_stack((x, x)))

    def test_more_columns_than_rows(self, rng):
        with pytest.raises(RankDeficientError):
            check_rank(rng.standard_normal((2, 3)))


class TestFitQmle:
    def test_exact_ols(self):
        fit = fit_qmle(GAUSSIAN, np.array([[1.0], [2.0]]), np.array([1.0, 2.0]))
        assert fit.beta_hat[0] == pytest.approx(1.0, abs=1e-12)
        assert fit.score_sup_norm == pytest.approx(0.0, abs=1e-12)
        assert fit.dispersion_hat == 1.0
        assert fit.converged
        assert not fit.rejected

    def test_matches_least_squares(self, rng):
        X = rng.standard_normal((100, 5))
        y = X @ np.array([1.0, -2.0, 0.0, 0.5, 3.0]) + rng.standard_normal(100)
        fit = fit_qmle(GAUSSIAN, X, y)
        np.testing.assert_allclose(fit.beta_hat, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-8)
        assert fit.dispersion_hat == 1.0
        assert fit.support == ModelSupport((0, 1, 2, 3, 4))

    @pytest.mark.parametrize("tau", [1.0, 2.5])
    def test_loglik_at_known_dispersion(self, rng, tau):
        X = rng.standard_normal((40, 2))
        y = rng.standard_normal(40)
        fit = fit_qmle(GlmFamily.from_name("gaussian", tau), X, y)
        residual = y - X @ fit.beta_hat
        expected = -residual @ residual / (2.0 * tau) - 20.0 * math.log(2.0 * math.pi * tau)
        assert fit.dispersion_hat == tau
        assert fit.loglik == pytest.approx(expected, rel=1e-10)

    def test_nested_candidates_share_dispersion(self, rng):
        X = rng.standard_normal((80, 3))
        y = X[:, 0] + 0.5 * rng.standard_normal(80)
        small = fit_qmle(GAUSSIAN, X[:, :1], y)
        large = fit_qmle(GAUSSIAN, X, y)
        rss_small = np.sum((y - X[:, :1] @ small.beta_hat) ** 2)
        rss_large = np.sum((y - X @ large.beta_hat) ** 2)
        assert small.dispersion_hat == large.dispersion_hat
        assert 2.0 * (large.loglik - small.loglik) == pytest.approx(rss_small - rss_large, rel=1e-9)

    @pytest.mark.parametrize("column_scale", [1e5, 1e8])
    def test_gaussian_fit_in_large_units(self, rng, column_scale):
        X = rng.standard_normal((50, 3))
        y = X @ np.array([0.5, -1.0, 2.0]) + rng.standard_normal(50)
        base = fit_qmle(GAUSSIAN, X, y)
        scaled = X.copy()
        scaled[:, 0] *= column_scale
        fit = fit_qmle(GAUSSIAN, scaled, 1e4 * y)
        assert fit.converged
        assert not fit.rejected
        np.testing.assert_allclose(scaled @ fit.beta_hat, 1e4 * (X @ base.beta_hat), rtol=1e-6, atol=1e-4)
        assert fit.beta_hat[0] * column_scale == pytest.approx(1e4 * base.beta_hat[0], rel=1e-6)

    def test_symmetric_logit(self):
        fit = fit_qmle(BERNOULLI_LOGIT, np.array([[1.0], [1.0]]), np.array([1.0, 0.0]))
        assert fit.beta_hat[0] == pytest.approx(0.0, abs=1e-10)
        assert fit.converged

    def test_logit_matches_grid_search(self, small_logistic_data):
        X, y = small_logistic_data
        grid = np.arange(-10.0, 10.0 + 5e-4, 1e-3)
        values = [log_likelihood(BERNOULLI_LOGIT, X, y, np.array([b])) for b in grid]
        oracle = grid[int(np.argmax(values))]
        fit = fit_qmle(BERNOULLI_LOGIT, X, y)
        assert fit.converged
        assert fit.beta_hat[0] == pytest.approx(oracle, abs=2e-3)
        assert fit.loglik >= max(values) - 1e-9

    def test_logit_with_intercept(self, small_logistic_data):
        X, y = small_logistic_data
        fit = fit_qmle(BERNOULLI_LOGIT, X, y, FitOptions(fit_intercept=True))
        assert fit.fit_intercept
        assert fit.coef.shape == (2,)
        gradient = score(BERNOULLI_LOGIT, np.column_stack((np.ones(20), X)), y, fit.coef)
        assert np.max(np.abs(gradient)) <= 1e-8 * 20

    def test_affine_rescaling(self, rng):
        X = rng.standard_normal((60, 3))
        y = (rng.random(60) < 0.5).astype(float)
        scale = np.array([2.0, 0.5, 10.0])
        base = fit_qmle(BERNOULLI_LOGIT, X, y)
        scaled = fit_qmle(BERNOULLI_LOGIT, X * scale, y)
        np.testing.assert_allclose(scaled.beta_hat * scale, base.beta_hat, rtol=1e-5, atol=1e-6)
        assert scaled.loglik == pytest.approx(base.loglik, rel=1e-10)

    def test_separation_is_rejected(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        fit = fit_qmle(BERNOULLI_LOGIT, X, y)
        assert fit.separation_flag
        assert not fit.converged
        assert fit.rejected
        assert fit.rejection_reason == "quasi-complete separation"
        assert np.all(np.abs(X @ fit.beta_hat) <= 30.0 + 1e-9)

    def test_rank_deficient(self, rng):
        x = rng.standard_normal(10)
        with pytest.raises(RankDeficientError):
            fit_qmle(GAUSSIAN, np.column_stack((x, 2.0 * x)), rng.standard_normal(10))

    def test_support_size_mismatch(self, rng):
        with pytest.raises(DataError):
            fit_qmle(GAUSSIAN, rng.standard_normal((10, 2)), rng.standard_normal(10), support=ModelSupport((1,)))

    def test_invalid_logit_response(self, rng):
        with pytest.raises(DataError):
            fit_qmle(BERNOULLI_LOGIT, rng.standard_normal((5, 1)), np.array([0.0, 1.0, 2.0, 0.0, 1.0]))
