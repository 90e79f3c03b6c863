import numpy as np
import pytest

from hgbic.errors import DataError
from hgbic.families import BERNOULLI_LOGIT, GAUSSIAN
from hgbic.glm import log_likelihood
from hgbic.models import CandidateSequence, LassoPathConfig, ModelSupport
from hgbic.pathgen import compute_path, lambda_max, lasso_path, refit_candidates, soft_threshold


@pytest.fixture
def sparse_gaussian(rng):
    n, p = 80, 12
    Z = rng.standard_normal((n, p))
    y = 2.0 * Z[:, 0] - 1.5 * Z[:, 3] + Z[:, 7] + 0.5 * rng.standard_normal(n)
    return Z, y


@pytest.fixture
def sparse_logistic(rng):
    n, p = 150, 8
    Z = rng.standard_normal((n, p))
    eta = 1.5 * Z[:, 0] - 1.0 * Z[:, 2]
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return Z, y


class TestSoftThreshold:
    def test_values(self):
        assert soft_threshold(3.0, 1.0) == 2.0
        assert soft_threshold(-3.0, 1.0) == -2.0
        assert soft_threshold(0.5, 1.0) == 0.0
        assert soft_threshold(1.0, 1.0) == 0.0


class TestLambdaMax:
    def test_null_model_at_lambda_max(self, sparse_gaussian):
        Z, y = sparse_gaussian
        path = compute_path(GAUSSIAN, Z, y, LassoPathConfig(n_lambda=10))
        assert path.lambdas[0] == pytest.approx(lambda_max(GAUSSIAN, Z, y))
        assert path.support_at(0).size == 0

    def test_empty_support_never_a_candidate(self, sparse_gaussian):
        Z, y = sparse_gaussian
        seq = lasso_path(GAUSSIAN, Z, y, LassoPathConfig(n_lambda=10))
        assert all(support.size > 0 for support in seq)

    def test_logit_uses_centered_residual(self, sparse_logistic):
        Z, y = sparse_logistic
        X = (Z - Z.mean(axis=0)) / Z.std(axis=0)
        expected = np.max(np.abs(X.T @ (y - y.mean()))) / y.size
        assert lambda_max(BERNOULLI_LOGIT, Z, y) == pytest.approx(expected)


class TestComputePath:
    def test_orthonormal_design_is_soft_threshold(self, rng):
        n, p = 40, 5
        Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
        X = np.sqrt(n) * Q
        y = X @ np.array([1.0, -0.6, 0.3, 0.0, 0.05]) + 0.1 * rng.standard_normal(n)
        config = LassoPathConfig(n_lambda=10, standardize=False, fit_intercept=False, tol_cd=1e-12)
        path = compute_path(GAUSSIAN, X, y, config)
        correlation = X.T @ y / n
        for lam, coef in zip(path.lambdas, path.coefs, strict=True):
            expected = [soft_threshold(c, lam) for c in correlation]
            np.testing.assert_allclose(coef, expected, atol=1e-10)

    def test_kkt_conditions(self, rng):
        n, p = 40, 10
        X = rng.standard_normal((n, p))
        y = X[:, 0] - 2.0 * X[:, 4] + rng.standard_normal(n)
        config = LassoPathConfig(n_lambda=15, standardize=False, fit_intercept=False, tol_cd=1e-10)
        path = compute_path(GAUSSIAN, X, y, config)
        assert path.converged.all()
        for lam, coef in zip(path.lambdas, path.coefs, strict=True):
            gradient = X.T @ (y - X @ coef) / n
            active = coef != 0
            np.testing.assert_allclose(gradient[active], lam * np.sign(coef[active]), atol=1e-6)
            assert np.all(np.abs(gradient[~active]) <= lam + 1e-6)

    def test_objective_never_increases(self, sparse_gaussian, sparse_logistic):
        for family, (Z, y) in ((GAUSSIAN, sparse_gaussian), (BERNOULLI_LOGIT, sparse_logistic)):
            path = compute_path(family, Z, y, LassoPathConfig(n_lambda=15))
            for trace in path.objective_traces:
                assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:], strict=False))

    def test_grid_is_log_spaced(self, sparse_gaussian):
        Z, y = sparse_gaussian
        path = compute_path(GAUSSIAN, Z, y, LassoPathConfig(n_lambda=20, max_support=12))
        ratios = path.lambdas[1:] / path.lambdas[:-1]
        np.testing.assert_allclose(ratios, ratios[0])
        assert np.all(np.diff(path.lambdas) < 0)

    def test_stops_past_max_support(self, rng):
        Z = rng.standard_normal((60, 20))
        y = Z @ rng.standard_normal(20)
        path = compute_path(GAUSSIAN, Z, y, LassoPathConfig(n_lambda=100, max_support=3))
        assert len(path.lambdas) < 100
        assert np.count_nonzero(path.coefs[-1]) > 3

    def test_constant_response(self, rng):
        Z = rng.standard_normal((20, 3))
        path = compute_path(GAUSSIAN, Z, np.full(20, 2.0))
        assert path.lambdas.size == 0
        assert len(lasso_path(GAUSSIAN, Z, np.full(20, 2.0))) == 0

    def test_single_class_logit(self, rng):
        with pytest.raises(DataError, match="both classes"):
            compute_path(BERNOULLI_LOGIT, rng.standard_normal((10, 2)), np.ones(10))

    def test_standardized_path_follows_column_rescaling(self, sparse_gaussian, sparse_logistic):
        scale = np.array([1e3, 0.01, 7.0, 1.0, 250.0, 0.5, 3.0, 1e-3])
        for family, (Z, y) in ((GAUSSIAN, sparse_gaussian), (BERNOULLI_LOGIT, sparse_logistic)):
            Z = Z[:, :8]
            config = LassoPathConfig(n_lambda=15, standardize=True, tol_cd=1e-12)
            base = compute_path(family, Z, y, config)
            scaled = compute_path(family, Z * scale, y, config)
            np.testing.assert_allclose(scaled.lambdas, base.lambdas, rtol=1e-10)
            np.testing.assert_allclose(scaled.coefs * scale, base.coefs, rtol=1e-6, atol=1e-6)
            np.testing.assert_allclose(scaled.intercepts, base.intercepts, rtol=1e-6, atol=1e-6)

    def test_max_support_above_n(self, sparse_gaussian):
        Z, y = sparse_gaussian
        with pytest.raises(DataError):
            compute_path(GAUSSIAN, Z, y, LassoPathConfig(max_support=500))


class TestLassoPath:
    def test_distinct_supports_in_order(self, sparse_gaussian):
        Z, y = sparse_gaussian
        seq = lasso_path(GAUSSIAN, Z, y, LassoPathConfig(n_lambda=50))
        assert len(set(seq.supports)) == len(seq.supports)
        assert all(support.size <= 40 for support in seq)
        assert list(seq.first_lambdas) == sorted(seq.first_lambdas, reverse=True)

    def test_finds_the_signal(self, sparse_gaussian):
        Z, y = sparse_gaussian
        seq = lasso_path(GAUSSIAN, Z, y, LassoPathConfig(n_lambda=50))
        assert any({0, 3, 7} <= support.as_set() for support in seq)


class TestRefitCandidates:
    def test_gaussian_refit_is_ols(self, sparse_gaussian):
        Z, y = sparse_gaussian
        seq = CandidateSequence(supports=[ModelSupport((0, 3, 7))], lambda_grid=np.array([0.1]))
        (fit,) = refit_candidates(GAUSSIAN, Z, y, seq)
        expected = np.linalg.lstsq(Z[:, [0, 3, 7]], y, rcond=None)[0]
        np.testing.assert_allclose(fit.beta_hat, expected, atol=1e-8)
        assert fit.fit_intercept is False

    def test_collinear_support_rejected(self, sparse_gaussian):
        Z, y = sparse_gaussian
        Z = np.column_stack((Z, Z[:, 0]))
        seq = CandidateSequence(
            supports=[ModelSupport((0,)), ModelSupport((0, 12))], lambda_grid=np.array([0.2, 0.1])
        )
        fits = refit_candidates(GAUSSIAN, Z, y, seq)
        assert not fits[0].rejected
        assert fits[1].rejected
        assert fits[1].rejection_reason.startswith("rank deficient")

    def test_refit_dominates_penalized_fit(self, sparse_logistic):
        Z, y = sparse_logistic
        path = compute_path(BERNOULLI_LOGIT, Z, y, LassoPathConfig(n_lambda=20))
        k = next(k for k in range(len(path.lambdas)) if path.support_at(k).size >= 2)
        support = path.support_at(k)
        columns = list(support.indices)
        working = np.column_stack((np.ones(len(y)), Z[:, columns]))
        penalized = log_likelihood(
            BERNOULLI_LOGIT, working, y, np.concatenate(([path.intercepts[k]], path.coefs[k][columns]))
        )
        seq = CandidateSequence(supports=[support], lambda_grid=path.lambdas)
        (fit,) = refit_candidates(BERNOULLI_LOGIT, Z, y, seq)
        assert fit.fit_intercept is True
        assert fit.loglik >= penalized - 1e-9

    def test_empty_sequence(self, sparse_gaussian):
        Z, y = sparse_gaussian
        with pytest.raises(DataError):
            refit_candidates(GAUSSIAN, Z, y, CandidateSequence(supports=[], lambda_grid=np.empty(0)))
