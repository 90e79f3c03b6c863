"""Candidate generation: an L1 regularization path followed by unpenalized refits.

The path is solved by cyclic coordinate descent with warm starts along a log-spaced λ grid.
Gaussian models use exact soft-threshold updates; the logit family wraps the same weighted
least-squares solver in a proximal-Newton outer loop.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from hgbic.errors import DataError, RankDeficientError
from hgbic.families import GlmFamily
from hgbic.glm import fit_qmle
from hgbic.models import CandidateSequence, FitOptions, FitResult, LassoPath, LassoPathConfig, ModelSupport

logger = logging.getLogger(__name__)

# IRLS weights are floored so the working response stays bounded near separation.
WEIGHT_FLOOR = 1e-5


def soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


@dataclass(frozen=True, eq=False)
class _Standardizer:
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, design: np.ndarray, fit_intercept: bool, standardize: bool) -> "_Standardizer":
        p = design.shape[1]
        center = design.mean(axis=0) if fit_intercept else np.zeros(p)
        if standardize:
            scale = np.sqrt(np.mean((design - center) ** 2, axis=0))
            scale[scale == 0.0] = 1.0
        else:
            scale = np.ones(p)
        return cls(center, scale)

    def transform(self, design: np.ndarray) -> np.ndarray:
        return (design - self.center) / self.scale

    def to_original(self, coef: np.ndarray, intercept: float) -> tuple[np.ndarray, float]:
        beta = coef / self.scale
        return beta, intercept - float(self.center @ beta)


def _check_path_inputs(family: GlmFamily, design: np.ndarray, response: np.ndarray):
    Z = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if Z.ndim != 2 or y.ndim != 1 or Z.shape[0] != y.shape[0]:
        raise DataError(f"design {Z.shape} and response {y.shape} do not agree")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise DataError("design or response contains non-finite values")
    family.validate_response(y)
    if not family.is_gaussian and (y.min() == y.max()):
        raise DataError("bernoulli_logit path needs both classes in the response")
    return Z, y


def _null_fit(family: GlmFamily, y: np.ndarray, fit_intercept: bool) -> np.ndarray:
    """Mean of the response under the intercept-only (or empty) model."""
    if fit_intercept:
        return np.full_like(y, y.mean())
    return family.mean(np.zeros_like(y))


def lambda_max(
    family: GlmFamily,
    design: np.ndarray,
    response: np.ndarray,
    fit_intercept: bool | None = None,
    standardize: bool = True,
) -> float:
    """Smallest λ at which the null model satisfies the KKT conditions."""
    Z, y = _check_path_inputs(family, design, response)
    if fit_intercept is None:
        fit_intercept = family.default_fit_intercept
    X = _Standardizer.fit(Z, fit_intercept, standardize).transform(Z)
    gradient = X.T @ (y - _null_fit(family, y, fit_intercept)) / y.shape[0]
    return float(np.max(np.abs(gradient)))


def _coordinate_descent(
    X: np.ndarray,
    weights: np.ndarray,
    target: np.ndarray,
    coef: np.ndarray,
    intercept: float,
    lam: float,
    fit_intercept: bool,
    tol: float,
    max_passes: int,
    trace: list[float] | None = None,
) -> tuple[np.ndarray, float, int, bool]:
    """Minimize (1/2n)Σwᵢ(zᵢ − b₀ − xᵢᵀb)² + λ‖b‖₁ from a warm start.

    Sweeps the active set until coordinates settle, then checks the KKT conditions over
    every column and admits violators. Returns (coef, intercept, passes, converged).
    """
    n = X.shape[0]
    coef = coef.copy()
    weighted_X = X * weights[:, None]
    col_var = np.einsum("ij,ij->j", weighted_X, X) / n
    weight_sum = float(weights.sum())
    residual = target - intercept - X @ coef
    active = set(np.flatnonzero(coef).tolist())
    passes = 0

    while True:
        while True:
            passes += 1
            max_change = 0.0
            if fit_intercept:
                shift = float(weights @ residual) / weight_sum
                if shift != 0.0:
                    intercept += shift
                    residual -= shift
                    max_change = abs(shift) * np.sqrt(weight_sum / n)
            for j in sorted(active):
                old = coef[j]
                gradient = float(weighted_X[:, j] @ residual) / n
                new = soft_threshold(gradient + col_var[j] * old, lam) / col_var[j]
                if new != old:
                    residual -= X[:, j] * (new - old)
                    coef[j] = new
                    max_change = max(max_change, np.sqrt(col_var[j]) * abs(new - old))
            if trace is not None:
                trace.append(0.5 * float(weights @ residual**2) / n + lam * float(np.abs(coef).sum()))
            if max_change <= tol:
                break
            if passes >= max_passes:
                return coef, intercept, passes, False

        gradient = weighted_X.T @ residual / n
        violators = [j for j in np.flatnonzero(np.abs(gradient) > lam).tolist() if j not in active]
        if not violators:
            return coef, intercept, passes, True
        if passes >= max_passes:
            return coef, intercept, passes, False
        active.update(violators)


def _logistic_objective(X: np.ndarray, y: np.ndarray, coef: np.ndarray, intercept: float, lam: float) -> float:
    eta = intercept + X @ coef
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta)) + lam * float(np.abs(coef).sum())


def _logistic_prox_newton(
    X: np.ndarray,
    y: np.ndarray,
    coef: np.ndarray,
    intercept: float,
    lam: float,
    fit_intercept: bool,
    config: LassoPathConfig,
    trace: list[float],
) -> tuple[np.ndarray, float, bool]:
    objective = _logistic_objective(X, y, coef, intercept, lam)
    trace.append(objective)
    for _ in range(config.max_outer):
        eta = intercept + X @ coef
        mu = expit(eta)
        weights = np.maximum(mu * (1.0 - mu), WEIGHT_FLOOR)
        working = eta + (y - mu) / weights
        new_coef, new_intercept, _, inner_ok = _coordinate_descent(
            X, weights, working, coef, intercept, lam, fit_intercept, config.tol_cd, config.max_passes
        )
        if not inner_ok:
            return coef, intercept, False

        new_objective = _logistic_objective(X, y, new_coef, new_intercept, lam)
        halvings = 0
        while new_objective > objective and halvings < 30:
            new_coef = 0.5 * (coef + new_coef)
            new_intercept = 0.5 * (intercept + new_intercept)
            new_objective = _logistic_objective(X, y, new_coef, new_intercept, lam)
            halvings += 1
        if new_objective > objective:
            return coef, intercept, False

        improvement = objective - new_objective
        coef, intercept, objective = new_coef, new_intercept, new_objective
        trace.append(objective)
        if improvement <= config.tol_cd * max(abs(objective), 1.0):
            return coef, intercept, True
    return coef, intercept, False


def compute_path(
    family: GlmFamily,
    design: np.ndarray,
    response: np.ndarray,
    config: LassoPathConfig | None = None,
) -> LassoPath:
    config = config or LassoPathConfig()
    Z, y = _check_path_inputs(family, design, response)
    n, p = Z.shape
    fit_intercept = config.fit_intercept if config.fit_intercept is not None else family.default_fit_intercept
    max_support = config.resolve_max_support(n)

    if family.is_gaussian and y.min() == y.max():
        logger.warning("response is constant; the regularization path is empty")
        return LassoPath(np.empty(0), np.empty((0, p)), np.empty(0), np.empty(0, dtype=bool), [])

    standardizer = _Standardizer.fit(Z, fit_intercept, config.standardize)
    X = standardizer.transform(Z)
    null_mean = _null_fit(family, y, fit_intercept)
    lam_max = float(np.max(np.abs(X.T @ (y - null_mean)))) / n
    if lam_max == 0.0:
        logger.warning("no column is correlated with the response; the regularization path is empty")
        return LassoPath(np.empty(0), np.empty((0, p)), np.empty(0), np.empty(0, dtype=bool), [])

    lambdas = lam_max * np.logspace(0.0, np.log10(config.lambda_min_ratio), config.n_lambda)

    coef = np.zeros(p)
    if fit_intercept:
        intercept = float(y.mean()) if family.is_gaussian else float(np.log(y.mean() / (1.0 - y.mean())))
    else:
        intercept = 0.0

    coefs, intercepts, converged, traces, skipped = [], [], [], [], []
    ones = np.ones(n)
    for lam in lambdas:
        trace: list[float] = []
        if family.is_gaussian:
            coef, intercept, _, ok = _coordinate_descent(
                X, ones, y, coef, intercept, lam, fit_intercept, config.tol_cd, config.max_passes, trace
            )
        else:
            coef, intercept, ok = _logistic_prox_newton(X, y, coef, intercept, lam, fit_intercept, config, trace)

        if not ok:
            logger.warning("coordinate descent did not converge at lambda=%.6g; skipping it", lam)
            skipped.append(float(lam))
        beta, beta0 = standardizer.to_original(coef, intercept)
        coefs.append(beta)
        intercepts.append(beta0)
        converged.append(ok)
        traces.append(trace)

        if np.count_nonzero(coef) > max_support:
            break

    k = len(coefs)
    return LassoPath(
        lambdas=lambdas[:k],
        coefs=np.array(coefs).reshape(k, p),
        intercepts=np.array(intercepts),
        converged=np.array(converged, dtype=bool),
        objective_traces=traces,
        skipped_lambdas=skipped,
    )


def lasso_path(
    family: GlmFamily,
    design: np.ndarray,
    response: np.ndarray,
    config: LassoPathConfig | None = None,
) -> CandidateSequence:
    """Distinct non-empty supports along the path, in order of first appearance."""
    config = config or LassoPathConfig()
    path = compute_path(family, design, response, config)
    max_support = config.resolve_max_support(np.asarray(design).shape[0])

    supports: list[ModelSupport] = []
    first_lambdas: list[float] = []
    seen: set[ModelSupport] = set()
    for k, lam in enumerate(path.lambdas):
        if not path.converged[k]:
            continue
        support = path.support_at(k)
        if support.size == 0 or support.size > max_support or support in seen:
            continue
        seen.add(support)
        supports.append(support)
        first_lambdas.append(float(lam))

    logger.debug("path produced %d candidate supports", len(supports))
    return CandidateSequence(
        supports=supports,
        lambda_grid=path.lambdas,
        first_lambdas=first_lambdas,
        skipped_lambdas=path.skipped_lambdas,
    )


def refit_candidates(
    family: GlmFamily,
    design: np.ndarray,
    response: np.ndarray,
    seq: CandidateSequence,
    fit_intercept: bool | None = None,
    options: FitOptions | None = None,
) -> list[FitResult]:
    """Unpenalized QMLE on every support; failures come back as rejected entries."""
    if len(seq) == 0:
        raise DataError("cannot refit an empty candidate sequence")
    Z = np.asarray(design, dtype=float)
    if fit_intercept is None:
        fit_intercept = family.default_fit_intercept
    options = (options or FitOptions()).model_copy(update={"fit_intercept": fit_intercept})

    fits = []
    for support in seq:
        try:
            fit = fit_qmle(family, Z[:, list(support.indices)], response, options, support=support)
        except RankDeficientError as e:
            logger.debug("rejecting support %s: %s", support, e)
            fits.append(FitResult.rejected_fit(support, f"rank deficient: {e}", fit_intercept))
            continue
        if not fit.converged and fit.rejection_reason is None:
            fit = replace(fit, rejection_reason=f"did not converge after {fit.iterations} iterations")
        fits.append(fit)
    return fits
