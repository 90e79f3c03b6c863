"""Quasi-log-likelihood, score and quasi-maximum likelihood fitting on a fixed support."""

import logging

import numpy as np
from scipy import linalg

from hgbic.errors import DataError, RankDeficientError
from hgbic.families import GlmFamily
from hgbic.models import Dataset, FitOptions, FitResult, ModelSupport

logger = logging.getLogger(__name__)


def _check_inputs(design_sub: np.ndarray, response: np.ndarray, beta: np.ndarray | None = None):
    X = np.asarray(design_sub, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2:
        raise DataError("design must be a 2-d matrix")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DataError(f"response of shape {y.shape} does not match design of shape {X.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("design or response contains non-finite values")
    if beta is None:
        return X, y, None
    b = np.asarray(beta, dtype=float).reshape(-1)
    if b.shape[0] != X.shape[1]:
        raise DataError(f"coefficient vector has {b.shape[0]} entries for {X.shape[1]} columns")
    if not np.all(np.isfinite(b)):
        raise DataError("coefficients contain non-finite values")
    return X, y, b


def validate_dataset(family: GlmFamily, dataset: Dataset) -> Dataset:
    family.validate_response(dataset.response)
    return dataset


def check_rank(design_sub: np.ndarray, rtol: float = 1e-10) -> None:
    """Reject submatrices whose smallest singular value is below rtol times the largest."""
    X = np.asarray(design_sub, dtype=float)
    n, d = X.shape
    if d == 0:
        return
    if d > n:
        raise RankDeficientError(f"{d} columns cannot have full rank with {n} rows")
    singular_values = linalg.svdvals(X)
    if singular_values[0] == 0.0 or singular_values[-1] <= rtol * singular_values[0]:
        raise RankDeficientError(
            f"support submatrix is rank deficient (condition ratio {singular_values[-1] / max(singular_values[0], 1e-300):.3e})"
        )


def log_likelihood(
    family: GlmFamily,
    design_sub: np.ndarray,
    response: np.ndarray,
    beta: np.ndarray,
    dispersion: float = 1.0,
) -> float:
    """ℓ_n(y, β) = [yᵀXβ − 1ᵀb(Xβ)]/τ + Σ c(yᵢ, τ)."""
    if not dispersion > 0:
        raise DataError(f"dispersion must be positive, got {dispersion}")
    X, y, b = _check_inputs(design_sub, response, beta)
    theta = X @ b
    if not family.is_gaussian:
        dispersion = 1.0
    return float((y @ theta - family.cumulant(theta).sum()) / dispersion + family.log_normalizer(y, dispersion))


def score(family: GlmFamily, design_sub: np.ndarray, response: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Xᵀ[y − μ(Xβ)]."""
    X, y, b = _check_inputs(design_sub, response, beta)
    return X.T @ (y - family.mean(X @ b))


def _concave_objective(family: GlmFamily, X: np.ndarray, target: np.ndarray, beta: np.ndarray) -> float:
    theta = X @ beta
    return float(target @ theta - family.cumulant(theta).sum())


def _clamp_step(eta: np.ndarray, direction: np.ndarray, limit: float) -> float:
    """Largest t ≤ 1 keeping ‖η + t·direction‖∞ ≤ limit."""
    t = 1.0
    up = direction > 0
    down = direction < 0
    if np.any(up):
        t = min(t, float(np.min((limit - eta[up]) / direction[up])))
    if np.any(down):
        t = min(t, float(np.min((-limit - eta[down]) / direction[down])))
    return max(t, 0.0)


def newton_maximize(
    family: GlmFamily,
    X: np.ndarray,
    target: np.ndarray,
    max_iter: int,
    tol: float,
    eta_clamp: float,
    beta0: np.ndarray | None = None,
) -> tuple[np.ndarray, int, bool, float, bool]:
    """Damped Newton ascent of targetᵀXβ − 1ᵀb(Xβ) with step halving.

    The linear predictor is kept inside [−eta_clamp, eta_clamp]. Returns
    (beta, iterations, converged, score sup-norm, clamp binding at exit).
    """
    d = X.shape[1]
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    objective = _concave_objective(family, X, target, beta)
    grad = X.T @ (target - family.mean(X @ beta))
    iterations = 0

    for iterations in range(1, max_iter + 1):
        grad_norm = float(np.max(np.abs(grad))) if d else 0.0
        if grad_norm <= tol:
            return beta, iterations - 1, True, grad_norm, False

        eta = X @ beta
        weights = family.variance(eta)
        hessian = X.T @ (X * weights[:, None])
        try:
            step = linalg.solve(hessian, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            logger.debug("Newton system not positive definite, falling back to least squares")
            step = linalg.lstsq(hessian, grad)[0]

        direction = X @ step
        t = _clamp_step(eta, direction, eta_clamp)
        accepted = False
        while t > 1e-12:
            candidate = beta + t * step
            candidate_objective = _concave_objective(family, X, target, candidate)
            if candidate_objective >= objective - 1e-12 * max(1.0, abs(objective)):
                accepted = True
                break
            t *= 0.5

        if not accepted or t * float(np.max(np.abs(step))) <= 1e-14 * (1.0 + float(np.max(np.abs(beta)))):
            break
        beta = candidate
        objective = candidate_objective
        grad = X.T @ (target - family.mean(X @ beta))

    grad_norm = float(np.max(np.abs(grad))) if d else 0.0
    clamp_binding = bool(d) and float(np.max(np.abs(X @ beta))) >= eta_clamp * (1.0 - 1e-9)
    return beta, iterations, grad_norm <= tol, grad_norm, clamp_binding


def fit_qmle(
    family: GlmFamily,
    design_sub: np.ndarray,
    response: np.ndarray,
    opts: FitOptions | None = None,
    support: ModelSupport | None = None,
) -> FitResult:
    """Fit the working model on a support by quasi-maximum likelihood.

    Raises RankDeficientError when the (working) design fails the rank check; the caller
    decides whether that rejects a candidate or aborts.
    """
    opts = opts or FitOptions()
    X_sub, y, _ = _check_inputs(design_sub, response)
    family.validate_response(y)
    n, d = X_sub.shape
    if support is None:
        support = ModelSupport(tuple(range(d)))
    elif support.size != d:
        raise DataError(f"support of size {support.size} does not match {d} design columns")

    X = np.column_stack((np.ones(n), X_sub)) if opts.fit_intercept else X_sub
    check_rank(X, opts.rank_rtol)
    tol = opts.resolve_tol(n)

    if family.is_gaussian:
        coef = linalg.lstsq(X, y)[0]
        # one step of iterative refinement tightens the normal equations
        coef = coef + linalg.lstsq(X, y - X @ coef)[0]
        residual = y - X @ coef
        grad_norm = float(np.max(np.abs(X.T @ residual))) if X.shape[1] else 0.0
        # closed form on a full-rank design; the score is zero up to rounding at any scale
        iterations, converged, separated = 1, True, False
    else:
        coef, iterations, converged, grad_norm, separated = newton_maximize(
            family, X, y, opts.max_iter, tol, opts.eta_clamp
        )
        if separated:
            converged = False
            logger.debug("separation detected on support %s", support)
        elif not converged:
            logger.debug("QMLE did not converge on support %s after %d iterations", support, iterations)

    loglik = log_likelihood(family, X, y, coef, family.dispersion)
    intercept = float(coef[0]) if opts.fit_intercept else 0.0
    beta_hat = coef[1:] if opts.fit_intercept else coef

    return FitResult(
        support=support,
        beta_hat=beta_hat,
        loglik=loglik,
        dispersion_hat=family.dispersion,
        iterations=iterations,
        converged=converged,
        score_sup_norm=grad_norm,
        separation_flag=separated,
        intercept=intercept,
        fit_intercept=opts.fit_intercept,
        rejection_reason="quasi-complete separation" if separated else None,
    )
