"""Plug-in estimates of the covariance contrast matrix Ĥ = Â⁻¹B̂.

Â is the working-model information at the QMLE and B̂ the empirical covariance of the
score contributions. Under correct specification Ĥ is close to the identity, so
tr(Ĥ) − log|Ĥ| measures how far the working model is from the truth.
"""

import logging

import numpy as np
from scipy import linalg

from hgbic.errors import DataError, NotPositiveDefiniteError
from hgbic.families import GlmFamily
from hgbic.models import ContrastEstimate, FitResult

logger = logging.getLogger(__name__)

EIG_FLOOR = 1e-8


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _check(design_sub: np.ndarray, beta_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(design_sub, dtype=float)
    beta = np.asarray(beta_hat, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise DataError(f"coefficient vector of length {beta.shape[0]} does not match design {X.shape}")
    if not np.all(np.isfinite(beta)):
        raise DataError("beta_hat contains non-finite values")
    return X, beta


def estimate_A(family: GlmFamily, design_sub: np.ndarray, beta_hat: np.ndarray, dispersion: float = 1.0) -> np.ndarray:
    """Â = XᵀΣ(Xβ̂)X with Σ = diag{b″(θᵢ)}, over τ for the Gaussian family."""
    X, beta = _check(design_sub, beta_hat)
    weights = family.variance(X @ beta)
    a_hat = X.T @ (X * weights[:, None])
    if family.is_gaussian:
        a_hat = a_hat / dispersion
    return _symmetrize(a_hat)


def estimate_B(
    family: GlmFamily,
    design_sub: np.ndarray,
    response: np.ndarray,
    beta_hat: np.ndarray,
    dispersion: float = 1.0,
) -> np.ndarray:
    """B̂ = Xᵀdiag{r∘r}X with r = y − μ(Xβ̂), over τ² for the Gaussian family."""
    X, beta = _check(design_sub, beta_hat)
    y = np.asarray(response, dtype=float)
    if y.shape != (X.shape[0],):
        raise DataError(f"response of shape {y.shape} does not match design {X.shape}")
    residual = y - family.mean(X @ beta)
    b_hat = X.T @ (X * (residual**2)[:, None])
    if family.is_gaussian:
        b_hat = b_hat / dispersion**2
    return _symmetrize(b_hat)


def contrast_summary(a_hat: np.ndarray, b_hat: np.ndarray, eig_floor: float = EIG_FLOOR) -> ContrastEstimate:
    """Trace and log-determinant of Ĥ from the symmetric-definite pencil (B̂, Â)."""
    A = np.atleast_2d(np.asarray(a_hat, dtype=float))
    B = np.atleast_2d(np.asarray(b_hat, dtype=float))
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise DataError(f"Â {A.shape} and B̂ {B.shape} must be square matrices of the same size")
    if not eig_floor > 0:
        raise DataError("eig_floor must be positive")

    if A.shape[0] == 0:
        return ContrastEstimate(A, B, 0.0, 0.0, np.inf, False, np.empty(0))

    try:
        linalg.cholesky(A, lower=True)
        eigenvalues = linalg.eigh(B, A, eigvals_only=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"Â is not positive definite: {e}") from e

    clamped = bool(np.any(eigenvalues < eig_floor))
    logdet = float(np.sum(np.log(np.maximum(eigenvalues, eig_floor))))
    if clamped:
        logger.debug("contrast eigenvalue %.3e floored at %.1e", eigenvalues[0], eig_floor)

    return ContrastEstimate(
        a_hat=A,
        b_hat=B,
        trace_h=float(np.sum(eigenvalues)),
        logdet_h=logdet,
        min_eig_h=float(eigenvalues[0]),
        clamped=clamped,
        eigenvalues=eigenvalues,
    )


def estimate_contrast(
    family: GlmFamily,
    fit: FitResult,
    design_sub: np.ndarray,
    response: np.ndarray,
    eig_floor: float = EIG_FLOOR,
) -> ContrastEstimate:
    """Ĥ for a fitted candidate, over every fitted parameter including an intercept."""
    X = fit.working_design(np.asarray(design_sub, dtype=float))
    a_hat = estimate_A(family, X, fit.coef, fit.dispersion_hat)
    b_hat = estimate_B(family, X, response, fit.coef, fit.dispersion_hat)
    return contrast_summary(a_hat, b_hat, eig_floor)


def contrast_for_candidate(
    family: GlmFamily,
    fit: FitResult,
    design: np.ndarray,
    response: np.ndarray,
    eig_floor: float = EIG_FLOOR,
) -> ContrastEstimate | None:
    """Ĥ for a refitted candidate on the full design, or None when it has no usable estimate."""
    if fit.rejected:
        return None
    try:
        return estimate_contrast(family, fit, np.asarray(design)[:, list(fit.support.indices)], response, eig_floor)
    except NotPositiveDefiniteError as e:
        logger.debug("no contrast for support %s: %s", fit.support, e)
        return None
