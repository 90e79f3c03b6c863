"""Working-model families with canonical links.

A family supplies the cumulant b(θ) and its first two derivatives. The density is
exp{[yθ − b(θ)]/τ + c(y, τ)} with θ the linear predictor.
"""

import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy.special import expit

from hgbic.errors import DataError


class FamilyKind(StrEnum):
    GAUSSIAN = "gaussian"
    BERNOULLI_LOGIT = "bernoulli_logit"


@dataclass(frozen=True)
class GlmFamily:
    kind: FamilyKind
    dispersion: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if not (math.isfinite(self.dispersion) and self.dispersion > 0):
            raise DataError(f"dispersion must be a positive finite number, got {self.dispersion}")
        if self.kind is FamilyKind.BERNOULLI_LOGIT and self.dispersion != 1.0:
            raise DataError("bernoulli_logit has its dispersion fixed to 1")

    @classmethod
    def from_name(cls, name: str, dispersion: float = 1.0) -> "GlmFamily":
        try:
            kind = FamilyKind(name.lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(k.value for k in FamilyKind)
            raise DataError(f"Unknown family '{name}' (expected one of: {choices})") from None
        return cls(kind, dispersion)

    @property
    def is_gaussian(self) -> bool:
        return self.kind is FamilyKind.GAUSSIAN

    @property
    def default_fit_intercept(self) -> bool:
        # Gaussian working models are fitted through the origin; the logit scale is not centered.
        return self.kind is FamilyKind.BERNOULLI_LOGIT

    def cumulant(self, theta: np.ndarray) -> np.ndarray:
        """b(θ)."""
        theta = np.asarray(theta, dtype=float)
        if self.is_gaussian:
            return 0.5 * theta**2
        return np.logaddexp(0.0, theta)

    def mean(self, theta: np.ndarray) -> np.ndarray:
        """b′(θ), the mean function of the canonical link."""
        theta = np.asarray(theta, dtype=float)
        if self.is_gaussian:
            return theta
        return expit(theta)

    def variance(self, theta: np.ndarray) -> np.ndarray:
        """b″(θ)."""
        theta = np.asarray(theta, dtype=float)
        if self.is_gaussian:
            return np.ones_like(theta)
        mu = expit(theta)
        return mu * (1.0 - mu)

    def log_normalizer(self, response: np.ndarray, dispersion: float) -> float:
        """Σᵢ c(yᵢ, τ)."""
        y = np.asarray(response, dtype=float)
        if self.is_gaussian:
            return float(-0.5 * y.size * math.log(2.0 * math.pi * dispersion) - y @ y / (2.0 * dispersion))
        return 0.0

    def validate_response(self, response: np.ndarray) -> None:
        y = np.asarray(response, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DataError("response contains non-finite values")
        if self.kind is FamilyKind.BERNOULLI_LOGIT and not np.all((y == 0.0) | (y == 1.0)):
            raise DataError("bernoulli_logit responses must be 0 or 1")


GAUSSIAN = GlmFamily(FamilyKind.GAUSSIAN)
BERNOULLI_LOGIT = GlmFamily(FamilyKind.BERNOULLI_LOGIT)
