"""Information criteria for fitted candidates and argmin selection.

Every criterion is −2ℓ̂ plus a complexity penalty plus a misspecification penalty; the
penalty pair for each tag comes from a replaceable formula so the baseline forms can be
swapped without touching the selection code.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

from hgbic.errors import DataError, EmptySelectionError, NumericalError
from hgbic.models import (
    ContrastEstimate,
    CriterionComponents,
    CriterionKind,
    CriterionTag,
    CriterionValue,
    FitResult,
    SelectionResult,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyInputs:
    d: int
    n: int
    p: int
    trace_h: float
    logdet_h: float
    zeta: float = 1.0

    @property
    def log_p_star(self) -> float:
        """log p* with p* = p·n^{1/2}."""
        return math.log(self.p * math.sqrt(self.n))


PenaltyFormula = Callable[[PenaltyInputs], tuple[float, float]]


def _hgbic_p(x: PenaltyInputs) -> tuple[float, float]:
    return 2.0 * x.d * x.log_p_star, x.trace_h - x.logdet_h


def _hgbic_p_zeta(x: PenaltyInputs) -> tuple[float, float]:
    complexity, misspec = _hgbic_p(x)
    return x.zeta * complexity, x.zeta * misspec


_DEFAULT_FORMULAS: dict[CriterionTag, PenaltyFormula] = {
    CriterionTag.AIC: lambda x: (2.0 * x.d, 0.0),
    CriterionTag.BIC: lambda x: (x.d * math.log(x.n), 0.0),
    CriterionTag.GAIC: lambda x: (0.0, 2.0 * x.trace_h),
    CriterionTag.GBIC: lambda x: (x.d * math.log(x.n), -x.logdet_h),
    CriterionTag.GBIC_P: lambda x: (x.d * math.log(x.n), x.trace_h - x.logdet_h),
    CriterionTag.HGBIC_P: _hgbic_p,
    CriterionTag.HGBIC_P_ZETA: _hgbic_p_zeta,
}

_formulas: dict[CriterionTag, PenaltyFormula] = dict(_DEFAULT_FORMULAS)

# criteria that never look at Ĥ
_CONTRAST_FREE = {CriterionTag.AIC, CriterionTag.BIC}


def register_criterion(tag: CriterionTag | str, formula: PenaltyFormula) -> None:
    """Replace the penalty formula of a criterion; it returns (complexity, misspecification)."""
    _formulas[CriterionTag(tag)] = formula


def reset_criteria() -> None:
    _formulas.clear()
    _formulas.update(_DEFAULT_FORMULAS)


def _rejected_value(kind: CriterionKind, fit: FitResult, reason: str) -> CriterionValue:
    return CriterionValue(
        kind=kind,
        value=math.inf,
        components=CriterionComponents(math.inf, 0.0, 0.0),
        support_size=fit.d,
        rejection_reason=reason,
    )


def evaluate(
    kind: CriterionKind,
    fit: FitResult,
    contrast: ContrastEstimate | None,
    n: int,
    p: int,
) -> CriterionValue:
    if n < 2 or p < 1:
        raise DataError(f"criteria need n >= 2 and p >= 1 (got n={n}, p={p})")
    if fit.rejected:
        return _rejected_value(kind, fit, fit.rejection_reason or "did not converge")

    needs_contrast = kind.tag not in _CONTRAST_FREE
    if needs_contrast:
        if contrast is None:
            return _rejected_value(kind, fit, "no contrast estimate")
        if not (math.isfinite(contrast.trace_h) and math.isfinite(contrast.logdet_h)) and not contrast.clamped:
            raise NumericalError(f"non-finite contrast summary for support {fit.support}")
        trace_h, logdet_h = contrast.trace_h, contrast.logdet_h
    else:
        trace_h, logdet_h = 0.0, 0.0

    inputs = PenaltyInputs(
        d=fit.d,
        n=n,
        p=p,
        trace_h=trace_h,
        logdet_h=logdet_h,
        zeta=kind.zeta if kind.zeta is not None else 1.0,
    )
    complexity, misspec = _formulas[kind.tag](inputs)
    neg2_loglik = -2.0 * fit.loglik
    return CriterionValue(
        kind=kind,
        value=neg2_loglik + complexity + misspec,
        components=CriterionComponents(neg2_loglik, complexity, misspec),
        support_size=fit.d,
    )


def evaluate_all(
    kinds: Sequence[CriterionKind],
    fits: Sequence[FitResult],
    contrasts: Sequence[ContrastEstimate | None],
    n: int,
    p: int,
) -> dict[str, list[CriterionValue]]:
    if len(fits) != len(contrasts):
        raise DataError("every fit needs a (possibly missing) contrast estimate")
    return {
        kind.label: [evaluate(kind, fit, contrast, n, p) for fit, contrast in zip(fits, contrasts, strict=True)]
        for kind in kinds
    }


def select(values: Sequence[CriterionValue], fits: Sequence[FitResult] | None = None) -> SelectionResult:
    """Argmin over non-rejected candidates.

    Ties go to the smallest support, then to the earliest candidate.
    """
    if fits is not None and len(fits) != len(values):
        raise DataError("values and fits must describe the same candidates")
    sizes = [fit.d for fit in fits] if fits is not None else [v.support_size for v in values]
    eligible = [i for i, v in enumerate(values) if not v.rejected and math.isfinite(v.value)]
    if not eligible:
        raise EmptySelectionError("every candidate model was rejected")

    best = min(values[i].value for i in eligible)
    tied = [i for i in eligible if values[i].value == best]
    chosen = min(tied, key=lambda i: (sizes[i], i))
    if len(tied) > 1:
        logger.debug("tie between candidates %s broken in favour of %d", tied, chosen)
    return SelectionResult(chosen_index=chosen, per_candidate=list(values), tie_break_used=len(tied) > 1)
