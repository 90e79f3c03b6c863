from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from hgbic.errors import DataError


@dataclass(frozen=True)
class ModelSupport:
    """Sorted, duplicate-free column indices into the full design."""

    indices: tuple[int, ...]

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in indices):
            raise DataError(f"support indices must be non-negative: {indices}")
        if any(b <= a for a, b in zip(indices, indices[1:], strict=False)):
            raise DataError(f"support indices must be strictly increasing: {indices}")
        object.__setattr__(self, "indices", indices)

    @classmethod
    def of(cls, indices) -> "ModelSupport":
        """Build a support from any iterable of indices, sorting it and rejecting duplicates."""
        items = [int(i) for i in indices]
        if len(set(items)) != len(items):
            raise DataError(f"support indices must be unique: {items}")
        return cls(tuple(sorted(items)))

    @property
    def size(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __str__(self) -> str:
        return ",".join(str(i) for i in self.indices)

    def as_set(self) -> frozenset[int]:
        return frozenset(self.indices)

    def check_bounds(self, p: int) -> None:
        if self.indices and self.indices[-1] >= p:
            raise DataError(f"support index {self.indices[-1]} out of range for {p} columns")


@dataclass(frozen=True, eq=False)
class Dataset:
    response: np.ndarray
    design: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float)
        Z = np.asarray(self.design, dtype=float)
        if y.ndim != 1:
            raise DataError("response must be a vector")
        if Z.ndim != 2:
            raise DataError("design must be a matrix")
        if Z.shape[0] != y.shape[0]:
            raise DataError(f"design has {Z.shape[0]} rows but response has {y.shape[0]} entries")
        if y.size < 1 or Z.shape[1] < 1:
            raise DataError("dataset needs at least one observation and one column")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Z))):
            raise DataError("dataset contains non-finite entries")
        if self.column_names is not None and len(self.column_names) != Z.shape[1]:
            raise DataError("column_names must label every design column")
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "design", Z)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def submatrix(self, support: ModelSupport) -> np.ndarray:
        support.check_bounds(self.p)
        return self.design[:, list(support.indices)]

    def column_index(self, name: str) -> int:
        if self.column_names is not None and name in self.column_names:
            return self.column_names.index(name)
        try:
            return int(name)
        except ValueError:
            raise DataError(f"Unknown column '{name}'") from None


class FitOptions(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    max_iter: int = Field(100, ge=1)
    tol_score: float | None = Field(None, gt=0)
    eta_clamp: float = Field(30.0, gt=0)
    rank_rtol: float = Field(1e-10, gt=0)
    fit_intercept: bool = False

    def resolve_tol(self, n: int) -> float:
        return self.tol_score if self.tol_score is not None else 1e-8 * n


@dataclass(frozen=True, eq=False)
class FitResult:
    """Quasi-maximum likelihood fit on one support."""

    support: ModelSupport
    beta_hat: np.ndarray
    loglik: float
    dispersion_hat: float
    iterations: int
    converged: bool
    score_sup_norm: float
    separation_flag: bool = False
    intercept: float = 0.0
    fit_intercept: bool = False
    rejection_reason: str | None = None

    @classmethod
    def rejected_fit(cls, support: ModelSupport, reason: str, fit_intercept: bool = False) -> "FitResult":
        return cls(
            support=support,
            beta_hat=np.full(support.size, np.nan),
            loglik=-np.inf,
            dispersion_hat=np.nan,
            iterations=0,
            converged=False,
            score_sup_norm=np.inf,
            fit_intercept=fit_intercept,
            rejection_reason=reason,
        )

    @property
    def d(self) -> int:
        return self.support.size

    @property
    def rejected(self) -> bool:
        return self.rejection_reason is not None or not self.converged

    @property
    def coef(self) -> np.ndarray:
        """All fitted parameters, intercept first when one was fitted."""
        if self.fit_intercept:
            return np.concatenate(([self.intercept], self.beta_hat))
        return self.beta_hat

    def working_design(self, design_sub: np.ndarray) -> np.ndarray:
        if self.fit_intercept:
            return np.column_stack((np.ones(design_sub.shape[0]), design_sub))
        return design_sub

    def linear_predictor(self, design: np.ndarray) -> np.ndarray:
        """Evaluate the fit on a full n×p design; coefficients off the support are zero."""
        eta = design[:, list(self.support.indices)] @ self.beta_hat
        return eta + self.intercept


@dataclass(frozen=True, eq=False)
class ContrastEstimate:
    a_hat: np.ndarray
    b_hat: np.ndarray
    trace_h: float
    logdet_h: float
    min_eig_h: float
    clamped: bool
    eigenvalues: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def misspecification(self) -> float:
        """tr(Ĥ) − log|Ĥ|."""
        return self.trace_h - self.logdet_h


class CriterionTag(StrEnum):
    AIC = "aic"
    BIC = "bic"
    GAIC = "gaic"
    GBIC = "gbic"
    GBIC_P = "gbic_p"
    HGBIC_P = "hgbic_p"
    HGBIC_P_ZETA = "hgbic_p_zeta"


class CriterionKind(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tag: CriterionTag
    zeta: float | None = None

    @model_validator(mode="after")
    def _check_zeta(self):
        if self.tag is CriterionTag.HGBIC_P_ZETA:
            if self.zeta is None or not self.zeta > 0:
                raise ValueError("hgbic_p_zeta needs a positive zeta")
        elif self.zeta is not None:
            raise ValueError(f"{self.tag.value} does not take a zeta")
        return self

    @classmethod
    def parse(cls, text: "str | CriterionKind") -> "CriterionKind":
        """Parse "hgbic_p" or "hgbic_p_zeta:1.5"."""
        if isinstance(text, CriterionKind):
            return text
        tag, _, zeta = str(text).strip().lower().partition(":")
        return cls(tag=CriterionTag(tag), zeta=float(zeta) if zeta else None)

    @classmethod
    def zeta_family(cls, zeta: float) -> "CriterionKind":
        return cls(tag=CriterionTag.HGBIC_P_ZETA, zeta=zeta)

    @property
    def label(self) -> str:
        if self.zeta is None:
            return self.tag.value
        return f"{self.tag.value}:{self.zeta!r}"


BASELINE_CRITERIA: tuple[CriterionKind, ...] = tuple(
    CriterionKind(tag=tag)
    for tag in (
        CriterionTag.AIC,
        CriterionTag.BIC,
        CriterionTag.GAIC,
        CriterionTag.GBIC,
        CriterionTag.GBIC_P,
        CriterionTag.HGBIC_P,
    )
)


@dataclass(frozen=True)
class CriterionComponents:
    neg2_loglik: float
    complexity_penalty: float
    misspec_penalty: float


@dataclass(frozen=True)
class CriterionValue:
    kind: CriterionKind
    value: float
    components: CriterionComponents
    support_size: int
    rejection_reason: str | None = None

    @property
    def rejected(self) -> bool:
        return self.rejection_reason is not None


@dataclass(frozen=True)
class SelectionResult:
    chosen_index: int
    per_candidate: list[CriterionValue]
    tie_break_used: bool

    @property
    def chosen(self) -> CriterionValue:
        return self.per_candidate[self.chosen_index]


class LassoPathConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_lambda: int = Field(100, ge=2)
    lambda_min_ratio: float = Field(1e-3, gt=0, lt=1)
    max_support: int | None = Field(None, ge=1)
    tol_cd: float = Field(1e-7, gt=0)
    max_passes: int = Field(1000, ge=1)
    standardize: bool = True
    fit_intercept: bool | None = None
    max_outer: int = Field(25, ge=1)

    def resolve_max_support(self, n: int) -> int:
        if self.max_support is None:
            return max(1, min(n // 2, 50))
        if self.max_support > n:
            raise DataError(f"max_support={self.max_support} exceeds the sample size {n}")
        return self.max_support


@dataclass(eq=False)
class LassoPath:
    """Solutions along a decreasing λ grid, reported on the original column scale."""

    lambdas: np.ndarray
    coefs: np.ndarray
    intercepts: np.ndarray
    converged: np.ndarray
    objective_traces: list[list[float]]
    skipped_lambdas: list[float] = field(default_factory=list)

    def support_at(self, k: int) -> ModelSupport:
        return ModelSupport(tuple(np.flatnonzero(self.coefs[k]).tolist()))


@dataclass(eq=False)
class CandidateSequence:
    supports: list[ModelSupport]
    lambda_grid: np.ndarray
    first_lambdas: list[float] = field(default_factory=list)
    skipped_lambdas: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.supports)

    def __iter__(self):
        return iter(self.supports)


class Scenario(StrEnum):
    MULTIPLE_INDEX = "multiple_index"
    LOGISTIC_INTERACTION = "logistic_interaction"


@dataclass(frozen=True, eq=False)
class TrueModelSpec:
    beta0: np.ndarray
    oracle_support: ModelSupport
    sigma: float | None = None

    @classmethod
    def for_scenario(cls, scenario: Scenario, p: int) -> "TrueModelSpec":
        if p < 5:
            raise DataError("the simulation designs need p >= 5")
        beta0 = np.zeros(p)
        if Scenario(scenario) is Scenario.MULTIPLE_INDEX:
            beta0[:5] = (1.0, -1.0, 1.0, 1.0, -1.0)
            sigma = 0.8
        else:
            beta0[:5] = (2.5, -1.9, 2.8, -2.2, 3.0)
            sigma = None
        return cls(beta0=beta0, oracle_support=ModelSupport(tuple(range(5))), sigma=sigma)


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: Scenario
    n: int = Field(ge=2)
    p: int = Field(ge=5)
    n_reps: int = Field(100, ge=1)
    base_seed: int = Field(20240101, ge=0, lt=2**64)
    criteria: tuple[CriterionKind, ...] = BASELINE_CRITERIA
    zeta_grid: tuple[float, ...] | None = None
    test_size: int = Field(10000, ge=1)
    path_config: LassoPathConfig = LassoPathConfig()

    @field_validator("criteria", mode="before")
    @classmethod
    def _parse_criteria(cls, value):
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        return tuple(CriterionKind.parse(item) if isinstance(item, str) else item for item in value)

    @field_validator("zeta_grid", mode="before")
    @classmethod
    def _parse_zeta_grid(cls, value):
        if isinstance(value, str):
            value = [float(part) for part in value.split(",") if part.strip()]
        return value

    @field_validator("zeta_grid")
    @classmethod
    def _check_zeta_grid(cls, value):
        if value is not None and (not value or any(z <= 0 for z in value)):
            raise ValueError("zeta_grid must be a non-empty list of positive values")
        return value

    @property
    def family_name(self) -> str:
        return "gaussian" if self.scenario is Scenario.MULTIPLE_INDEX else "bernoulli_logit"


@dataclass(frozen=True)
class ReplicationRecord:
    """Scores of one selected model in one replication."""

    consistent: bool
    sure: bool
    false_positives: int
    fdp: float
    tpr: float
    error: float
    model_size: int
    clamped: bool = False


class CriterionMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    criterion: str
    consistent_selection_rate: float = Field(ge=0, le=1)
    sure_screening_rate: float = Field(ge=0, le=1)
    mean_error: float
    se_error: float
    mean_false_positives: float = Field(ge=0)
    mean_model_size: float = Field(ge=0)
    mean_fdp: float = Field(ge=0, le=1)
    mean_tpr: float = Field(ge=0, le=1)
    clamped_fraction: float = Field(0.0, ge=0, le=1)

    @model_validator(mode="after")
    def _check_rates(self):
        if self.consistent_selection_rate > self.sure_screening_rate:
            raise ValueError("consistent selection rate cannot exceed the sure screening rate")
        return self


class ExperimentRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    criterion: str
    p: int
    n: int
    consistent_pct: float
    sure_pct: float
    mean_err: float
    se_err: float
    mean_fp: float


class SweepPoint(BaseModel):
    """Mean FDP and TPR at one ζ; NaN when no replication produced a selection."""

    model_config = ConfigDict(frozen=True)

    zeta: float
    mean_fdp: float
    mean_tpr: float

    @field_validator("mean_fdp", "mean_tpr")
    @classmethod
    def _check_share(cls, value: float) -> float:
        if not (np.isnan(value) or 0.0 <= value <= 1.0):
            raise ValueError(f"shares must lie in [0, 1], got {value}")
        return value


class MetricsReport(BaseModel):
    scenario: Scenario
    n: int
    p: int
    n_reps: int
    base_seed: int
    criteria: list[CriterionMetrics]
    oracle: CriterionMetrics
    failed_replications: int = 0
    fdp_tpr_curve: list[SweepPoint] | None = None

    def metrics_for(self, label: str) -> CriterionMetrics:
        for metrics in self.criteria:
            if metrics.criterion == label:
                return metrics
        if label == self.oracle.criterion:
            return self.oracle
        raise KeyError(label)

    def to_rows(self) -> list[ExperimentRow]:
        """One row per criterion then the oracle, percentages multiplied by 100."""
        return [
            ExperimentRow(
                criterion=m.criterion,
                p=self.p,
                n=self.n,
                consistent_pct=m.consistent_selection_rate * 100,
                sure_pct=m.sure_screening_rate * 100,
                mean_err=m.mean_error,
                se_err=m.se_error,
                mean_fp=m.mean_false_positives,
            )
            for m in [*self.criteria, self.oracle]
        ]


class Command(StrEnum):
    FIT = "fit"
    SELECT = "select"
    SIMULATE = "simulate"
    SWEEP_ZETA = "sweep-zeta"
    CHECK_CONTRAST = "check-contrast"


class CliConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Command
    input_path: Path | None = None
    config_path: Path | None = None
    output_dir: Path = Path("results")
    seed: int | None = Field(None, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)


class TraceGapPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    mean_abs_trace_gap: float = Field(ge=0)


@dataclass(eq=False)
class ReplicationOutcome:
    """Everything one replication contributes to a report."""

    index: int
    seed: int
    records: dict[str, ReplicationRecord] = field(default_factory=dict)
    selections: dict[str, ModelSupport] = field(default_factory=dict)
    zeta_records: dict[float, ReplicationRecord] = field(default_factory=dict)
    zeta_selections: dict[float, ModelSupport] = field(default_factory=dict)
    oracle_error: float = float("nan")
    n_candidates: int = 0
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None
