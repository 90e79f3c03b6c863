"""Simulation benchmarks for model selection under misspecification.

Two data-generating designs are provided: a multiple index model fitted by a linear working
model, and a logistic model with two omitted interaction terms. Each replication builds a
candidate sequence, refits it, scores every configured criterion and compares the selected
model against the oracle working model.

Seeds: replication r draws from numpy ``Generator(PCG64(derive_seed(base_seed, r)))``, a
SplitMix64 mix of the base seed and r. Within a replication the draws are taken in the order
training design, training noise/labels, test design, test noise/labels.
"""

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np
from scipy import linalg
from scipy.special import expit

from hgbic.contrast import contrast_for_candidate, estimate_contrast
from hgbic.criteria import evaluate, select
from hgbic.errors import DataError, EmptySelectionError, HgbicError, NumericalError
from hgbic.families import GlmFamily
from hgbic.glm import check_rank, fit_qmle, newton_maximize
from hgbic.models import (
    ContrastEstimate,
    CriterionKind,
    CriterionMetrics,
    Dataset,
    FitOptions,
    FitResult,
    MetricsReport,
    ModelSupport,
    ReplicationOutcome,
    ReplicationRecord,
    Scenario,
    SimulationConfig,
    SweepPoint,
    TraceGapPoint,
    TrueModelSpec,
)
from hgbic.pathgen import lasso_path, refit_candidates

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
ORACLE_LABEL = "oracle"
TRACE_CHECK_BETA = np.array([1.0, -0.5, 0.5])


def derive_seed(base_seed: int, index: int) -> int:
    """SplitMix64 finalizer applied to base_seed + (index + 1)·γ."""
    z = (base_seed + (index + 1) * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def index_link(x: np.ndarray) -> np.ndarray:
    """f(x) = x³/(x² + 1)."""
    x = np.asarray(x, dtype=float)
    return x**3 / (x**2 + 1.0)


def multiple_index_signal(design: np.ndarray, beta0: np.ndarray) -> np.ndarray:
    Z = design
    return (
        index_link(beta0[0] * Z[:, 0])
        + index_link(beta0[1] * Z[:, 1] + beta0[2] * Z[:, 2])
        + index_link(beta0[3] * Z[:, 3] + beta0[4] * Z[:, 4])
    )


def interaction_linear_predictor(design: np.ndarray, beta0: np.ndarray) -> np.ndarray:
    """θ = Zβ₀ + 2·z₁z₂ + 2·z₃z₄; the interaction columns are never part of the fitted design."""
    Z = design
    return Z @ beta0 + 2.0 * Z[:, 0] * Z[:, 1] + 2.0 * Z[:, 2] * Z[:, 3]


def generate_multiple_index(
    n: int,
    p: int,
    spec: TrueModelSpec,
    seed: int,
    test_size: int = 10000,
) -> tuple[Dataset, Dataset]:
    if p < 5:
        raise DataError("the multiple index design needs p >= 5")
    rng = make_rng(seed)
    sigma = spec.sigma if spec.sigma is not None else 0.8

    def draw(rows: int) -> Dataset:
        Z = rng.standard_normal((rows, p))
        noise = rng.standard_normal(rows)
        return Dataset(response=multiple_index_signal(Z, spec.beta0) + sigma * noise, design=Z)

    train = draw(n)
    return train, draw(test_size)


def generate_logistic_interaction(
    n: int,
    p: int,
    spec: TrueModelSpec,
    seed: int,
    test_size: int = 10000,
) -> tuple[Dataset, Dataset]:
    if p < 5:
        raise DataError("the logistic interaction design needs p >= 5")
    rng = make_rng(seed)

    def draw(rows: int) -> Dataset:
        Z = rng.standard_normal((rows, p))
        probability = expit(interaction_linear_predictor(Z, spec.beta0))
        labels = (rng.random(rows) < probability).astype(float)
        return Dataset(response=labels, design=Z)

    train = draw(n)
    return train, draw(test_size)


def generate(config: SimulationConfig, seed: int) -> tuple[Dataset, Dataset]:
    spec = TrueModelSpec.for_scenario(config.scenario, config.p)
    if config.scenario is Scenario.MULTIPLE_INDEX:
        return generate_multiple_index(config.n, config.p, spec, seed, config.test_size)
    return generate_logistic_interaction(config.n, config.p, spec, seed, config.test_size)


def estimate_pseudo_true(
    family: GlmFamily,
    design_sub: np.ndarray,
    mean_response: np.ndarray,
    opts: FitOptions | None = None,
) -> np.ndarray:
    """Solve the population score equation Xᵀ[EY − μ(Xβ)] = 0."""
    opts = opts or FitOptions()
    X = np.asarray(design_sub, dtype=float)
    target = np.asarray(mean_response, dtype=float)
    if target.shape != (X.shape[0],):
        raise DataError(f"mean response of shape {target.shape} does not match design {X.shape}")
    check_rank(X, opts.rank_rtol)
    if family.is_gaussian:
        return linalg.lstsq(X, target)[0]
    tol = opts.tol_score if opts.tol_score is not None else 1e-12 * X.shape[0]
    beta, iterations, converged, grad_norm, _ = newton_maximize(
        family, X, target, opts.max_iter, tol, opts.eta_clamp
    )
    if not converged:
        raise NumericalError(f"pseudo-true solve stopped after {iterations} iterations (score {grad_norm:.3e})")
    return beta


def compute_metrics(
    selected: ModelSupport,
    oracle: ModelSupport,
    fit: FitResult,
    test: Dataset,
    scenario: Scenario,
    clamped: bool = False,
) -> ReplicationRecord:
    if test.n < 1:
        raise DataError("test set is empty")
    chosen, truth = selected.as_set(), oracle.as_set()
    false_positives = len(chosen - truth)
    eta = fit.linear_predictor(test.design)
    if Scenario(scenario) is Scenario.MULTIPLE_INDEX:
        error = float(np.mean((test.response - eta) ** 2))
    else:
        error = float(np.mean((expit(eta) > 0.5) != (test.response == 1.0)))
    return ReplicationRecord(
        consistent=chosen == truth,
        sure=truth <= chosen,
        false_positives=false_positives,
        fdp=false_positives / max(len(chosen), 1),
        tpr=len(chosen & truth) / len(truth),
        error=error,
        model_size=len(chosen),
        clamped=clamped,
    )


def _score_selection(
    kind: CriterionKind,
    fits: list[FitResult],
    contrasts: list[ContrastEstimate | None],
    train: Dataset,
    test: Dataset,
    oracle: ModelSupport,
    scenario: Scenario,
) -> tuple[ModelSupport, ReplicationRecord] | None:
    values = [evaluate(kind, fit, contrast, train.n, train.p) for fit, contrast in zip(fits, contrasts, strict=True)]
    try:
        selection = select(values, fits)
    except EmptySelectionError:
        logger.warning("every candidate was rejected under %s", kind.label)
        return None
    chosen = selection.chosen_index
    contrast = contrasts[chosen]
    record = compute_metrics(
        fits[chosen].support, oracle, fits[chosen], test, scenario, clamped=bool(contrast and contrast.clamped)
    )
    return fits[chosen].support, record


def run_replication(config: SimulationConfig, index: int) -> ReplicationOutcome:
    """One independent replication; a pure function of the config and the index."""
    seed = derive_seed(config.base_seed, index)
    outcome = ReplicationOutcome(index=index, seed=seed)
    family = GlmFamily.from_name(config.family_name)
    oracle = TrueModelSpec.for_scenario(config.scenario, config.p).oracle_support
    fit_intercept = config.path_config.fit_intercept
    if fit_intercept is None:
        fit_intercept = family.default_fit_intercept

    try:
        train, test = generate(config, seed)
        Z, y = train.design, train.response

        oracle_fit = fit_qmle(
            family, train.submatrix(oracle), y, FitOptions(fit_intercept=fit_intercept), support=oracle
        )
        outcome.oracle_error = compute_metrics(oracle, oracle, oracle_fit, test, config.scenario).error

        seq = lasso_path(family, Z, y, config.path_config)
        if len(seq) == 0:
            raise EmptySelectionError("the regularization path produced no candidates")
        fits = refit_candidates(family, Z, y, seq, fit_intercept=fit_intercept)
        contrasts = [contrast_for_candidate(family, fit, Z, y) for fit in fits]
        outcome.n_candidates = len(fits)

        for kind in config.criteria:
            scored = _score_selection(kind, fits, contrasts, train, test, oracle, config.scenario)
            if scored is not None:
                outcome.selections[kind.label], outcome.records[kind.label] = scored

        for zeta in config.zeta_grid or ():
            kind = CriterionKind.zeta_family(zeta)
            scored = _score_selection(kind, fits, contrasts, train, test, oracle, config.scenario)
            if scored is not None:
                outcome.zeta_selections[zeta], outcome.zeta_records[zeta] = scored
    except HgbicError as e:
        logger.warning("replication %d failed: %s", index, e)
        outcome.failure = str(e)

    return outcome


def run_replications(
    config: SimulationConfig,
    workers: int = 1,
    on_replication: Callable[[ReplicationOutcome], None] | None = None,
) -> list[ReplicationOutcome]:
    """Run every replication, in parallel when workers > 1, returned in index order."""
    outcomes: dict[int, ReplicationOutcome] = {}
    if workers <= 1:
        for index in range(config.n_reps):
            outcomes[index] = run_replication(config, index)
            if on_replication:
                on_replication(outcomes[index])
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(run_replication, config, index): index for index in range(config.n_reps)}
            for future in as_completed(futures):
                outcome = future.result()
                outcomes[futures[future]] = outcome
                if on_replication:
                    on_replication(outcome)
    return [outcomes[index] for index in range(config.n_reps)]


def _mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    data = np.asarray(values, dtype=float)
    se = float(data.std(ddof=1) / math.sqrt(data.size)) if data.size > 1 else 0.0
    return float(data.mean()), se


def _aggregate(label: str, records: Sequence[ReplicationRecord], n_reps: int) -> CriterionMetrics:
    """Rates count missing records as failures; averages run over the records present."""
    mean_error, se_error = _mean_and_se([r.error for r in records])

    def average(values):
        return float(np.mean(values)) if records else 0.0

    return CriterionMetrics(
        criterion=label,
        consistent_selection_rate=sum(r.consistent for r in records) / n_reps,
        sure_screening_rate=sum(r.sure for r in records) / n_reps,
        mean_error=mean_error,
        se_error=se_error,
        mean_false_positives=average([r.false_positives for r in records]),
        mean_model_size=average([r.model_size for r in records]),
        mean_fdp=average([r.fdp for r in records]),
        mean_tpr=average([r.tpr for r in records]),
        clamped_fraction=average([r.clamped for r in records]),
    )


def sweep_curve(config: SimulationConfig, outcomes: Sequence[ReplicationOutcome]) -> list[SweepPoint]:
    points = []
    for zeta in config.zeta_grid or ():
        records = [o.zeta_records[zeta] for o in outcomes if zeta in o.zeta_records]
        points.append(
            SweepPoint(
                zeta=zeta,
                mean_fdp=float(np.mean([r.fdp for r in records])) if records else math.nan,
                mean_tpr=float(np.mean([r.tpr for r in records])) if records else math.nan,
            )
        )
    return points


def build_report(config: SimulationConfig, outcomes: Sequence[ReplicationOutcome]) -> MetricsReport:
    """Deterministic reduction over replications ordered by index."""
    outcomes = sorted(outcomes, key=lambda o: o.index)
    criteria = [
        _aggregate(kind.label, [o.records[kind.label] for o in outcomes if kind.label in o.records], config.n_reps)
        for kind in config.criteria
    ]
    oracle_errors = [o.oracle_error for o in outcomes if math.isfinite(o.oracle_error)]
    mean_error, se_error = _mean_and_se(oracle_errors)
    oracle = CriterionMetrics(
        criterion=ORACLE_LABEL,
        consistent_selection_rate=1.0,
        sure_screening_rate=1.0,
        mean_error=mean_error,
        se_error=se_error,
        mean_false_positives=0.0,
        mean_model_size=5.0,
        mean_fdp=0.0,
        mean_tpr=1.0,
    )
    failed = sum(o.failed for o in outcomes)
    if failed:
        logger.warning("%d of %d replications failed and count as inconsistent selections", failed, config.n_reps)
    return MetricsReport(
        scenario=config.scenario,
        n=config.n,
        p=config.p,
        n_reps=config.n_reps,
        base_seed=config.base_seed,
        criteria=criteria,
        oracle=oracle,
        failed_replications=failed,
        fdp_tpr_curve=sweep_curve(config, outcomes) if config.zeta_grid else None,
    )


def run_experiment(
    config: SimulationConfig,
    workers: int = 1,
    on_replication: Callable[[ReplicationOutcome], None] | None = None,
) -> MetricsReport:
    return build_report(config, run_replications(config, workers, on_replication))


def zeta_sweep(
    config: SimulationConfig,
    workers: int = 1,
    on_replication: Callable[[ReplicationOutcome], None] | None = None,
) -> list[SweepPoint]:
    """Mean FDP and TPR of HGBIC_{p,ζ} over the grid; fits are shared across ζ in each replication."""
    if not config.zeta_grid:
        raise DataError("zeta_sweep needs a non-empty zeta_grid")
    return sweep_curve(config, run_replications(config, workers, on_replication))


def benchmark_config(scenario: Scenario | str, p: int, n_reps: int = 100, **overrides) -> SimulationConfig:
    """Standard benchmark settings at dimension p: n=200 for the multiple index model, n=300 for the logistic one."""
    scenario = Scenario(scenario)
    n = 200 if scenario is Scenario.MULTIPLE_INDEX else 300
    return SimulationConfig(**{"scenario": scenario, "n": n, "p": p, "n_reps": n_reps, **overrides})


def trace_consistency(
    n_grid: Sequence[int] = (500, 2000, 8000),
    n_reps: int = 50,
    base_seed: int = 20240101,
    d: int = 3,
) -> list[TraceGapPoint]:
    """Mean |tr(Ĥ) − d| for a correctly specified logistic model as n grows.

    The true coefficients cycle through 1, −0.5, 0.5 over the d standard normal covariates.
    """
    if d < 1:
        raise DataError(f"d must be at least 1, got {d}")
    family = GlmFamily.from_name("bernoulli_logit")
    beta = np.resize(TRACE_CHECK_BETA, d)
    points = []
    for n in n_grid:
        gaps = []
        for rep in range(n_reps):
            rng = make_rng(derive_seed(derive_seed(base_seed, n), rep))
            X = rng.standard_normal((n, d))
            y = (rng.random(n) < expit(X @ beta)).astype(float)
            fit = fit_qmle(family, X, y)
            if fit.rejected:
                raise NumericalError(f"correctly specified logistic fit failed at n={n}, replication {rep}")
            gaps.append(abs(estimate_contrast(family, fit, X, y).trace_h - d))
        points.append(TraceGapPoint(n=n, mean_abs_trace_gap=float(np.mean(gaps))))
    return points
