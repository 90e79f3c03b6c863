import logging
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from hgbic import __version__
from hgbic.config import load_defaults, load_simulation_config
from hgbic.contrast import contrast_for_candidate, estimate_contrast
from hgbic.criteria import evaluate, evaluate_all, select
from hgbic.errors import ConfigError, DataError, EmptySelectionError, HgbicError, NumericalError
from hgbic.families import FamilyKind, GlmFamily
from hgbic.glm import fit_qmle, validate_dataset
from hgbic.models import (
    BASELINE_CRITERIA,
    CliConfig,
    Command,
    CriterionKind,
    CriterionTag,
    Dataset,
    ExperimentRow,
    FitOptions,
    LassoPathConfig,
    MetricsReport,
    ModelSupport,
    SimulationConfig,
    SweepPoint,
)
from hgbic.pathgen import lasso_path, refit_candidates
from hgbic.simbench import run_experiment, trace_consistency, zeta_sweep

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

EXPERIMENT_COLUMNS = list(ExperimentRow.model_fields)
SWEEP_COLUMNS = list(SweepPoint.model_fields)


def configure_logging(verbose: int, quiet: bool) -> None:
    level = logging.ERROR if quiet else (logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def read_dataset(path: Path, response: str) -> Dataset:
    """Load a numeric CSV; the response column is split off and the rest becomes the design."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Could not read {path}: {e}") from e
    if response not in frame.columns:
        raise DataError(f"{path} has no response column '{response}'")
    non_numeric = [str(c) for c in frame.columns if not pd.api.types.is_numeric_dtype(frame[c])]
    if non_numeric:
        raise DataError(f"non-numeric columns in {path}: {', '.join(non_numeric)}")
    design = frame.drop(columns=[response])
    return Dataset(
        response=frame[response].to_numpy(dtype=float),
        design=design.to_numpy(dtype=float),
        column_names=tuple(str(c) for c in design.columns),
    )


def experiment_csv_path(output_dir: Path, report: MetricsReport) -> Path:
    return output_dir / f"experiment_{report.scenario.value}_p{report.p}.csv"


def sweep_csv_path(output_dir: Path, config: SimulationConfig) -> Path:
    return output_dir / f"sweep_{config.scenario.value}_p{config.p}.csv"


def write_experiment_csv(path: Path, rows: list[ExperimentRow]) -> Path:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=EXPERIMENT_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def read_experiment_csv(path: Path) -> list[ExperimentRow]:
    frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=False, na_values=[""])
    return [ExperimentRow(**record) for record in frame.to_dict(orient="records")]


def write_sweep_csv(path: Path, points: list[SweepPoint]) -> Path:
    frame = pd.DataFrame([point.model_dump() for point in points], columns=SWEEP_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def read_sweep_csv(path: Path) -> list[SweepPoint]:
    frame = pd.read_csv(path, float_precision="round_trip")
    return [SweepPoint(**record) for record in frame.to_dict(orient="records")]


def _ensure_output_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Cannot create output directory {path}: {e}") from e
    return path


def _resolve_runtime(
    command: Command, config_path: Path | None, out: Path, seed, workers, input_path: Path | None = None
) -> CliConfig:
    defaults = load_defaults()
    try:
        return CliConfig(
            command=command,
            input_path=input_path,
            config_path=config_path,
            output_dir=out,
            seed=seed if seed is not None else defaults.get("seed"),
            workers=workers if workers is not None else defaults.get("workers", 1),
        )
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def _working_family(name: str, dispersion: float) -> GlmFamily:
    if name != FamilyKind.GAUSSIAN and dispersion != 1.0:
        raise click.BadParameter("only the gaussian family takes a dispersion", param_hint="--dispersion")
    return GlmFamily.from_name(name, dispersion)


_dispersion_option = click.option(
    "--dispersion",
    type=click.FloatRange(min=0.0, min_open=True),
    default=1.0,
    show_default=True,
    help="Known Gaussian dispersion τ shared by every candidate",
)


def _parse_support(dataset: Dataset, text: str) -> ModelSupport:
    tokens = [token.strip() for token in text.split(",") if token.strip()]
    support = ModelSupport.of(dataset.column_index(token) for token in tokens)
    support.check_bounds(dataset.p)
    return support


def _progress() -> Progress:
    ctx = click.get_current_context(silent=True)
    quiet = bool(ctx and ctx.find_root().params.get("quiet"))
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=err_console,
        disable=quiet,
    )


def _report_table(report: MetricsReport) -> Table:
    table = Table(
        title=f"{report.scenario.value}  n={report.n}  p={report.p}  reps={report.n_reps}",
        show_header=True,
        header_style="bold magenta",
    )
    table.add_column("Criterion")
    table.add_column("Consistent %", justify="right")
    table.add_column("Sure %", justify="right")
    table.add_column("Error (SE)", justify="right")
    table.add_column("FP", justify="right")
    table.add_column("Size", justify="right")
    table.add_column("Clamped %", justify="right")
    for m in [*report.criteria, report.oracle]:
        table.add_row(
            m.criterion,
            f"{100 * m.consistent_selection_rate:.0f}",
            f"{100 * m.sure_screening_rate:.0f}",
            f"{m.mean_error:.3f} ({m.se_error:.3f})",
            f"{m.mean_false_positives:.2f}",
            f"{m.mean_model_size:.2f}",
            f"{100 * m.clamped_fraction:.0f}",
        )
    if report.failed_replications:
        table.caption = f"{report.failed_replications} failed replications count as inconsistent"
    return table


def _sweep_table(points: list[SweepPoint]) -> Table:
    table = Table(title="HGBIC_p,ζ sweep", show_header=True, header_style="bold magenta")
    table.add_column("ζ", justify="right")
    table.add_column("Mean FDP", justify="right")
    table.add_column("Mean TPR", justify="right")
    for point in points:
        table.add_row(f"{point.zeta:g}", f"{point.mean_fdp:.3f}", f"{point.mean_tpr:.3f}")
    return table


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for debug output)")
@click.option("-q", "--quiet", is_flag=True, help="Only log errors")
def cli(verbose: int, quiet: bool):
    """Model selection for misspecified GLMs with the HGBIC_p family of criteria."""
    configure_logging(verbose, quiet)


@cli.command()
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--response", default="y", show_default=True, help="Name of the response column")
@click.option("--family", type=click.Choice([f.value for f in FamilyKind]), default="gaussian", show_default=True)
@click.option("--support", "support_text", required=True, help="Comma-separated column names or indices")
@click.option("--intercept/--no-intercept", default=None, help="Fit an intercept (default: the family's default)")
@_dispersion_option
def fit(input_path: Path, response: str, family: str, support_text: str, intercept: bool | None, dispersion: float):
    """Fit the working model on one support and print its QMLE summary."""
    runtime = _resolve_runtime(Command.FIT, None, Path("results"), None, None, input_path=input_path)
    glm_family = _working_family(family, dispersion)
    dataset = validate_dataset(glm_family, read_dataset(runtime.input_path, response))
    support = _parse_support(dataset, support_text)
    fit_intercept = glm_family.default_fit_intercept if intercept is None else intercept

    result = fit_qmle(glm_family, dataset.submatrix(support), dataset.response, FitOptions(fit_intercept=fit_intercept), support)

    names = dataset.column_names or tuple(str(j) for j in range(dataset.p))
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Term")
    table.add_column("Estimate", justify="right")
    if result.fit_intercept:
        table.add_row("(intercept)", f"{result.intercept:.6g}")
    for j, value in zip(support.indices, result.beta_hat, strict=True):
        table.add_row(names[j], f"{value:.6g}")
    console.print(table)

    console.print(f"Log-likelihood: {result.loglik:.6f}")
    if glm_family.is_gaussian:
        console.print(f"Dispersion: {result.dispersion_hat:.6g}")
    console.print(f"Iterations: {result.iterations}  Score sup-norm: {result.score_sup_norm:.3e}")

    if result.rejected:
        reason = result.rejection_reason or "did not converge"
        raise NumericalError(f"fit on support {support} was rejected: {reason}")

    contrast = estimate_contrast(glm_family, result, dataset.submatrix(support), dataset.response)
    value = evaluate(CriterionKind(tag=CriterionTag.HGBIC_P), result, contrast, dataset.n, dataset.p)
    console.print(f"tr(Ĥ): {contrast.trace_h:.6f}  log|Ĥ|: {contrast.logdet_h:.6f}")
    if contrast.clamped:
        console.print("[yellow]Warning: a contrast eigenvalue was floored[/yellow]")
    console.print(f"[bold]HGBIC_p:[/bold] {value.value:.6f}")


@cli.command("select")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--response", default="y", show_default=True, help="Name of the response column")
@click.option("--family", type=click.Choice([f.value for f in FamilyKind]), default="gaussian", show_default=True)
@click.option(
    "--criterion",
    "criteria",
    multiple=True,
    help="Criterion to report, e.g. hgbic_p or hgbic_p_zeta:0.5 (repeatable; default: all baselines)",
)
@click.option("--n-lambda", type=int, default=100, show_default=True, help="Number of λ values on the path")
@click.option("--max-support", type=int, help="Largest candidate support (default: min(n/2, 50))")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("results"), show_default=True)
@_dispersion_option
def select_command(
    input_path: Path,
    response: str,
    family: str,
    dispersion: float,
    criteria: tuple[str, ...],
    n_lambda: int,
    max_support: int | None,
    out: Path,
):
    """Run the Lasso path, refit every candidate and pick a model under each criterion."""
    try:
        kinds = [CriterionKind.parse(c) for c in criteria] if criteria else list(BASELINE_CRITERIA)
        path_config = LassoPathConfig(n_lambda=n_lambda, max_support=max_support)
    except (ValueError, ValidationError) as e:
        raise ConfigError(str(e)) from e
    runtime = _resolve_runtime(Command.SELECT, None, out, None, None, input_path=input_path)
    output_dir = _ensure_output_dir(runtime.output_dir)

    glm_family = _working_family(family, dispersion)
    dataset = validate_dataset(glm_family, read_dataset(runtime.input_path, response))
    names = dataset.column_names or tuple(str(j) for j in range(dataset.p))

    seq = lasso_path(glm_family, dataset.design, dataset.response, path_config)
    if len(seq) == 0:
        raise EmptySelectionError("the regularization path produced no candidates")
    fits = refit_candidates(glm_family, dataset.design, dataset.response, seq)
    contrasts = [contrast_for_candidate(glm_family, f, dataset.design, dataset.response) for f in fits]
    values = evaluate_all(kinds, fits, contrasts, dataset.n, dataset.p)
    logger.info("%d candidates, %d rejected", len(fits), sum(f.rejected for f in fits))

    candidates = pd.DataFrame(
        {
            "candidate": range(len(fits)),
            "lambda": seq.first_lambdas,
            "support": [" ".join(names[j] for j in f.support) for f in fits],
            "size": [f.d for f in fits],
            "loglik": [f.loglik for f in fits],
            "trace_h": [c.trace_h if c else np.nan for c in contrasts],
            "logdet_h": [c.logdet_h if c else np.nan for c in contrasts],
            "converged": [f.converged for f in fits],
            "rejected": [f.rejected for f in fits],
            "rejection_reason": [f.rejection_reason or ("" if f.converged else "did not converge") for f in fits],
            **{label: [v.value for v in column] for label, column in values.items()},
        }
    )
    candidates.to_csv(output_dir / "candidates.csv", index=False)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Criterion")
    table.add_column("Candidate", justify="right")
    table.add_column("Size", justify="right")
    table.add_column("Value", justify="right")
    table.add_column("Support")
    selections = []
    for label, column in values.items():
        result = select(column, fits)
        chosen = fits[result.chosen_index]
        support = " ".join(names[j] for j in chosen.support)
        selections.append(
            {
                "criterion": label,
                "chosen_index": result.chosen_index,
                "support": support,
                "size": chosen.d,
                "value": result.chosen.value,
                "tie_break_used": result.tie_break_used,
            }
        )
        table.add_row(label, str(result.chosen_index), str(chosen.d), f"{result.chosen.value:.4f}", support)
    pd.DataFrame(selections).to_csv(output_dir / "selection.csv", index=False)

    console.print(table)
    console.print(f"[green]✓[/green] Wrote {output_dir / 'candidates.csv'} and {output_dir / 'selection.csv'}")


def _run_with_progress(runner, config: SimulationConfig, workers: int):
    with _progress() as progress:
        task = progress.add_task(f"{config.scenario.value} p={config.p}", total=config.n_reps)
        return runner(config, workers=workers, on_replication=lambda _: progress.advance(task))


def _simulation_options(func):
    func = click.option("--workers", type=int, help="Parallel worker processes (default: HGBIC_WORKERS or 1)")(func)
    func = click.option("--seed", type=int, help="Override the base seed of the config file")(func)
    func = click.option(
        "--out", type=click.Path(file_okay=False, path_type=Path), default=Path("results"), show_default=True
    )(func)
    func = click.option(
        "--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True
    )(func)
    return func


@cli.command()
@_simulation_options
def simulate(config_path: Path, out: Path, seed: int | None, workers: int | None):
    """Run a simulation benchmark and write its results table."""
    runtime = _resolve_runtime(Command.SIMULATE, config_path, out, seed, workers)
    config = load_simulation_config(config_path, runtime.seed)
    output_dir = _ensure_output_dir(runtime.output_dir)

    report = _run_with_progress(run_experiment, config, runtime.workers)

    console.print(_report_table(report))
    if report.failed_replications:
        console.print(f"[yellow]{report.failed_replications} replication(s) failed[/yellow]")
    path = write_experiment_csv(experiment_csv_path(output_dir, report), report.to_rows())
    console.print(f"[green]✓[/green] Wrote {path}")
    if report.fdp_tpr_curve:
        sweep = write_sweep_csv(sweep_csv_path(output_dir, config), report.fdp_tpr_curve)
        console.print(f"[green]✓[/green] Wrote {sweep}")


@cli.command("sweep-zeta")
@_simulation_options
def sweep_zeta(config_path: Path, out: Path, seed: int | None, workers: int | None):
    """Trace mean FDP and TPR of HGBIC_p,ζ over the config's zeta_grid."""
    runtime = _resolve_runtime(Command.SWEEP_ZETA, config_path, out, seed, workers)
    config = load_simulation_config(config_path, runtime.seed)
    if not config.zeta_grid:
        raise ConfigError("sweep-zeta needs a zeta_grid in the config")
    output_dir = _ensure_output_dir(runtime.output_dir)

    points = _run_with_progress(zeta_sweep, config, runtime.workers)

    console.print(_sweep_table(points))
    path = write_sweep_csv(sweep_csv_path(output_dir, config), points)
    console.print(f"[green]✓[/green] Wrote {path}")


@cli.command("check-contrast")
@click.option("--n-grid", default="500,2000,8000", show_default=True, help="Comma-separated sample sizes")
@click.option("--reps", type=int, default=50, show_default=True, help="Replications per sample size")
@click.option("--dimension", "d", type=click.IntRange(min=1), default=3, show_default=True, help="Number of covariates d")
@click.option("--seed", type=int, default=20240101, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("results"), show_default=True)
def check_contrast(n_grid: str, reps: int, d: int, seed: int, out: Path):
    """Check that tr(Ĥ) approaches d for a correctly specified logistic model."""
    try:
        sizes = [int(token) for token in n_grid.split(",") if token.strip()]
    except ValueError as e:
        raise ConfigError(f"--n-grid must list integers: {e}") from e

    output_dir = _ensure_output_dir(_resolve_runtime(Command.CHECK_CONTRAST, None, out, seed, None).output_dir)

    points = trace_consistency(sizes, n_reps=reps, base_seed=seed, d=d)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("n", justify="right")
    table.add_column("mean |tr(Ĥ) − d|", justify="right")
    for point in points:
        table.add_row(str(point.n), f"{point.mean_abs_trace_gap:.4f}")
    console.print(table)

    path = output_dir / "trace_consistency.csv"
    pd.DataFrame([point.model_dump() for point in points]).to_csv(path, index=False)
    console.print(f"[green]✓[/green] Wrote {path}")


def run_cli(args: list[str] | None = None) -> int:
    """Invoke the CLI and map errors onto exit codes: 1 usage/config, 2 data, 3 numerical."""
    try:
        result = cli.main(args=args, prog_name="hgbic", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.exceptions.Abort:
        err_console.print("[red]Aborted[/red]")
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except ConfigError as e:
        err_console.print(f"[red]Error: {e}[/red]")
        return EXIT_USAGE
    except DataError as e:
        err_console.print(f"[red]Error: {e}[/red]")
        return EXIT_DATA
    except NumericalError as e:
        err_console.print(f"[red]Error: {e}[/red]")
        return EXIT_NUMERICAL
    except HgbicError as e:
        err_console.print(f"[red]Error: {e}[/red]")
        return EXIT_USAGE
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
