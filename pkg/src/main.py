"""
seastate-spde - Command-line entry point

Sub-commands:
- ingest    normalize and thin a gridded series CSV
- split     alternate-day train/test partition
- fit       stepwise maximum-likelihood fit, writes the model file and fit report
- simulate  draw (Hs, T1) realizations at the observation locations
- risk      Monte Carlo CDFs and envelopes of a route statistic
- crosscorr pointwise and shifted cross-correlation statistics

Logs go to stderr. Every CSV output starts with a provenance line recording
the configuration hash and the seed, and carries no timestamps, so reruns with
identical inputs produce identical files.
"""

import sys
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click
import numpy as np
import pandas as pd
import structlog
from pydantic import TypeAdapter

from src.core.config import Settings, load_settings
from src.core.exceptions import DataError, DataValidationError, SeaStateError
from src.core.logging_config import get_logger, setup_logging
from src.models.fit import FitReport
from src.models.risk import BroachingConfig, FatigueConfig, PeriodModel, RiskEngine, TravelDirection
from src.models.seastate import CutoffPolicy
from src.services.bivarmodel import destandardize
from src.services.estimation import (
    Dataset,
    FitOptions,
    fit_pipeline,
    sample_crosscorr_stats,
    standardize_dataset,
    training_days,
    utc_naive,
)
from src.services.mesh import build_lonlat_mesh
from src.services.riskroute import (
    Route,
    RouteSimulator,
    dataset_route_statistics,
    great_circle_route,
    monte_carlo_cdf,
)
from src.services.storage import (
    provenance_header,
    read_directions,
    read_model,
    read_points,
    read_series,
    thin_records,
    write_model,
    write_series,
    write_table,
)

log = get_logger("seastate.cli")

_FILE = click.Path(dir_okay=False, path_type=Path)
_EXISTING = click.Path(exists=True, dir_okay=False, path_type=Path)


@dataclass(frozen=True)
class RunContext:
    """Settings and run-wide values shared by the sub-commands."""

    settings: Settings
    seed: int
    threads: int

    @property
    def header(self) -> str:
        return provenance_header(self.settings.config_hash, self.seed)


class SeaStateGroup(click.Group):
    """
    Maps SeaStateError families to process exit codes.

    Any other ValueError is invalid input reaching a service and exits as a data error.
    """

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except SeaStateError as exc:
            log.error("Command failed", error_type=type(exc).__name__, detail=str(exc))
            click.echo(f"Error: {exc}", err=True)
            ctx.exit(exc.exit_code)
        except ValueError as exc:
            log.error("Command failed", error_type=type(exc).__name__, detail=str(exc))
            click.echo(f"Error: {exc}", err=True)
            ctx.exit(DataError.exit_code)


@click.group(cls=SeaStateGroup)
@click.option("--config", "config_path", type=_FILE, default=None, help="Env file with settings.")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Overrides SEED.")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Overrides THREADS.")
@click.pass_context
def cli(
    ctx: click.Context, config_path: Path | None, seed: int | None, threads: int | None
) -> None:
    """Non-stationary bivariate sea-state model and route risk."""
    settings = load_settings(config_path)
    updates: dict[str, int] = {}
    if seed is not None:
        updates["seed"] = seed
    if threads is not None:
        updates["threads"] = threads
    settings = settings.model_copy(update=updates)
    setup_logging(settings, stream=sys.stderr)

    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(
        run_id=uuid.uuid4().hex[:12], command=ctx.invoked_subcommand
    )
    ctx.obj = RunContext(settings=settings, seed=settings.seed, threads=settings.threads)
    log.info(
        "Run started",
        seed=settings.seed,
        threads=settings.threads,
        config_hash=settings.config_hash,
    )


# =============================================================================
# DATA PREPARATION
# =============================================================================


@cli.command()
@click.argument("source", type=_EXISTING)
@click.argument("target", type=_FILE)
@click.option("--thin-hours", type=click.FloatRange(min=0), default=24.0, show_default=True)
@click.option("--hs-column", default="hs", show_default=True, help="Input column with Hs.")
@click.option("--t-column", default="t1", show_default=True, help="Input column with T1.")
@click.pass_obj
def ingest(
    run: RunContext,
    source: Path,
    target: Path,
    thin_hours: float,
    hs_column: str,
    t_column: str,
) -> None:
    """Validate SOURCE, thin it in time and write the normalized series to TARGET."""
    rename = {hs_column: "hs", t_column: "t1"}
    records = read_series(source, rename={k: v for k, v in rename.items() if k != v})
    kept = thin_records(records, thin_hours)
    write_series(kept, target, run.header)
    log.info("Series ingested", records=len(records), kept=len(kept), thin_hours=thin_hours)


@cli.command()
@click.argument("source", type=_EXISTING)
@click.argument("train", type=_FILE)
@click.argument("test", type=_FILE)
@click.pass_obj
def split(run: RunContext, source: Path, train: Path, test: Path) -> None:
    """Write every second day of SOURCE to TRAIN and the other days to TEST."""
    records = read_series(source)
    if not records:
        raise DataValidationError(f"No records in {source}")
    mask = training_days(np.array([utc_naive(r.time) for r in records], dtype="datetime64[s]"))
    write_series([r for r, m in zip(records, mask, strict=True) if m], train, run.header)
    write_series([r for r, m in zip(records, mask, strict=True) if not m], test, run.header)
    log.info("Series split", train=int(mask.sum()), test=int((~mask).sum()))


# =============================================================================
# MODEL
# =============================================================================


@cli.command()
@click.argument("source", type=_EXISTING)
@click.argument("model_path", type=_FILE)
@click.option("--report", "report_path", type=_FILE, default=None, help="Fit report JSON path.")
@click.pass_obj
def fit(run: RunContext, source: Path, model_path: Path, report_path: Path | None) -> None:
    """Fit the bivariate model to the series in SOURCE and write MODEL_PATH."""
    s = run.settings
    dataset = Dataset.from_records(read_series(source))
    mesh = build_lonlat_mesh(
        dataset.locations,
        s.extension_width,
        spherical=s.spherical_mesh,
        resolution=s.mesh_resolution,
    )
    options = FitOptions(
        order=s.basis_order,
        rational_order=s.rational_order,
        max_iter=s.optimizer_max_iter,
        gtol=s.optimizer_gtol,
        fd_step=s.fd_rel_step,
        threads=run.threads,
        seed=run.seed,
        rho_method=s.rho_fit_method,
        shift_radius_cells=s.shift_radius_cells,
        use_shifted=s.use_shifted_crosscorr,
        include_nugget_in_gamma=s.include_nugget_in_gamma,
    )
    fitted = fit_pipeline(mesh, dataset, options)
    write_model(fitted, model_path, run.header)

    report_path = report_path or model_path.with_suffix(".report.json")
    report_path.write_bytes(TypeAdapter(list[FitReport]).dump_json(fitted.reports, indent=2))
    for report in fitted.reports:
        log.info(
            "Fit finished",
            block=report.name,
            converged=report.converged,
            iterations=report.iterations,
            neg_loglik=report.neg_loglik,
        )


@cli.command()
@click.argument("model_path", type=_EXISTING)
@click.argument("target", type=_FILE)
@click.option("--count", type=click.IntRange(min=1), default=10, show_default=True)
@click.pass_obj
def simulate(run: RunContext, model_path: Path, target: Path, count: int) -> None:
    """Draw COUNT joint realizations of (Hs, T1) at the observation locations."""
    fitted = read_model(model_path)
    model = fitted.build()
    ux, uy = model.sample(count, run.seed)
    A = fitted.mesh.observation_map
    hs = destandardize(np.asarray(A @ ux.T).T, fitted.x)
    t1 = destandardize(np.asarray(A @ uy.T).T, fitted.y)
    locations = np.asarray(fitted.locations)
    m = len(locations)
    frame = pd.DataFrame(
        {
            "realization": np.repeat(np.arange(count), m),
            "lon": np.tile(locations[:, 0], count),
            "lat": np.tile(locations[:, 1], count),
            "hs": hs.ravel(),
            "t1": t1.ravel(),
        }
    )
    write_table(frame, target, run.header)
    log.info("Realizations written", count=count, locations=m)


# =============================================================================
# ROUTE RISK
# =============================================================================


def _route(settings: Settings, route_path: Path | None, direction: TravelDirection) -> Route:
    if route_path is None:
        return great_circle_route(
            (settings.route_start_lon, settings.route_start_lat),
            (settings.route_end_lon, settings.route_end_lat),
            n_points=settings.route_points,
            speed=settings.ship_speed,
            duration_hours=settings.route_duration_hours,
            direction=direction,
        )
    try:
        # route files list the eastbound crossing
        route = Route.from_points(
            read_points(route_path), settings.ship_speed, settings.route_duration_hours
        )
    except ValueError as exc:
        raise DataValidationError(f"Invalid route in {route_path}: {exc}") from exc
    return route if direction is TravelDirection.TO_EUROPE else route.reversed()


@cli.command()
@click.argument("model_path", type=_EXISTING)
@click.argument("target", type=_FILE)
@click.option(
    "--engine",
    type=click.Choice([e.value for e in RiskEngine]),
    default="fatigue",
    show_default=True,
)
@click.option(
    "--period-model",
    type=click.Choice([p.value for p in PeriodModel]),
    default="bivariate",
    show_default=True,
)
@click.option(
    "--direction",
    type=click.Choice([d.value for d in TravelDirection]),
    default="toEurope",
    show_default=True,
)
@click.option("--route", "route_path", type=_EXISTING, default=None, help="lon,lat waypoints.")
@click.option(
    "--directions", "directions_path", type=_EXISTING, default=None, help="lon,lat,theta_deg CSV."
)
@click.option(
    "--held-out", "held_out_path", type=_EXISTING, default=None, help="Series CSV to compare."
)
@click.option(
    "--realizations", type=click.IntRange(min=1), default=None, help="Overrides N_REALIZATIONS."
)
@click.option("--repeats", type=click.IntRange(min=1), default=None, help="Overrides N_REPEATS.")
@click.option(
    "--samples", "samples_path", type=_FILE, default=None, help="Also write the raw statistics."
)
@click.pass_obj
def risk(
    run: RunContext,
    model_path: Path,
    target: Path,
    engine: str,
    period_model: str,
    direction: str,
    route_path: Path | None,
    directions_path: Path | None,
    held_out_path: Path | None,
    realizations: int | None,
    repeats: int | None,
    samples_path: Path | None,
) -> None:
    """Simulate a route statistic and write its CDF with min/max envelopes."""
    s = run.settings
    fitted = read_model(model_path)
    model = fitted.build()
    route = _route(s, route_path, TravelDirection(direction))
    directions = read_directions(directions_path) if directions_path else None
    fatigue = FatigueConfig()
    broaching = BroachingConfig(
        slope_lo=s.dangerous_slope_lo,
        slope_hi=s.dangerous_slope_hi,
        cutoff_angle_deg=s.cutoff_angle_deg,
        unit_scale=s.lambda_unit_scale,
    )
    policy = CutoffPolicy.limited()
    kind = RiskEngine(engine)

    simulator = RouteSimulator(
        model,
        fitted.locations,
        route,
        kind,
        PeriodModel(period_model),
        directions,
        fatigue,
        broaching,
        policy,
    )
    # factorize before worker threads share the model
    if PeriodModel(period_model) is PeriodModel.BIVARIATE:
        _ = model.chol

    held = None
    if held_out_path is not None:
        data = Dataset.from_records(read_series(held_out_path))
        held = dataset_route_statistics(
            data.locations,
            data.log_hs,
            data.log_t,
            route,
            kind,
            directions,
            fatigue,
            broaching,
            policy,
        )

    result = monte_carlo_cdf(
        simulator,
        realizations or s.n_realizations,
        repeats or s.n_repeats,
        seed=run.seed,
        held_out=held,
        threads=run.threads,
    )
    frame = pd.DataFrame(
        {
            "value": result.grid,
            "lower": result.lower,
            "upper": result.upper,
            "median": np.median(result.cdfs, axis=0),
        }
    )
    if result.held_out_cdf is not None:
        frame["held_out"] = result.held_out_cdf
    write_table(frame, target, run.header)

    if samples_path is not None:
        n_rep, n_real = result.samples.shape
        samples = pd.DataFrame(
            {
                "repeat": np.repeat(np.arange(n_rep), n_real),
                "rank": np.tile(np.arange(n_real), n_rep),
                "value": result.samples.ravel(),
            }
        )
        write_table(samples, samples_path, run.header)
    log.info(
        "Risk evaluated",
        engine=kind.value,
        period_model=period_model,
        direction=route.direction.value,
        coverage=result.coverage,
    )


@cli.command()
@click.argument("source", type=_EXISTING)
@click.argument("target", type=_FILE)
@click.option(
    "--model", "model_path", type=_EXISTING, default=None, help="Adds model cross-correlations."
)
@click.pass_obj
def crosscorr(run: RunContext, source: Path, target: Path, model_path: Path | None) -> None:
    """Export pointwise and shifted sample cross-correlations with their translation vectors."""
    s = run.settings
    dataset = Dataset.from_records(read_series(source)).retained()
    z = standardize_dataset(dataset)
    stats = sample_crosscorr_stats(dataset.locations, z.x, z.y, s.shift_radius_cells)
    frame = pd.DataFrame(
        {
            "lon": dataset.locations[:, 0],
            "lat": dataset.locations[:, 1],
            "count": stats.counts,
            "gamma_hat": stats.gamma_hat,
            "shifted_gamma_hat": stats.shifted_gamma_hat,
            "shift_lon": stats.shift_vectors[:, 0],
            "shift_lat": stats.shift_vectors[:, 1],
        }
    )
    if model_path is not None:
        fitted = read_model(model_path)
        locations = fitted.locations
        same = locations is not None and locations.shape == dataset.locations.shape
        if not same or not np.allclose(locations, dataset.locations):
            raise DataValidationError("Model locations differ from the series locations")
        frame["gamma_model"] = fitted.build().pointwise_crosscorr(s.include_nugget_in_gamma)
    write_table(frame, target, run.header)
    log.info("Cross-correlations written", locations=len(frame))


def main() -> None:
    """Console-script entry point."""
    cli(prog_name="seastate")


if __name__ == "__main__":
    main()
