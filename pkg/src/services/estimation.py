"""
Stepwise maximum-likelihood estimation.

Marginal parameters of X = log Hs and Y = log T are fitted first, each by
BFGS on the exact GMRF likelihood with central finite-difference gradients.
The cross-correlation field rho is fitted afterwards with the marginals held
fixed, either on the joint likelihood or on the pointwise product likelihood
of the sample cross-correlations.
"""

import math
from collections.abc import Callable, Iterable
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import OptimizeResult, minimize
from scipy.spatial import cKDTree

from src.core.exceptions import DataValidationError, NumericalError
from src.core.logging_config import get_logger
from src.models.fit import FitReport
from src.models.series import SeaStateRecord
from src.services.bivarmodel import BivariateModel, MarginalModel, MarginalSpec
from src.services.mesh import Mesh, to_embedding
from src.services.paramfield import (
    BoundingBox,
    CosineField,
    CrossCorrField,
    DeformationParams,
    n_field_coefficients,
    pack_cross,
    pack_deformation,
    unpack_cross,
    unpack_deformation,
)

log = get_logger("seastate.estimation")

FloatArray = NDArray[np.float64]

_FAIL_VALUE = 1e10
_MAX_ALPHA = 8.0
_LOG_2PI = math.log(2.0 * math.pi)
_GAMMA_CLIP = 1.0 - 1e-12


# =============================================================================
# DATA
# =============================================================================


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Paired log observations on a fixed set of locations.

    ``log_hs`` and ``log_t`` have one row per time stamp and one column per
    location; NaN marks a missing value.
    """

    locations: FloatArray
    times: NDArray[np.datetime64]
    log_hs: FloatArray
    log_t: FloatArray

    def __post_init__(self) -> None:
        n, m = len(self.times), len(self.locations)
        if self.log_hs.shape != (n, m) or self.log_t.shape != (n, m):
            raise DataValidationError(
                "Observation arrays do not match times and locations", times=n, locations=m
            )
        finite = np.isfinite(self.log_hs) | np.isnan(self.log_hs)
        finite &= np.isfinite(self.log_t) | np.isnan(self.log_t)
        if not finite.all():
            raise DataValidationError("Observations must be finite or missing")

    @classmethod
    def from_records(cls, records: Iterable[SeaStateRecord]) -> "Dataset":
        rows = list(records)
        if not rows:
            raise DataValidationError("No records")
        times = sorted({r.time for r in rows})
        cells = sorted({(r.lon, r.lat) for r in rows})
        t_index = {t: i for i, t in enumerate(times)}
        c_index = {c: j for j, c in enumerate(cells)}
        hs = np.full((len(times), len(cells)), np.nan)
        tt = np.full_like(hs, np.nan)
        for r in rows:
            i, j = t_index[r.time], c_index[(r.lon, r.lat)]
            hs[i, j] = math.log(r.hs)
            tt[i, j] = math.log(r.t1)
        stamps = np.array([utc_naive(t) for t in times], dtype="datetime64[s]")
        return cls(np.asarray(cells, dtype=float), stamps, hs, tt)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def counts(self) -> NDArray[np.int64]:
        """Number of complete (Hs, T) pairs per location."""
        return np.sum(~np.isnan(self.log_hs) & ~np.isnan(self.log_t), axis=0)

    def select_times(self, mask: NDArray[np.bool_]) -> "Dataset":
        return replace(
            self, times=self.times[mask], log_hs=self.log_hs[mask], log_t=self.log_t[mask]
        )

    def select_locations(self, mask: NDArray[np.bool_]) -> "Dataset":
        return replace(
            self,
            locations=self.locations[mask],
            log_hs=self.log_hs[:, mask],
            log_t=self.log_t[:, mask],
        )

    def retained(self, min_count: int = 2) -> "Dataset":
        keep = self.counts >= min_count
        if not keep.all():
            log.warning("Dropped locations with too few observations", count=int((~keep).sum()))
        return self.select_locations(keep)


def utc_naive(t: datetime) -> datetime:
    return t if t.tzinfo is None else t.astimezone(timezone.utc).replace(tzinfo=None)


def training_days(times: ArrayLike) -> NDArray[np.bool_]:
    """Mask of time stamps on every second day, starting from the first day available."""
    days = np.asarray(times, dtype="datetime64[s]").astype("datetime64[D]")
    unique_days = np.unique(days)
    if unique_days.size < 2:
        raise DataValidationError("Splitting needs at least two days", days=int(unique_days.size))
    return np.isin(days, unique_days[0::2])


def alternate_day_split(dataset: Dataset) -> tuple[Dataset, Dataset]:
    """Training data on alternate days; the rest is test data."""
    train = training_days(dataset.times)
    return dataset.select_times(train), dataset.select_times(~train)


@dataclass(frozen=True, eq=False)
class Standardized:
    """Pointwise standardized fields and the statistics used."""

    x: FloatArray
    y: FloatArray
    mean_x: FloatArray
    var_x: FloatArray
    mean_y: FloatArray
    var_y: FloatArray


def standardize_dataset(dataset: Dataset) -> Standardized:
    """Subtract the sample mean and divide by the sample standard deviation (ddof=1)."""

    def stats(values: FloatArray, name: str) -> tuple[FloatArray, FloatArray]:
        mean = np.nanmean(values, axis=0)
        var = np.nanvar(values, axis=0, ddof=1)
        bad = np.flatnonzero(~(var > 0))
        if bad.size:
            raise DataValidationError(f"Zero sample variance of {name}", location=int(bad[0]))
        return mean, var

    mx, vx = stats(dataset.log_hs, "log Hs")
    my, vy = stats(dataset.log_t, "log T")
    return Standardized(
        x=(dataset.log_hs - mx) / np.sqrt(vx),
        y=(dataset.log_t - my) / np.sqrt(vy),
        mean_x=mx,
        var_x=vx,
        mean_y=my,
        var_y=vy,
    )


# =============================================================================
# CROSS-CORRELATION STATISTICS
# =============================================================================


@dataclass(frozen=True, eq=False)
class CrossCorrStats:
    gamma_hat: FloatArray
    shifted_gamma_hat: FloatArray
    shift_vectors: FloatArray
    counts: NDArray[np.int64]


def _masked_corr(x: FloatArray, Y: FloatArray) -> tuple[FloatArray, NDArray[np.int64]]:
    """Pearson correlation of x (n,) with each column of Y (n, k) over complete pairs."""
    mask = ~np.isnan(x)[:, None] & ~np.isnan(Y)
    counts = mask.sum(axis=0)
    xm = np.where(mask, x[:, None], 0.0)
    ym = np.where(mask, Y, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mx = xm.sum(axis=0) / counts
        my = ym.sum(axis=0) / counts
        dx = np.where(mask, xm - mx, 0.0)
        dy = np.where(mask, ym - my, 0.0)
        sxy = (dx * dy).sum(axis=0)
        sxx = (dx * dx).sum(axis=0)
        syy = (dy * dy).sum(axis=0)
        corr = sxy / np.sqrt(sxx * syy)
    flat_x = sxx <= 1e-20 * np.maximum((xm * xm).sum(axis=0), 1.0)
    flat_y = syy <= 1e-20 * np.maximum((ym * ym).sum(axis=0), 1.0)
    corr[flat_x | flat_y | (counts < 2)] = np.nan
    return np.clip(corr, -1.0, 1.0), counts


def grid_spacing(locations: ArrayLike) -> float:
    """Median nearest-neighbour distance of the locations."""
    pts = np.asarray(locations, dtype=float)
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(dist[:, 1]))


def sample_crosscorr_stats(
    locations: ArrayLike, x: ArrayLike, y: ArrayLike, radius_cells: int = 5
) -> CrossCorrStats:
    """
    Pointwise Pearson cross-correlation and its maximum over shifted locations.

    For each location j the correlation of X_j with Y_k is maximized over all
    k within ``radius_cells`` grid spacings; the shift vector points from j to
    the maximizing k. Zero-variance locations give NaN and are logged.
    """
    pts = np.asarray(locations, dtype=float)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if X.shape != Y.shape or X.shape[1] != len(pts):
        raise DataValidationError("Field shapes do not match the locations")
    if X.shape[0] < 2:
        raise DataValidationError("At least two replicates are required", replicates=X.shape[0])

    m = len(pts)
    gamma = np.full(m, np.nan)
    counts = np.zeros(m, dtype=np.int64)
    for j in range(m):
        c, n = _masked_corr(X[:, j], Y[:, [j]])
        gamma[j], counts[j] = c[0], n[0]

    shifted = gamma.copy()
    shifts = np.zeros((m, 2))
    radius = radius_cells * grid_spacing(pts) if radius_cells > 0 and m > 1 else 0.0
    if radius > 0:
        tree = cKDTree(pts)
        for j in range(m):
            if np.isnan(gamma[j]):
                continue
            neighbours = np.asarray(tree.query_ball_point(pts[j], r=radius * (1 + 1e-9)), dtype=int)
            corr, _ = _masked_corr(X[:, j], Y[:, neighbours])
            if np.all(np.isnan(corr)):
                continue
            best = int(np.nanargmax(corr))
            if corr[best] > gamma[j]:
                shifted[j] = corr[best]
                shifts[j] = pts[neighbours[best]] - pts[j]

    excluded = int(np.isnan(gamma).sum())
    if excluded:
        log.warning("Excluded zero-variance locations from cross-correlation", count=excluded)
    return CrossCorrStats(
        gamma_hat=gamma, shifted_gamma_hat=shifted, shift_vectors=shifts, counts=counts
    )


# =============================================================================
# INITIALIZATION
# =============================================================================


def estimate_range(
    locations: ArrayLike,
    data: ArrayLike,
    spherical: bool,
    seed: int = 0,
    max_pairs: int = 20000,
    n_bins: int = 20,
    threshold: float = 0.14,
) -> float:
    """
    Practical correlation range from binned empirical correlations.

    Distances are chord lengths in the mesh embedding. The range is the first
    bin centre where the mean correlation drops below ``threshold``.
    """
    pts = to_embedding(np.asarray(locations, dtype=float), spherical)
    Z = np.atleast_2d(np.asarray(data, dtype=float))
    m = len(pts)
    rng = np.random.default_rng(seed)
    n_pairs = min(max_pairs, m * (m - 1) // 2)
    i = rng.integers(0, m, size=2 * n_pairs)
    j = rng.integers(0, m, size=2 * n_pairs)
    keep = i != j
    i, j = i[keep][:n_pairs], j[keep][:n_pairs]

    dist = np.linalg.norm(pts[i] - pts[j], axis=1)
    with np.errstate(invalid="ignore"):
        corr = np.nanmean(Z[:, i] * Z[:, j], axis=0)
    valid = np.isfinite(corr)
    dist, corr = dist[valid], corr[valid]
    if dist.size == 0:
        return float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))

    edges = np.linspace(0.0, dist.max(), n_bins + 1)
    which = np.clip(np.digitize(dist, edges) - 1, 0, n_bins - 1)
    for b in range(n_bins):
        in_bin = which == b
        if in_bin.any() and corr[in_bin].mean() < threshold:
            return float(0.5 * (edges[b] + edges[b + 1]))
    return float(dist.max())


def initial_marginal_vector(
    order: int, practical_range: float, alpha: float = 2.0, nugget: float = 1e-2
) -> FloatArray:
    """
    Isotropic starting point: h-fields constant, alpha and nugget as given.

    With h1 = h2 = h the operator behaves like a Matern field with
    kappa_eff = exp(-h / 2), so h = 2 log(range / sqrt(8)).
    """
    n = n_field_coefficients(order)
    theta = np.zeros(3 * n + 2)
    h = 2.0 * math.log(practical_range / math.sqrt(8.0))
    theta[0] = h
    theta[n] = h
    theta[-2] = math.log(alpha - 1.0)
    theta[-1] = math.log(nugget)
    return theta


# =============================================================================
# PARAMETER VECTORS
# =============================================================================


def marginal_spec_from_vector(
    theta: ArrayLike,
    order: int,
    box: BoundingBox,
    mean_field: FloatArray | None = None,
    var_field: FloatArray | None = None,
) -> MarginalSpec:
    """Inverse of ``marginal_vector``: [h1, h2, h3, log(alpha - 1), log nugget]."""
    v = np.asarray(theta, dtype=float)
    deformation = unpack_deformation(v[:-2], order, box)
    return MarginalSpec(
        deformation=deformation,
        alpha=1.0 + math.exp(v[-2]),
        nugget=math.exp(v[-1]),
        mean_field=mean_field,
        var_field=var_field,
    )


def marginal_vector(spec: MarginalSpec) -> FloatArray:
    return np.concatenate(
        [pack_deformation(spec.deformation), [math.log(spec.alpha - 1.0), math.log(spec.nugget)]]
    )


# =============================================================================
# OPTIMIZATION
# =============================================================================


def central_gradient(
    fun: Callable[[FloatArray], float],
    theta: FloatArray,
    rel_step: float = 1e-5,
    executor: Executor | None = None,
) -> FloatArray:
    """Central differences with step rel_step * max(|theta_i|, 1), optionally run concurrently."""
    theta = np.asarray(theta, dtype=float)
    steps = rel_step * np.maximum(np.abs(theta), 1.0)
    points = []
    for i, h in enumerate(steps):
        for sign in (1.0, -1.0):
            p = theta.copy()
            p[i] += sign * h
            points.append(p)
    values = list(executor.map(fun, points)) if executor else [fun(p) for p in points]
    pairs = np.asarray(values).reshape(-1, 2)
    return (pairs[:, 0] - pairs[:, 1]) / (2.0 * steps)


@dataclass
class _Trace:
    scale: float
    values: list[float] = field(default_factory=list)


def _bfgs(
    name: str,
    objective: Callable[[FloatArray], float],
    theta0: FloatArray,
    *,
    scale: float,
    max_iter: int,
    gtol: float,
    fd_step: float,
    threads: int,
    nugget_joint: bool = True,
) -> tuple[FloatArray, FitReport]:
    """Minimize ``objective`` (a negative log-likelihood divided by ``scale``)."""
    trace = _Trace(scale=scale)

    def callback(intermediate_result: OptimizeResult) -> None:
        loglik = -float(intermediate_result.fun) * scale
        trace.values.append(loglik)
        log.debug("Optimizer iteration", fit=name, iteration=len(trace.values) - 1, loglik=loglik)

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        trace.values.append(-objective(theta0) * scale)
        result = minimize(
            objective,
            theta0,
            jac=lambda t: central_gradient(objective, t, fd_step, executor),
            method="BFGS",
            callback=callback,
            options={"maxiter": max_iter, "gtol": gtol},
        )
    finally:
        if executor is not None:
            executor.shutdown()

    grad_norm = float(np.max(np.abs(result.jac))) if result.jac is not None else math.inf
    converged = bool(result.success) and grad_norm <= gtol
    report = FitReport(
        name=name,
        parameters=[float(v) for v in result.x],
        neg_loglik=float(result.fun) * scale,
        iterations=int(result.nit),
        converged=converged,
        grad_norm=grad_norm if math.isfinite(grad_norm) else 1e300,
        gtol=gtol,
        nugget_joint=nugget_joint,
        loglik_trace=trace.values,
        message=str(result.message),
    )
    log.info(
        "Fit finished",
        fit=name,
        iterations=report.iterations,
        converged=report.converged,
        neg_loglik=report.neg_loglik,
        grad_norm=report.grad_norm,
    )
    return np.asarray(result.x), report


def marginal_loglik(
    mesh: Mesh, spec: MarginalSpec, data: ArrayLike, rational_order: int = 2
) -> float:
    """Log-likelihood of standardized replicates; -inf when the model cannot be built."""
    try:
        return MarginalModel(mesh, spec, rational_order).loglik(data)
    except NumericalError as exc:
        log.warning("Marginal likelihood failed", error=str(exc))
        return -math.inf


def fit_marginal(
    mesh: Mesh,
    locations: ArrayLike,
    data: ArrayLike,
    box: BoundingBox,
    *,
    order: int = 4,
    rational_order: int = 2,
    theta0: FloatArray | None = None,
    alpha_init: float = 2.0,
    nugget_init: float = 1e-2,
    max_iter: int = 500,
    gtol: float = 1e-5,
    fd_step: float = 1e-5,
    threads: int = 1,
    seed: int = 0,
    name: str = "marginal",
) -> tuple[MarginalSpec, FitReport]:
    """
    Fit h1, h2, h3 coefficients, alpha and the nugget of one standardized field.

    ``mesh`` must carry the observation matrix of ``locations``. Without
    ``theta0`` the fit starts isotropic, with the range from
    ``estimate_range``. The objective is the negative log-likelihood per
    observed value, which keeps the gradient tolerance meaningful across data
    sizes.
    """
    Y = np.atleast_2d(np.asarray(data, dtype=float))
    n_obs = int(np.sum(~np.isnan(Y)))
    if n_obs == 0:
        raise DataValidationError("No observations to fit", fit=name)
    if theta0 is None:
        practical_range = estimate_range(locations, Y, mesh.spherical, seed=seed)
        theta0 = initial_marginal_vector(order, practical_range, alpha_init, nugget_init)
        log.info("Initial range estimated", fit=name, practical_range=practical_range)
    theta_start = np.asarray(theta0, dtype=float)

    def objective(theta: FloatArray) -> float:
        if 1.0 + math.exp(min(theta[-2], 50.0)) > _MAX_ALPHA:
            return _FAIL_VALUE
        try:
            spec = marginal_spec_from_vector(theta, order, box)
            value = -MarginalModel(mesh, spec, rational_order).loglik(Y) / n_obs
        except (NumericalError, OverflowError) as exc:
            log.debug("Objective evaluation failed", fit=name, error=str(exc))
            return _FAIL_VALUE
        return value if math.isfinite(value) else _FAIL_VALUE

    theta, report = _bfgs(
        name,
        objective,
        theta_start,
        scale=n_obs,
        max_iter=max_iter,
        gtol=gtol,
        fd_step=fd_step,
        threads=threads,
    )
    return marginal_spec_from_vector(theta, order, box), report


# =============================================================================
# CROSS-CORRELATION FIELD
# =============================================================================


def pointwise_loglik(gamma: ArrayLike, gamma_hat: ArrayLike, counts: ArrayLike) -> float:
    """
    Product log-likelihood of sample cross-correlations under model correlations gamma.

    Each location contributes O_j times the per-observation bivariate normal
    log-density of standardized pairs with sample correlation gamma_hat_j:

        -log(2 pi) - log(1 - g^2) / 2 - 1 / (1 - g^2) + g ((O - 1) / O) gamma_hat / (1 - g^2)

    which is stationary at g = gamma_hat (O - 1) / O.
    """
    g = np.clip(np.asarray(gamma, dtype=float), -_GAMMA_CLIP, _GAMMA_CLIP)
    gh = np.asarray(gamma_hat, dtype=float)
    O = np.asarray(counts, dtype=float)
    one_minus = 1.0 - g * g
    per_obs = (
        -_LOG_2PI
        - 0.5 * np.log(one_minus)
        - 1.0 / one_minus
        + g * ((O - 1.0) / O) * gh / one_minus
    )
    return float(np.sum(O * per_obs))


def fit_rho_pointwise(
    gamma_fn: Callable[[CrossCorrField], FloatArray],
    gamma_hat: ArrayLike,
    counts: ArrayLike,
    order: int,
    box: BoundingBox,
    *,
    rho0: CrossCorrField | None = None,
    max_iter: int = 500,
    gtol: float = 1e-5,
    fd_step: float = 1e-5,
    threads: int = 1,
) -> tuple[CrossCorrField, FitReport]:
    """
    Maximize the pointwise product likelihood over the rho coefficients.

    ``gamma_fn`` maps a rho field to the model correlations at the
    observation locations. Locations with NaN gamma_hat are left out.

    Raises:
        DataValidationError: some |gamma_hat| >= 1.
    """
    gh = np.asarray(gamma_hat, dtype=float)
    O = np.asarray(counts, dtype=float)
    valid = np.isfinite(gh) & (O >= 2)
    if np.any(np.abs(gh[valid]) >= 1.0):
        raise DataValidationError(
            "Sample cross-correlations must lie strictly inside (-1, 1)",
            location=int(np.flatnonzero(valid & (np.abs(gh) >= 1.0))[0]),
        )
    total = float(O[valid].sum())
    start = pack_cross(rho0) if rho0 is not None else np.zeros(n_field_coefficients(order))

    def objective(theta: FloatArray) -> float:
        try:
            gamma = gamma_fn(unpack_cross(theta, order, box))
        except NumericalError as exc:
            log.debug("Cross-correlation evaluation failed", error=str(exc))
            return _FAIL_VALUE
        return -pointwise_loglik(gamma[valid], gh[valid], O[valid]) / total

    theta, report = _bfgs(
        "rho_pointwise",
        objective,
        start,
        scale=total,
        max_iter=max_iter,
        gtol=gtol,
        fd_step=fd_step,
        threads=threads,
    )
    return unpack_cross(theta, order, box), report


def fit_rho_fullml(
    x: MarginalModel,
    y: MarginalModel,
    data_x: ArrayLike,
    data_y: ArrayLike,
    order: int,
    box: BoundingBox,
    *,
    rho0: CrossCorrField | None = None,
    max_iter: int = 500,
    gtol: float = 1e-5,
    fd_step: float = 1e-5,
    threads: int = 1,
) -> tuple[CrossCorrField, FitReport]:
    """Maximize the joint bivariate likelihood over rho with both marginals fixed."""
    X = np.atleast_2d(np.asarray(data_x, dtype=float))
    Y = np.atleast_2d(np.asarray(data_y, dtype=float))
    n_obs = int(np.sum(~np.isnan(X)) + np.sum(~np.isnan(Y)))
    start = pack_cross(rho0) if rho0 is not None else np.zeros(n_field_coefficients(order))

    def objective(theta: FloatArray) -> float:
        try:
            model = BivariateModel(x, y, unpack_cross(theta, order, box))
            value = -model.loglik(X, Y) / n_obs
        except NumericalError as exc:
            log.debug("Joint likelihood failed", error=str(exc))
            return _FAIL_VALUE
        return value if math.isfinite(value) else _FAIL_VALUE

    theta, report = _bfgs(
        "rho_fullml",
        objective,
        start,
        scale=n_obs,
        max_iter=max_iter,
        gtol=gtol,
        fd_step=fd_step,
        threads=threads,
    )
    return unpack_cross(theta, order, box), report


# =============================================================================
# PIPELINE
# =============================================================================


@dataclass(frozen=True, eq=False)
class FitOptions:
    order: int = 4
    rational_order: int = 2
    max_iter: int = 500
    gtol: float = 1e-5
    fd_step: float = 1e-5
    threads: int = 1
    seed: int = 0
    rho_method: str = "pointwise"
    shift_radius_cells: int = 5
    use_shifted: bool = False
    include_nugget_in_gamma: bool = False


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Result of the stepwise fit: both marginals, rho and the reports."""

    mesh: Mesh
    box: BoundingBox
    x: MarginalSpec
    y: MarginalSpec
    rho: CrossCorrField
    reports: list[FitReport]
    rational_order: int = 2
    locations: FloatArray | None = None

    def build(self) -> BivariateModel:
        return BivariateModel(
            MarginalModel(self.mesh, self.x, self.rational_order),
            MarginalModel(self.mesh, self.y, self.rational_order),
            self.rho,
        )


def fit_pipeline(mesh: Mesh, dataset: Dataset, options: FitOptions) -> FittedModel:
    """
    Standardize, fit both marginals concurrently, then fit rho.

    ``mesh`` must carry the observation matrix of ``dataset.locations``.
    """
    data = dataset.retained()
    if data.n_times < 2:
        raise DataValidationError("At least two time stamps are required", times=data.n_times)
    if mesh.observation_map is None or mesh.observation_map.shape[0] != len(data.locations):
        mesh = mesh.with_observations(data.locations)
    box = BoundingBox.from_points(data.locations)
    z = standardize_dataset(data)
    common = {
        "order": options.order,
        "rational_order": options.rational_order,
        "max_iter": options.max_iter,
        "gtol": options.gtol,
        "fd_step": options.fd_step,
        "threads": options.threads,
        "seed": options.seed,
    }

    with ThreadPoolExecutor(max_workers=2) as pool:
        fx = pool.submit(fit_marginal, mesh, data.locations, z.x, box, name="log_hs", **common)
        fy = pool.submit(fit_marginal, mesh, data.locations, z.y, box, name="log_t", **common)
        x_spec, x_report = fx.result()
        y_spec, y_report = fy.result()
    x_spec = replace(x_spec, mean_field=z.mean_x, var_field=z.var_x)
    y_spec = replace(y_spec, mean_field=z.mean_y, var_field=z.var_y)

    x_model = MarginalModel(mesh, x_spec, options.rational_order)
    y_model = MarginalModel(mesh, y_spec, options.rational_order)
    rho_options = {
        "max_iter": options.max_iter,
        "gtol": options.gtol,
        "fd_step": options.fd_step,
        "threads": options.threads,
    }
    if options.rho_method == "fullml":
        rho, rho_report = fit_rho_fullml(
            x_model, y_model, z.x, z.y, options.order, box, **rho_options
        )
    else:
        stats = sample_crosscorr_stats(data.locations, z.x, z.y, options.shift_radius_cells)
        gamma_hat = stats.shifted_gamma_hat if options.use_shifted else stats.gamma_hat

        def gamma_fn(rho: CrossCorrField) -> FloatArray:
            model = BivariateModel(x_model, y_model, rho)
            return model.pointwise_crosscorr(options.include_nugget_in_gamma)

        rho, rho_report = fit_rho_pointwise(
            gamma_fn, gamma_hat, stats.counts, options.order, box, **rho_options
        )

    return FittedModel(
        mesh=mesh,
        box=box,
        x=x_spec,
        y=y_spec,
        rho=rho,
        reports=[x_report, y_report, rho_report],
        rational_order=options.rational_order,
        locations=data.locations,
    )


def isotropic_spec(
    kappa: float, alpha: float, nugget: float, order: int, box: BoundingBox
) -> MarginalSpec:
    """Stationary marginal used for simulation studies and defaults."""
    return MarginalSpec(DeformationParams.isotropic(kappa, order, box), alpha, nugget)


def constant_rho(value: float, order: int, box: BoundingBox) -> CrossCorrField:
    return CrossCorrField(CosineField.constant(value, order, box))
