"""
Route-level risk engines.

Two statistics are evaluated along a ship route for a sea state that is held
constant in time during the traversal:

- fatigue: accumulated damage, a Riemann sum of the expected damage rate
  d = (0.47 C^beta Hs^beta / gamma) (1 / Tz - 2 pi V cos(a) / (g Tz^2));
- broaching: the capsize intensity, a Riemann sum of
  lambda = mu_D exp(beta0 + beta_H log Hs + beta_T log T) where mu_D is the
  intensity of apparent waves overtaking the ship with a dangerous slope.

The angle a is between the ship heading and the wave propagation direction;
v_x = V cos(a) is the ship velocity along the waves. Waves meeting the ship at
more than the cutoff angle never count as dangerous.

Monte Carlo CDFs repeat the simulation of many realizations and report
pointwise envelopes of the empirical CDFs across repeats.
"""

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import cKDTree
from scipy.special import ndtr

from src.core.exceptions import (
    DataValidationError,
    DegenerateSeaError,
    LocationError,
    MissingStatisticsError,
)
from src.core.logging_config import get_logger
from src.models.risk import (
    BroachingConfig,
    FatigueConfig,
    PeriodModel,
    RiskEngine,
    TravelDirection,
)
from src.models.seastate import CutoffPolicy, PeriodKind, SpectralMoments
from src.services.bivarmodel import BivariateModel
from src.services.mesh import Mesh, locate, observation_matrix, to_embedding
from src.services.seastate import convert_period_array, spectral_moments_array

log = get_logger("seastate.riskroute")

FloatArray = NDArray[np.float64]
MomentsLike = SpectralMoments | dict[str, FloatArray]

_SECONDS_PER_HOUR = 3600.0
_PROXY_FACTOR = 3.75
_GRADIENT_STEP_DEG = 0.375


# =============================================================================
# ROUTES
# =============================================================================


def _bearings(points: FloatArray) -> FloatArray:
    """Initial great-circle bearing of each leg, radians clockwise from north."""
    lon, lat = np.radians(points[:, 0]), np.radians(points[:, 1])
    dlon = lon[1:] - lon[:-1]
    y = np.sin(dlon) * np.cos(lat[1:])
    x = np.cos(lat[:-1]) * np.sin(lat[1:]) - np.sin(lat[:-1]) * np.cos(lat[1:]) * np.cos(dlon)
    return np.arctan2(y, x)


@dataclass(frozen=True, eq=False)
class Route:
    """
    Waypoints with headings, speed and time step.

    ``headings`` are unit (east, north) vectors: the normalized mean of the
    bearings of the two legs meeting at each waypoint.
    """

    waypoints: FloatArray
    headings: FloatArray
    speed: float
    dt_hours: float
    direction: TravelDirection

    @classmethod
    def from_points(
        cls,
        points: ArrayLike,
        speed: float,
        duration_hours: float,
        direction: TravelDirection = TravelDirection.TO_EUROPE,
    ) -> "Route":
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise DataValidationError("A route needs at least two (lon, lat) points")
        if speed < 0 or duration_hours <= 0:
            raise DataValidationError("Speed must be non-negative and duration positive")
        bearing = _bearings(pts)
        legs = np.column_stack([np.sin(bearing), np.cos(bearing)])
        headings = np.empty_like(pts)
        headings[0], headings[-1] = legs[0], legs[-1]
        headings[1:-1] = legs[:-1] + legs[1:]
        norm = np.linalg.norm(headings, axis=1)
        headings[norm > 0] /= norm[norm > 0, None]
        dt_hours = duration_hours / len(pts)
        return cls(pts, headings, float(speed), dt_hours, TravelDirection(direction))

    @property
    def n_points(self) -> int:
        return len(self.waypoints)

    @property
    def dt_seconds(self) -> float:
        return self.dt_hours * _SECONDS_PER_HOUR

    @property
    def t_end_hours(self) -> float:
        return self.dt_hours * self.n_points

    def reversed(self) -> "Route":
        """The same route traversed in the other direction."""
        other = (
            TravelDirection.TO_AMERICA
            if self.direction is TravelDirection.TO_EUROPE
            else TravelDirection.TO_EUROPE
        )
        waypoints = self.waypoints[::-1].copy()
        return Route(waypoints, -self.headings[::-1], self.speed, self.dt_hours, other)


def great_circle_route(
    start: tuple[float, float],
    end: tuple[float, float],
    n_points: int = 100,
    speed: float = 10.0,
    duration_hours: float = 149.69,
    direction: TravelDirection = TravelDirection.TO_EUROPE,
) -> Route:
    """
    Waypoints evenly spaced in geodesic distance from ``start`` to ``end``.

    ``start`` and ``end`` are given for the eastbound crossing; the westbound
    route is its reverse.
    """
    if n_points < 2:
        raise DataValidationError("A route needs at least two points")
    a, b = to_embedding(np.array([start, end], dtype=float), spherical=True)
    omega = math.acos(float(np.clip(a @ b, -1.0, 1.0)))
    if omega == 0.0:
        raise DataValidationError("Route endpoints coincide")
    f = np.linspace(0.0, 1.0, n_points)[:, None]
    xyz = (np.sin((1.0 - f) * omega) * a + np.sin(f * omega) * b) / math.sin(omega)
    lon = np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0]))
    lat = np.degrees(np.arcsin(np.clip(xyz[:, 2], -1.0, 1.0)))
    points = np.column_stack([lon, lat])
    route = Route.from_points(points, speed, duration_hours, TravelDirection.TO_EUROPE)
    return route if TravelDirection(direction) is TravelDirection.TO_EUROPE else route.reversed()


# =============================================================================
# WAVE DIRECTIONS
# =============================================================================


@dataclass(frozen=True, eq=False)
class WaveDirectionField:
    """Propagation directions in degrees clockwise from north at scattered locations."""

    locations: FloatArray
    theta_deg: FloatArray

    @property
    def vectors(self) -> FloatArray:
        theta = np.radians(self.theta_deg)
        return np.column_stack([np.sin(theta), np.cos(theta)])

    def at(self, points: ArrayLike) -> FloatArray:
        """Unit (east, north) vectors of the nearest direction location."""
        _, idx = cKDTree(self.locations).query(np.asarray(points, dtype=float))
        return self.vectors[idx]


def gradient_directions(
    field_fn: Callable[[FloatArray], FloatArray],
    points: ArrayLike,
    step: float = _GRADIENT_STEP_DEG,
) -> FloatArray:
    """
    Unit (east, north) direction of the gradient of a scalar field.

    ``field_fn`` maps (k, 2) lon/lat points to values, optionally with leading
    realization axes. Zero gradients give a zero vector.
    """
    pts = np.asarray(points, dtype=float)
    east = np.array([step, 0.0])
    north = np.array([0.0, step])
    coslat = np.cos(np.radians(pts[:, 1]))
    d_east = (field_fn(pts + east) - field_fn(pts - east)) / (2.0 * step * coslat)
    d_north = (field_fn(pts + north) - field_fn(pts - north)) / (2.0 * step)
    vec = np.stack([d_east, d_north], axis=-1)
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    return np.divide(vec, norm, out=np.zeros_like(vec), where=norm > 0)


def wave_cosines(route: Route, wave_vectors: ArrayLike) -> FloatArray:
    """cos of the angle between heading and wave direction, broadcast over realizations."""
    return np.sum(np.asarray(wave_vectors) * route.headings, axis=-1)


# =============================================================================
# FATIGUE
# =============================================================================


def fatigue_rate(
    hs: ArrayLike, tz: ArrayLike, v: float, alpha: ArrayLike, cfg: FatigueConfig | None = None
) -> FloatArray:
    """Expected fatigue damage rate per second; ``alpha`` in radians. May be negative."""
    cfg = cfg or FatigueConfig()
    hs_arr, tz_arr = np.asarray(hs, dtype=float), np.asarray(tz, dtype=float)
    if np.any(hs_arr <= 0) or np.any(tz_arr <= 0):
        raise DataValidationError("Hs and Tz must be positive")
    amplitude = 0.47 * cfg.c_ship**cfg.beta * hs_arr**cfg.beta / cfg.gamma
    bracket = 1.0 / tz_arr - 2.0 * math.pi * v * np.cos(alpha) / (cfg.g * tz_arr**2)
    return amplitude * bracket


@dataclass(frozen=True)
class DamageResult:
    total: float
    clamped: int


def accumulate_damage(
    route: Route,
    hs: ArrayLike,
    tz: ArrayLike,
    cos_alpha: ArrayLike,
    cfg: FatigueConfig | None = None,
) -> DamageResult:
    """Riemann sum of the fatigue rate over waypoints; negative rates count as zero."""
    rate = fatigue_rate(hs, tz, route.speed, np.arccos(np.clip(cos_alpha, -1.0, 1.0)), cfg)
    negative = rate < 0
    if negative.any():
        log.debug("Clamped negative fatigue rates", count=int(negative.sum()))
    total = float(np.sum(np.where(negative, 0.0, rate)) * route.dt_seconds)
    return DamageResult(total=total, clamped=int(negative.sum()))


# =============================================================================
# BROACHING
# =============================================================================


def _moment_arrays(moments: MomentsLike) -> tuple[FloatArray, ...]:
    if isinstance(moments, SpectralMoments):
        return tuple(np.asarray(getattr(moments, k)) for k in ("m00", "m02", "m11", "m20"))
    return tuple(np.asarray(moments[k]) for k in ("m00", "m02", "m11", "m20"))


def overtake_intensity(moments: MomentsLike, v_x: ArrayLike) -> FloatArray:
    """Intensity of apparent waves overtaking a ship moving at v_x along the waves."""
    m00, m02, m11, m20 = _moment_arrays(moments)
    v = np.asarray(v_x, dtype=float)
    a = m11 / m20
    disc = v * v + 2.0 * v * a + m02 / m20
    if np.any(disc < -1e-12 * (v * v + m02 / m20)):
        raise DegenerateSeaError("Moments are not positive semidefinite")
    root = np.sqrt(np.maximum(disc, 0.0))
    shifted = v + a
    with np.errstate(divide="ignore", invalid="ignore"):
        # -a - v + root, without cancellation when v + a > 0
        stable = (m02 / m20 - a * a) / (root + shifted)
    excess = np.where(shifted > 0, stable, root - shifted)
    return np.maximum(np.sqrt(m20 / m00) * excess / (4.0 * math.pi), 0.0)


def slope_correlation(moments: MomentsLike, v_x: ArrayLike) -> FloatArray:
    _, m02, m11, m20 = _moment_arrays(moments)
    v = np.asarray(v_x, dtype=float)
    rho = (v * m20 + m11) / np.sqrt(m20 * (v * v * m20 + 2.0 * v * m11 + m02))
    if np.any(~np.isfinite(rho)) or np.any(np.abs(rho) >= 1.0):
        raise DegenerateSeaError("Slope correlation has magnitude one")
    return rho


def slope_cdf(r: ArrayLike, moments: MomentsLike, v_x: ArrayLike) -> FloatArray:
    """
    CDF of the slope of apparent waves at overtaking.

    F(r) = 2 / (1 - rho) (Phi(r / s) - rho exp(-r^2 / (2 m20)) Phi(r rho / s)) for
    r <= 0 and 1 for r > 0, with s^2 = m20 (1 - rho^2).
    """
    _, _, _, m20 = _moment_arrays(moments)
    rho = slope_correlation(moments, v_x)
    r_arr = np.asarray(r, dtype=float)
    s = np.sqrt(m20 * (1.0 - rho * rho))
    with np.errstate(invalid="ignore", over="ignore"):
        damp = np.exp(-(r_arr * r_arr) / (2.0 * m20))
        tail = np.where(np.isfinite(r_arr), damp * ndtr(r_arr * rho / s), 0.0)
        value = 2.0 / (1.0 - rho) * (ndtr(r_arr / s) - rho * tail)
    return np.where(r_arr > 0, 1.0, np.clip(value, 0.0, 1.0))


def slope_density(r: ArrayLike, moments: MomentsLike, v_x: ArrayLike) -> FloatArray:
    """Derivative of ``slope_cdf`` on r < 0."""
    _, _, _, m20 = _moment_arrays(moments)
    rho = slope_correlation(moments, v_x)
    r_arr = np.asarray(r, dtype=float)
    s = np.sqrt(m20 * (1.0 - rho * rho))
    gauss = np.exp(-(r_arr * r_arr) / (2.0 * s * s)) / (s * math.sqrt(2.0 * math.pi))
    damp = np.exp(-(r_arr * r_arr) / (2.0 * m20))
    tail = -r_arr / m20 * damp * ndtr(r_arr * rho / s) + damp * rho / s * np.exp(
        -((r_arr * rho / s) ** 2) / 2.0
    ) / math.sqrt(2.0 * math.pi)
    return np.where(r_arr > 0, 0.0, 2.0 / (1.0 - rho) * (gauss - rho * tail))


def dangerous_intensity(
    moments: MomentsLike,
    v_x: ArrayLike,
    interval: tuple[float, float] = (-0.4, -0.2),
) -> FloatArray:
    """mu thinned by the probability that the overtaking slope lies in ``interval``."""
    lo, hi = interval
    if lo > hi:
        raise DataValidationError("Dangerous slope interval must satisfy lo <= hi")
    mu = overtake_intensity(moments, v_x)
    p = slope_cdf(hi, moments, v_x) - slope_cdf(lo, moments, v_x)
    return mu * np.maximum(p, 0.0)


def capsize_intensity(
    hs: ArrayLike, t: ArrayLike, mu_d: ArrayLike, cfg: BroachingConfig | None = None
) -> FloatArray:
    """lambda = mu_D exp(beta0 + beta_H log Hs + beta_T log T), times the configured unit scale."""
    cfg = cfg or BroachingConfig()
    log_rate = cfg.beta0 + cfg.beta_h * np.log(hs) + cfg.beta_t * np.log(t)
    return cfg.unit_scale * np.asarray(mu_d) * np.exp(log_rate)


@dataclass(frozen=True)
class RouteIntensity:
    """Route integrals of mu, mu_D and lambda (dimensionless counts)."""

    overtaking: float
    dangerous: float
    capsize: float


def route_capsize_intensity(
    route: Route,
    hs: ArrayLike,
    t1: ArrayLike,
    cos_alpha: ArrayLike,
    cfg: BroachingConfig | None = None,
    policy: CutoffPolicy | None = None,
) -> RouteIntensity:
    """
    Riemann sums of mu, mu_D and lambda along the route.

    ``t1`` is the mean period; the spectrum is parameterized from it and the
    regression uses the period kind configured in ``cfg``. Waypoints whose
    wave angle exceeds the cutoff contribute nothing.
    """
    cfg = cfg or BroachingConfig()
    hs_arr, t1_arr = np.asarray(hs, dtype=float), np.asarray(t1, dtype=float)
    cos_a = np.clip(np.asarray(cos_alpha, dtype=float), -1.0, 1.0)
    active = cos_a >= math.cos(math.radians(cfg.cutoff_angle_deg))
    moments = spectral_moments_array(hs_arr, t1_arr, PeriodKind.T1, policy)
    v_x = route.speed * cos_a

    mu = np.where(active, overtake_intensity(moments, v_x), 0.0)
    mu_d = np.where(active, dangerous_intensity(moments, v_x, cfg.dangerous_slopes), 0.0)
    t_reg = convert_period_array(t1_arr, PeriodKind.T1, cfg.regression_period)
    lam = capsize_intensity(hs_arr, t_reg, mu_d, cfg)
    dt = route.dt_seconds
    return RouteIntensity(
        overtaking=float(mu.sum() * dt),
        dangerous=float(mu_d.sum() * dt),
        capsize=float(lam.sum() * dt),
    )


def route_statistic(
    engine: RiskEngine,
    route: Route,
    hs: ArrayLike,
    t1: ArrayLike,
    cos_alpha: ArrayLike,
    fatigue: FatigueConfig | None = None,
    broaching: BroachingConfig | None = None,
    policy: CutoffPolicy | None = None,
) -> FloatArray:
    """One route statistic per realization; rows of ``hs`` and ``t1`` are realizations."""
    H = np.atleast_2d(np.asarray(hs, dtype=float))
    T = np.atleast_2d(np.asarray(t1, dtype=float))
    A = np.broadcast_to(np.asarray(cos_alpha, dtype=float), H.shape)
    out = np.empty(len(H))
    clamped = 0
    for i in range(len(H)):
        if RiskEngine(engine) is RiskEngine.FATIGUE:
            tz = convert_period_array(T[i], PeriodKind.T1, PeriodKind.TZ)
            result = accumulate_damage(route, H[i], tz, A[i], fatigue)
            out[i] = result.total
            clamped += result.clamped
        else:
            out[i] = route_capsize_intensity(route, H[i], T[i], A[i], broaching, policy).capsize
    if clamped:
        log.warning("Clamped negative fatigue rates", count=clamped, realizations=len(H))
    return out


# =============================================================================
# PERIOD MODELS FOR UNIVARIATE BASELINES
# =============================================================================


def proxy_tz(hs: ArrayLike) -> FloatArray:
    """Tz = 3.75 sqrt(Hs)."""
    return _PROXY_FACTOR * np.sqrt(np.asarray(hs, dtype=float))


def conditional_mean_log_t(
    z_hs: ArrayLike, gamma: ArrayLike | None, mean_t: ArrayLike, var_t: ArrayLike
) -> FloatArray:
    """Pointwise Gaussian conditional mean of log T given standardized log Hs."""
    if gamma is None or np.any(np.isnan(np.asarray(gamma, dtype=float))):
        raise MissingStatisticsError("Conditional mean needs fitted cross-correlations")
    return np.asarray(mean_t) + np.sqrt(np.asarray(var_t)) * np.asarray(gamma) * np.asarray(z_hs)


def baseline_t_models(
    mode: PeriodModel | str,
    hs: ArrayLike,
    *,
    z_hs: ArrayLike | None = None,
    gamma: ArrayLike | None = None,
    mean_t: ArrayLike | None = None,
    var_t: ArrayLike | None = None,
) -> FloatArray:
    """Mean period T1 implied by a univariate Hs field under a baseline period model."""
    mode = PeriodModel(mode)
    if mode is PeriodModel.PROXY:
        return convert_period_array(proxy_tz(hs), PeriodKind.TZ, PeriodKind.T1)
    if mode is PeriodModel.CONDITIONAL_MEAN:
        if z_hs is None or mean_t is None or var_t is None:
            raise MissingStatisticsError("Conditional mean needs standardized Hs and T statistics")
        return np.exp(conditional_mean_log_t(z_hs, gamma, mean_t, var_t))
    raise DataValidationError(f"{mode.value} is not a baseline period model")


# =============================================================================
# SIMULATION ALONG A ROUTE
# =============================================================================


class PointInterpolator:
    """
    Linear interpolation of per-location values at arbitrary points.

    Outside the convex hull of the locations the nearest location's value is
    used when ``extrapolate`` is set; otherwise LocationError is raised.
    """

    def __init__(self, locations: ArrayLike, values: ArrayLike, extrapolate: bool = False) -> None:
        locs = np.asarray(locations, dtype=float)
        self._values = np.asarray(values, dtype=float)
        self._interp = LinearNDInterpolator(locs, self._values)
        self._tree = cKDTree(locs)
        self.extrapolate = extrapolate

    def __call__(self, points: ArrayLike) -> FloatArray:
        pts = np.asarray(points, dtype=float)
        out = np.asarray(self._interp(pts))
        bad = np.flatnonzero(np.isnan(out).reshape(len(out), -1).any(axis=1))
        if bad.size and not self.extrapolate:
            raise LocationError("Point outside the observation hull", index=int(bad[0]))
        if bad.size:
            _, nearest = self._tree.query(pts[bad])
            out[bad] = self._values[nearest]
        return out


class RouteSimulator:
    """
    Draws sea states at the waypoints of a route and evaluates a risk engine.

    Nodal samples of the model are interpolated to the waypoints with the mesh
    observation matrix and destandardized with pointwise statistics that are
    interpolated from the observation locations.
    """

    def __init__(
        self,
        model: BivariateModel,
        locations: ArrayLike,
        route: Route,
        engine: RiskEngine,
        period_model: PeriodModel = PeriodModel.BIVARIATE,
        directions: WaveDirectionField | None = None,
        fatigue: FatigueConfig | None = None,
        broaching: BroachingConfig | None = None,
        policy: CutoffPolicy | None = None,
    ) -> None:
        x_spec, y_spec = model.x.spec, model.y.spec
        if x_spec.mean_field is None or x_spec.var_field is None:
            raise MissingStatisticsError("Model has no pointwise statistics for log Hs")
        if y_spec.mean_field is None or y_spec.var_field is None:
            raise MissingStatisticsError("Model has no pointwise statistics for log T")
        self.model = model
        self.route = route
        self.engine = RiskEngine(engine)
        self.period_model = PeriodModel(period_model)
        self.fatigue = fatigue
        self.broaching = broaching
        self.policy = policy
        mesh: Mesh = model.x.mesh
        locs = np.asarray(locations, dtype=float)
        stats = np.column_stack(
            [x_spec.mean_field, x_spec.var_field, y_spec.mean_field, y_spec.var_field]
        )
        self._stats = PointInterpolator(locs, stats, extrapolate=True)
        self._mesh = mesh

        self._points = route.waypoints
        if directions is None:
            s = _GRADIENT_STEP_DEG
            offsets = np.array([[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]])
            shifted = [route.waypoints + o for o in offsets]
            # a step leaving the mesh stays at the waypoint: one-sided difference there
            taken = np.empty((4, route.n_points))
            for i, points in enumerate(shifted):
                outside = locate(mesh, points)[0] < 0
                points[outside] = route.waypoints[outside]
                taken[i] = np.where(outside, 0.0, s)
            self._spans = taken[0::2] + taken[1::2]
            self._points = np.concatenate([route.waypoints, *shifted])
            self._wave_vectors = None
        else:
            self._wave_vectors = directions.at(route.waypoints)
        self._A = observation_matrix(mesh, self._points)
        self._at_points = self._stats(self._points)

        if self.period_model is PeriodModel.CONDITIONAL_MEAN:
            gamma = model.pointwise_crosscorr()
            self._gamma = PointInterpolator(locs, gamma, extrapolate=True)(self._points)
        else:
            self._gamma = None

    def _draw_standardized(
        self, n: int, rng: np.random.Generator
    ) -> tuple[FloatArray, FloatArray | None]:
        if self.period_model is PeriodModel.BIVARIATE:
            ux, uy = self.model.sample(n, rng)
            return np.asarray(self._A @ ux.T).T, np.asarray(self._A @ uy.T).T
        ux = self.model.x.sample(n, rng)
        return np.asarray(self._A @ ux.T).T, None

    def realizations(
        self, n: int, rng: np.random.Generator
    ) -> tuple[FloatArray, FloatArray, FloatArray]:
        """(Hs, T1, cos angle) at the waypoints, each of shape (n, n_waypoints)."""
        zx, zy = self._draw_standardized(n, rng)
        mean_x, var_x, mean_t, var_t = self._at_points.T
        hs_all = np.exp(mean_x + np.sqrt(var_x) * zx)
        if self.period_model is PeriodModel.BIVARIATE:
            t_all = np.exp(mean_t + np.sqrt(var_t) * zy)
        elif self.period_model is PeriodModel.PROXY:
            t_all = baseline_t_models(PeriodModel.PROXY, hs_all)
        else:
            t_all = baseline_t_models(
                PeriodModel.CONDITIONAL_MEAN,
                hs_all,
                z_hs=zx,
                gamma=self._gamma,
                mean_t=mean_t,
                var_t=var_t,
            )

        k = self.route.n_points
        hs, t1 = hs_all[:, :k], t_all[:, :k]
        if self._wave_vectors is None:
            ep, em, np_, nm = (hs_all[:, k * (i + 1) : k * (i + 2)] for i in range(4))
            coslat = np.cos(np.radians(self.route.waypoints[:, 1]))
            de, dn = ep - em, np_ - nm
            east = np.divide(de, self._spans[0] * coslat, out=np.zeros_like(de), where=de != 0)
            north = np.divide(dn, self._spans[1], out=np.zeros_like(dn), where=dn != 0)
            vec = np.stack([east, north], axis=-1)
            norm = np.linalg.norm(vec, axis=-1, keepdims=True)
            vectors = np.divide(vec, norm, out=np.zeros_like(vec), where=norm > 0)
        else:
            vectors = np.broadcast_to(self._wave_vectors, (n, k, 2))
        return hs, t1, wave_cosines(self.route, vectors)

    def __call__(self, n: int, rng: np.random.Generator) -> FloatArray:
        hs, t1, cos_alpha = self.realizations(n, rng)
        return route_statistic(
            self.engine, self.route, hs, t1, cos_alpha, self.fatigue, self.broaching, self.policy
        )


def dataset_route_statistics(
    locations: ArrayLike,
    log_hs: ArrayLike,
    log_t: ArrayLike,
    route: Route,
    engine: RiskEngine,
    directions: WaveDirectionField | None = None,
    fatigue: FatigueConfig | None = None,
    broaching: BroachingConfig | None = None,
    policy: CutoffPolicy | None = None,
) -> FloatArray:
    """Route statistic for each time stamp of observed data; incomplete times are skipped."""
    locs = np.asarray(locations, dtype=float)
    H = np.exp(np.atleast_2d(np.asarray(log_hs, dtype=float)))
    T = np.exp(np.atleast_2d(np.asarray(log_t, dtype=float)))
    complete = ~(np.isnan(H).any(axis=1) | np.isnan(T).any(axis=1))
    if not complete.all():
        log.warning("Skipped incomplete time stamps", count=int((~complete).sum()))
    H, T = H[complete], T[complete]
    hs = PointInterpolator(locs, H.T)(route.waypoints).T
    t1 = PointInterpolator(locs, T.T)(route.waypoints).T
    if directions is None:
        interp = PointInterpolator(locs, H.T, extrapolate=True)
        vectors = gradient_directions(lambda p: interp(p).T, route.waypoints)
    else:
        vectors = directions.at(route.waypoints)
    cos_alpha = wave_cosines(route, vectors)
    return route_statistic(engine, route, hs, t1, cos_alpha, fatigue, broaching, policy)


# =============================================================================
# MONTE CARLO CDFS
# =============================================================================


@dataclass(frozen=True, eq=False)
class MonteCarloCDF:
    """Empirical CDFs of repeated simulations on a common grid, with envelopes."""

    samples: FloatArray
    grid: FloatArray
    cdfs: FloatArray
    lower: FloatArray
    upper: FloatArray
    held_out: FloatArray | None = None
    held_out_cdf: FloatArray | None = None

    @property
    def coverage(self) -> float | None:
        """Fraction of grid points where the held-out CDF lies within the envelopes."""
        if self.held_out_cdf is None:
            return None
        tol = 1e-12
        inside = (self.held_out_cdf >= self.lower - tol) & (self.held_out_cdf <= self.upper + tol)
        return float(inside.mean())


def empirical_cdf(samples: ArrayLike, grid: ArrayLike) -> FloatArray:
    """Fraction of samples <= each grid value."""
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(grid, dtype=float), side="right") / len(s)


def monte_carlo_cdf(
    sampler: Callable[[int, np.random.Generator], FloatArray],
    n_realizations: int,
    n_repeats: int,
    seed: int = 0,
    held_out: ArrayLike | None = None,
    n_grid: int = 200,
    threads: int = 1,
) -> MonteCarloCDF:
    """
    Repeat ``sampler`` with independent seeded streams and summarize the CDFs.

    Every repeat draws from its own child of ``SeedSequence(seed)``, so results
    do not depend on ``threads``.
    """
    if n_realizations < 1 or n_repeats < 1:
        raise DataValidationError("Need at least one realization and one repeat")
    children = np.random.SeedSequence(seed).spawn(n_repeats)

    def run(child: np.random.SeedSequence) -> FloatArray:
        draws = sampler(n_realizations, np.random.default_rng(child))
        return np.sort(np.asarray(draws, dtype=float))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = np.stack(list(pool.map(run, children)))
    else:
        samples = np.stack([run(c) for c in children])

    pooled = samples.ravel()
    extra = np.asarray(held_out, dtype=float) if held_out is not None else np.empty(0)
    lo = float(min(pooled.min(), extra.min() if extra.size else math.inf))
    hi = float(max(pooled.max(), extra.max() if extra.size else -math.inf))
    grid = np.linspace(lo, hi, n_grid) if hi > lo else np.array([lo])
    cdfs = np.stack([empirical_cdf(s, grid) for s in samples])
    held_cdf = empirical_cdf(extra, grid) if extra.size else None
    result = MonteCarloCDF(
        samples=samples,
        grid=grid,
        cdfs=cdfs,
        lower=cdfs.min(axis=0),
        upper=cdfs.max(axis=0),
        held_out=extra if extra.size else None,
        held_out_cdf=held_cdf,
    )
    log.info(
        "Monte Carlo CDF computed",
        repeats=n_repeats,
        realizations=n_realizations,
        coverage=result.coverage,
    )
    return result
