# Data preparation, cross-correlation statistics and maximum-likelihood fitting

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.exceptions import DataValidationError
from src.models.fit import FitReport
from src.models.series import SeaStateRecord
from src.services.bivarmodel import BivariateModel, MarginalModel, MarginalSpec
from src.services.estimation import (
    Dataset,
    FitOptions,
    alternate_day_split,
    central_gradient,
    constant_rho,
    fit_marginal,
    fit_pipeline,
    fit_rho_fullml,
    fit_rho_pointwise,
    grid_spacing,
    initial_marginal_vector,
    isotropic_spec,
    marginal_loglik,
    marginal_spec_from_vector,
    marginal_vector,
    pointwise_loglik,
    sample_crosscorr_stats,
    standardize_dataset,
    training_days,
    utc_naive,
)
from src.services.mesh import Mesh, build_lonlat_mesh
from src.services.paramfield import BoundingBox, CrossCorrField

from tests.conftest import lattice

RecordFactory = Callable[..., list[SeaStateRecord]]


@pytest.fixture  # type: ignore[misc]
def dataset(make_records: RecordFactory, planar_points: np.ndarray) -> Dataset:
    """Two days of six-hourly records on the planar lattice."""
    return Dataset.from_records(make_records(planar_points, 8))


class TestDataset:
    """Test the gridded data container."""

    def test_from_records(self, dataset: Dataset, planar_points: np.ndarray) -> None:
        """Test one row per time stamp and one column per location."""
        assert dataset.log_hs.shape == (8, len(planar_points))
        assert dataset.n_times == 8
        assert np.all(dataset.counts == 8)
        assert np.all(np.diff(dataset.times) == np.timedelta64(6, "h"))

    def test_missing_record_is_nan(self, make_records: RecordFactory) -> None:
        """Test that an absent (time, cell) pair becomes a missing value."""
        records = make_records(lattice(2, 1), 3)
        data = Dataset.from_records(records[:-1])
        assert np.isnan(data.log_hs[-1, -1])
        assert data.counts.tolist() == [3, 2]

    def test_retained_drops_sparse_locations(self, make_records: RecordFactory) -> None:
        """Test that locations with fewer than two pairs are dropped."""
        records = make_records(lattice(3, 1), 3)
        sparse = [r for r in records if r.lon != 2.0 or r.time == records[0].time]
        data = Dataset.from_records(sparse).retained()
        assert data.locations.tolist() == [[0.0, 0.0], [1.0, 0.0]]

    def test_empty_and_non_finite(self) -> None:
        """Test rejection of empty input and infinite values."""
        with pytest.raises(DataValidationError):
            Dataset.from_records([])
        values = np.array([[0.0, np.inf]])
        with pytest.raises(DataValidationError):
            Dataset(lattice(2, 1), np.array(["2001-01-01"], dtype="datetime64[s]"), values, values)

    def test_utc_naive(self) -> None:
        """Test conversion of aware times to naive UTC."""
        record = SeaStateRecord(time="2001-01-01T06:00:00+02:00", lon=0, lat=0, hs=1, t1=5)
        assert utc_naive(record.time) == datetime(2001, 1, 1, 4)
        assert utc_naive(datetime(2001, 1, 1)) == datetime(2001, 1, 1)


class TestDaySplit:
    """Test the alternate-day train/test partition."""

    def test_alternate_days(self) -> None:
        """Test that every second calendar day, from the first, is training data."""
        times = np.array(
            ["2001-01-01T00", "2001-01-01T12", "2001-01-02T00", "2001-01-03T06", "2001-01-05T00"],
            dtype="datetime64[s]",
        )
        assert training_days(times).tolist() == [True, True, False, True, False]

    def test_single_day(self) -> None:
        """Test that one day cannot be split."""
        with pytest.raises(DataValidationError):
            training_days(np.array(["2001-01-01T00", "2001-01-01T06"], dtype="datetime64[s]"))

    def test_split_dataset(self, dataset: Dataset) -> None:
        """Test that the two halves partition the time stamps."""
        train, test = alternate_day_split(dataset)
        assert train.n_times == 4
        assert test.n_times == 4
        assert set(train.times.tolist()).isdisjoint(test.times.tolist())


class TestStandardize:
    """Test pointwise standardization."""

    def test_unit_sample_moments(self, dataset: Dataset) -> None:
        """Test zero mean and unit sample variance (ddof = 1) per location."""
        z = standardize_dataset(dataset)
        assert np.allclose(z.x.mean(axis=0), 0.0)
        assert np.allclose(z.y.var(axis=0, ddof=1), 1.0)
        assert np.allclose(z.var_x, dataset.log_hs.var(axis=0, ddof=1))

    def test_zero_variance(self, dataset: Dataset) -> None:
        """Test that a constant location is rejected with its index."""
        flat = dataset.log_t.copy()
        flat[:, 3] = 1.0
        data = Dataset(dataset.locations, dataset.times, dataset.log_hs, flat)
        with pytest.raises(DataValidationError) as info:
            standardize_dataset(data)
        assert info.value.context["location"] == 3


class TestCrossCorrStats:
    """Test sample cross-correlations."""

    def test_pointwise_and_shifted(self) -> None:
        """Test the maximizing shift towards a neighbour carrying the same signal."""
        rng = np.random.default_rng(3)
        pts = lattice(3, 1)
        X = rng.standard_normal((50, 3))
        Y = rng.standard_normal((50, 3))
        Y[:, 1] = X[:, 0]
        stats = sample_crosscorr_stats(pts, X, Y, radius_cells=1)
        assert abs(stats.gamma_hat[0]) < 0.5
        assert stats.shifted_gamma_hat[0] == pytest.approx(1.0)
        assert stats.shift_vectors[0].tolist() == [1.0, 0.0]
        assert np.all(stats.shifted_gamma_hat >= stats.gamma_hat)
        assert stats.counts.tolist() == [50, 50, 50]

    def test_missing_and_flat_locations(self) -> None:
        """Test pairwise deletion of missing values and NaN for zero variance."""
        rng = np.random.default_rng(4)
        X = rng.standard_normal((20, 2))
        Y = X + 0.1 * rng.standard_normal((20, 2))
        X[0, 0] = np.nan
        Y[:, 1] = 2.0
        stats = sample_crosscorr_stats(lattice(2, 1), X, Y, radius_cells=0)
        assert stats.counts[0] == 19
        assert stats.gamma_hat[0] > 0.9
        assert np.isnan(stats.gamma_hat[1])

    def test_requires_replicates(self) -> None:
        """Test that one replicate gives no correlation."""
        with pytest.raises(DataValidationError):
            sample_crosscorr_stats(lattice(2, 1), np.zeros((1, 2)), np.zeros((1, 2)))

    def test_grid_spacing(self) -> None:
        """Test the median nearest-neighbour distance."""
        assert grid_spacing(lattice(4, 3, spacing=0.5)) == pytest.approx(0.5)


class TestPointwiseLikelihood:
    """Test the product likelihood of sample cross-correlations."""

    @pytest.mark.parametrize("gamma_hat", [-0.6, 0.0, 0.45, 0.9])  # type: ignore[misc]
    def test_stationary_point(self, gamma_hat: float) -> None:
        """Test that the maximum lies at gamma_hat (O - 1) / O."""
        counts = 25.0
        g = gamma_hat * (counts - 1) / counts
        h = 1e-6
        slope = (
            pointwise_loglik([g + h], [gamma_hat], [counts])
            - pointwise_loglik([g - h], [gamma_hat], [counts])
        ) / (2 * h)
        assert slope == pytest.approx(0.0, abs=1e-4)
        assert pointwise_loglik([g], [gamma_hat], [counts]) > pointwise_loglik(
            [g + 0.05], [gamma_hat], [counts]
        )

    def test_sums_over_locations(self) -> None:
        """Test additivity across locations."""
        both = pointwise_loglik([0.2, -0.3], [0.1, -0.4], [10, 30])
        single = pointwise_loglik([0.2], [0.1], [10]) + pointwise_loglik([-0.3], [-0.4], [30])
        assert both == pytest.approx(single)


class TestParameterVectors:
    """Test the optimizer parametrization of a marginal."""

    def test_initial_vector(self, planar_box: BoundingBox) -> None:
        """Test the isotropic start with kappa_eff = sqrt(8) / range."""
        theta = initial_marginal_vector(1, practical_range=math.sqrt(8.0) * math.e, alpha=2.5)
        assert theta.size == 3 * 4 + 2
        spec = marginal_spec_from_vector(theta, 1, planar_box)
        assert spec.deformation.h1.coefficients[0, 0] == pytest.approx(2.0)
        assert spec.deformation.h2.coefficients[0, 0] == pytest.approx(2.0)
        assert np.all(spec.deformation.h3.coefficients == 0.0)
        assert spec.alpha == pytest.approx(2.5)
        assert spec.nugget == pytest.approx(1e-2)
        assert np.allclose(marginal_vector(spec), theta)

    def test_alpha_stays_above_one(self, planar_box: BoundingBox) -> None:
        """Test that any real vector maps to alpha > 1 and a positive nugget."""
        theta = np.zeros(3 * 4 + 2)
        theta[-2:] = [-30.0, -30.0]
        spec = marginal_spec_from_vector(theta, 1, planar_box)
        assert spec.alpha > 1.0
        assert spec.nugget > 0.0


class TestOptimization:
    """Test gradients, reports and the fitting steps."""

    def test_central_gradient(self) -> None:
        """Test central differences on a quadratic, serially and in a pool."""
        weights = np.array([1.0, 3.0, -2.0])

        def quadratic(theta: np.ndarray) -> float:
            return float(np.sum(weights * theta**2))

        theta = np.array([0.5, -2.0, 100.0])
        assert np.allclose(central_gradient(quadratic, theta), 2 * weights * theta, rtol=1e-6)
        with ThreadPoolExecutor(max_workers=2) as pool:
            pooled = central_gradient(quadratic, theta, executor=pool)
        assert np.array_equal(pooled, central_gradient(quadratic, theta))

    def test_report_convergence_flag(self) -> None:
        """Test that a converged report needs a gradient below tolerance."""
        with pytest.raises(ValidationError):
            FitReport(
                name="x",
                parameters=[0.0],
                neg_loglik=1.0,
                iterations=3,
                converged=True,
                grad_norm=1e-2,
                gtol=1e-5,
            )

    def test_marginal_loglik(self, planar_mesh: Mesh, stationary_spec: MarginalSpec) -> None:
        """Test that the likelihood is finite for standardized data."""
        data = np.random.default_rng(0).standard_normal((3, 16))
        assert math.isfinite(marginal_loglik(planar_mesh, stationary_spec, data))

    @pytest.mark.slow  # type: ignore[misc]
    def test_fit_marginal_improves_likelihood(
        self, planar_mesh: Mesh, planar_points: np.ndarray, planar_box: BoundingBox
    ) -> None:
        """Test that a few BFGS steps do not lower the likelihood of the start."""
        data = np.random.default_rng(3).standard_normal((6, 16))
        start = isotropic_spec(1.5, 2.0, 0.05, 0, planar_box)
        spec, report = fit_marginal(
            planar_mesh,
            planar_points,
            data,
            planar_box,
            order=0,
            rational_order=1,
            theta0=marginal_vector(start),
            max_iter=4,
            name="log_hs",
        )
        assert report.name == "log_hs"
        assert report.nugget_joint
        assert spec.alpha > 1.0
        before = MarginalModel(planar_mesh, start, 1).loglik(data)
        after = MarginalModel(planar_mesh, spec, 1).loglik(data)
        assert after >= before - 1e-9

    def test_fit_marginal_needs_observations(
        self, planar_mesh: Mesh, planar_points: np.ndarray, planar_box: BoundingBox
    ) -> None:
        """Test that an all-missing field is rejected."""
        with pytest.raises(DataValidationError):
            fit_marginal(planar_mesh, planar_points, np.full((2, 16), np.nan), planar_box)

    def test_fit_rho_fullml(
        self, planar_mesh: Mesh, planar_box: BoundingBox, stationary_spec: MarginalSpec
    ) -> None:
        """Test that positively correlated pairs give a positive rho and a better fit."""
        rng = np.random.default_rng(5)
        a, b = rng.standard_normal((2, 30, 16))
        X, Y = a, 0.6 * a + 0.8 * b
        x = MarginalModel(planar_mesh, stationary_spec, 1)
        y = MarginalModel(planar_mesh, stationary_spec, 1)
        rho, report = fit_rho_fullml(x, y, X, Y, 0, planar_box, max_iter=20)
        assert report.name == "rho_fullml"
        assert float(rho.rho.coefficients[0, 0]) > 0
        independent = BivariateModel(x, y, constant_rho(0.0, 0, planar_box)).loglik(X, Y)
        assert BivariateModel(x, y, rho).loglik(X, Y) >= independent - 1e-9

    def test_fit_rho_pointwise(self, planar_points: np.ndarray, planar_box: BoundingBox) -> None:
        """Test recovery of a constant rho from constant sample correlations."""
        counts = np.full(len(planar_points), 100)
        gamma_hat = np.full(len(planar_points), 0.5)
        gamma_hat[2] = np.nan

        def gamma_fn(rho: CrossCorrField) -> np.ndarray:
            r = rho.evaluate(planar_points)
            return r / np.sqrt(1.0 + r**2)

        rho, report = fit_rho_pointwise(gamma_fn, gamma_hat, counts, 0, planar_box)
        target = 0.5 * 99 / 100
        assert rho.evaluate(planar_points)[0] == pytest.approx(
            target / math.sqrt(1 - target**2), rel=1e-3
        )
        assert report.name == "rho_pointwise"
        assert report.loglik_trace[-1] >= report.loglik_trace[0]

    def test_fit_rho_rejects_perfect_correlation(
        self, planar_points: np.ndarray, planar_box: BoundingBox
    ) -> None:
        """Test that |gamma_hat| = 1 is rejected."""
        gamma_hat = np.zeros(len(planar_points))
        gamma_hat[5] = -1.0
        with pytest.raises(DataValidationError) as info:
            fit_rho_pointwise(
                lambda rho: np.zeros(len(planar_points)), gamma_hat, np.full(16, 10), 0, planar_box
            )
        assert info.value.context["location"] == 5

    @pytest.mark.slow  # type: ignore[misc]
    def test_pipeline(self, planar_mesh: Mesh, dataset: Dataset) -> None:
        """Test the stepwise fit end to end on a small grid."""
        options = FitOptions(order=0, rational_order=1, max_iter=3, threads=2)
        fitted = fit_pipeline(planar_mesh, dataset, options)
        assert [r.name for r in fitted.reports] == ["log_hs", "log_t", "rho_pointwise"]
        assert fitted.x.mean_field is not None
        assert np.allclose(fitted.x.mean_field, dataset.log_hs.mean(axis=0))
        assert fitted.locations is not None
        gamma = fitted.build().pointwise_crosscorr()
        assert gamma.shape == (16,)
        assert np.all(np.abs(gamma) < 1.0)

    def test_pipeline_needs_two_times(self, planar_mesh: Mesh, dataset: Dataset) -> None:
        """Test that a single time stamp cannot be fitted."""
        with pytest.raises(DataValidationError):
            fit_pipeline(planar_mesh, dataset.select_times(np.arange(8) == 0), FitOptions())


def practical_range(spec: MarginalSpec, point: np.ndarray) -> float:
    """sqrt(8 nu) / kappa_eff of a stationary isotropic spec, nu = alpha - 1."""
    _, kappa = spec.deformation.H_kappa(point.reshape(1, 2))
    return math.sqrt(8.0 * (spec.alpha - 1.0)) / math.sqrt(float(kappa[0]))


@pytest.mark.slow  # type: ignore[misc]
class TestParameterRecovery:
    """Test that fits recover the parameters of data simulated from the model."""

    TRUE_RANGE = 4.0
    NUGGET = 0.01

    @pytest.fixture(scope="class")  # type: ignore[misc]
    def grid(self) -> tuple[Mesh, np.ndarray, BoundingBox]:
        points = lattice(12, 12)
        mesh = build_lonlat_mesh(points, extension_width=3.0, spherical=False)
        return mesh.with_observations(points), points, BoundingBox.from_points(points)

    @pytest.fixture(scope="class")  # type: ignore[misc]
    def truth(self, grid: tuple[Mesh, np.ndarray, BoundingBox]) -> MarginalSpec:
        _, _, box = grid
        # kappa_eff = sqrt(kappa) for the isotropic deformation
        kappa = 8.0 / self.TRUE_RANGE**2
        return isotropic_spec(kappa, 2.0, self.NUGGET, 0, box)

    def observe(self, mesh: Mesh, nodal: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        A = mesh.observation_map
        assert A is not None
        clean = np.asarray(A @ nodal.T).T
        return clean + math.sqrt(self.NUGGET) * rng.standard_normal(clean.shape)

    def test_marginal_smoothness_and_range(
        self, grid: tuple[Mesh, np.ndarray, BoundingBox], truth: MarginalSpec
    ) -> None:
        """Test alpha within 0.3 and the practical range within 20 percent."""
        mesh, points, box = grid
        model = MarginalModel(mesh, truth)
        data = self.observe(mesh, model.sample(200, seed=11), np.random.default_rng(12))
        spec, report = fit_marginal(
            mesh,
            points,
            data,
            box,
            order=0,
            alpha_init=1.5,
            nugget_init=0.05,
            max_iter=80,
            gtol=1e-4,
        )
        centre = points.mean(axis=0)
        assert report.loglik_trace[-1] >= report.loglik_trace[0]
        assert spec.alpha == pytest.approx(2.0, abs=0.3)
        assert practical_range(spec, centre) == pytest.approx(self.TRUE_RANGE, rel=0.2)

    @pytest.mark.parametrize(  # type: ignore[misc]
        ("rho", "tolerance"), [(0.0, 0.1), (1.0, 0.2)], ids=["independent", "coupled"]
    )
    def test_constant_rho(
        self,
        grid: tuple[Mesh, np.ndarray, BoundingBox],
        truth: MarginalSpec,
        rho: float,
        tolerance: float,
    ) -> None:
        """Test the pointwise fit of rho and the sample correlation rho / sqrt(1 + rho^2)."""
        mesh, points, box = grid
        x, y = MarginalModel(mesh, truth), MarginalModel(mesh, truth)
        ux, uy = BivariateModel(x, y, constant_rho(rho, 0, box)).sample(300, seed=21)
        rng = np.random.default_rng(22)
        X, Y = self.observe(mesh, ux, rng), self.observe(mesh, uy, rng)
        stats = sample_crosscorr_stats(points, X, Y, radius_cells=0)
        assert np.nanmean(stats.gamma_hat) == pytest.approx(rho / math.sqrt(1 + rho**2), abs=0.05)

        def gamma_fn(field: CrossCorrField) -> np.ndarray:
            return BivariateModel(x, y, field).pointwise_crosscorr(include_nugget=True)

        fitted, _ = fit_rho_pointwise(
            gamma_fn, stats.gamma_hat, stats.counts, 0, box, max_iter=50, gtol=1e-4
        )
        assert fitted.evaluate(points).mean() == pytest.approx(rho, abs=tolerance)
