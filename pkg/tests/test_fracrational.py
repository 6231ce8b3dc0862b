# Rational approximation of fractional operator powers

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.special import kv

from src.core.exceptions import RationalFitError
from src.services.bivarmodel import MarginalModel
from src.services.estimation import isotropic_spec
from src.services.femassembly import OperatorMatrices, assemble_operator
from src.services.fracrational import (
    build_factors,
    fit_rational,
    fractional_operator,
    spectral_interval,
    split_alpha,
)
from src.services.mesh import Mesh, build_lonlat_mesh
from src.services.paramfield import BoundingBox, DeformationParams
from tests.conftest import lattice


@pytest.fixture  # type: ignore[misc]
def planar_ops(planar_mesh: Mesh) -> OperatorMatrices:
    box = BoundingBox.from_points(planar_mesh.chart)
    return assemble_operator(planar_mesh, DeformationParams.isotropic(1.5, 0, box), 1.5)


class TestSplitAlpha:
    """Test the split of alpha / 2 into integer and fractional parts."""

    @pytest.mark.parametrize(  # type: ignore[misc]
        ("alpha", "expected"),
        [(2.0, (1, 0.0)), (1.5, (0, 0.75)), (3.0, (1, 0.5)), (4.0, (2, 0.0)), (1.0, (0, 0.5))],
    )
    def test_split(self, alpha: float, expected: tuple[int, float]) -> None:
        """Test known splits."""
        m_alpha, e = split_alpha(alpha)
        assert m_alpha == expected[0]
        assert e == pytest.approx(expected[1])

    def test_alpha_below_one(self) -> None:
        """Test that alpha below one is rejected."""
        with pytest.raises(ValueError):
            split_alpha(0.5)


class TestRationalFit:
    """Test accuracy and structure of the fitted approximation."""

    def test_accuracy_on_interval(self) -> None:
        """Test the maximum relative error of lambda^-0.75 on [2, 20] with m = 2."""
        coeffs = fit_rational(1.5, (2.0, 20.0), m=2)
        assert coeffs.max_rel_error < 1e-3
        lam = np.linspace(2.0, 20.0, 2001)
        assert coeffs.relative_error(lam).max() <= 1.5 * coeffs.max_rel_error + 1e-9

    def test_error_does_not_grow_with_order(self) -> None:
        """Test that adding terms never worsens the fit."""
        errors = [fit_rational(1.2, (0.5, 400.0), m=m).max_rel_error for m in (1, 2, 3)]
        for coarse, fine in zip(errors, errors[1:], strict=False):
            assert fine <= coarse * (1.0 + 1e-6) + 1e-12

    def test_roots_and_poles_are_real_negative(self) -> None:
        """Test that every factor (1 - r L) has a negative coefficient r."""
        coeffs = fit_rational(3.4, (0.1, 50.0), m=3)
        assert coeffs.m_alpha == 1
        assert len(coeffs.poles_r2) == 4
        assert len(coeffs.roots_r1) == 3
        assert all(r < 0 for r in coeffs.poles_r2 + coeffs.roots_r1)
        assert coeffs.scale_b > 0
        assert coeffs.scale_c > 0

    def test_integer_power_is_exact(self) -> None:
        """Test that an even alpha needs no approximation."""
        coeffs = fit_rational(4.0, (1.0, 10.0), m=2)
        assert coeffs.is_exact
        lam = np.array([1.0, 3.0, 10.0])
        assert np.allclose(coeffs.evaluate(lam), lam**-2.0)

    @pytest.mark.parametrize("interval", [(0.0, 1.0), (2.0, 1.0)])  # type: ignore[misc]
    def test_invalid_interval(self, interval: tuple[float, float]) -> None:
        """Test that an empty or non-positive interval is rejected."""
        with pytest.raises(ValueError):
            fit_rational(1.5, interval)

    def test_fit_is_cached(self) -> None:
        """Test that identical requests give identical coefficients."""
        assert fit_rational(1.7, (1.0, 80.0)) == fit_rational(1.7, (1.0, 80.0))


class TestFractionalOperator:
    """Test the sparse factors against dense matrix functions."""

    def test_spectrum_inside_interval(self, planar_ops: OperatorMatrices) -> None:
        """Test that the eigenvalues of C^-1 K lie in the computed interval."""
        lo, hi = spectral_interval(planar_ops)
        eigenvalues = sla.eigh(planar_ops.K.toarray(), planar_ops.C.toarray(), eigvals_only=True)
        assert lo < eigenvalues.min()
        assert eigenvalues.max() < hi

    def test_degenerate_interval(self, planar_ops: OperatorMatrices) -> None:
        """Test that a zero reaction coefficient gives no usable interval."""
        zero_reaction = OperatorMatrices(
            C=planar_ops.C,
            Cinv=planar_ops.Cinv,
            B=planar_ops.B,
            G=planar_ops.G,
            K=planar_ops.K,
            free=planar_ops.free,
            n_vertices=planar_ops.n_vertices,
            reaction_min=0.0,
        )
        with pytest.raises(RationalFitError):
            spectral_interval(zero_reaction)

    def test_exact_case_reproduces_k(self, planar_ops: OperatorMatrices) -> None:
        """Test that alpha = 2 gives Pl = K and Pr = I."""
        op = build_factors(planar_ops.K, planar_ops.C, fit_rational(2.0, (1.0, 2.0)))
        assert np.allclose(op.Pl.toarray(), planar_ops.K.toarray())
        assert np.allclose(op.Pr.toarray(), np.eye(op.size))
        K_inv = np.linalg.inv(planar_ops.K.toarray())
        assert np.allclose(op.covariance_dense(), K_inv @ planar_ops.C.toarray() @ K_inv)

    def test_covariance_matches_matrix_power(self, planar_ops: OperatorMatrices) -> None:
        """Test the whitened covariance against S^-alpha with S = C^-1/2 K C^-1/2."""
        alpha = 1.5
        op = fractional_operator(planar_ops, alpha, m=2)
        c_half = np.sqrt(planar_ops.C.diagonal())
        S = planar_ops.K.toarray() / np.outer(c_half, c_half)
        eigenvalues, vectors = np.linalg.eigh(S)
        exact = (vectors * eigenvalues**-alpha) @ vectors.T
        whitened = op.covariance_dense() * np.outer(c_half, c_half)
        bound = (1.0 + 1.5 * op.coeffs.max_rel_error) ** 2 - 1.0
        assert np.linalg.norm(whitened - exact, 2) <= bound * np.linalg.norm(exact, 2) + 1e-10

    def test_precision_is_symmetric(self, planar_ops: OperatorMatrices) -> None:
        """Test the latent precision Pl^T C^-1 Pl."""
        op = fractional_operator(planar_ops, 1.5)
        Q = op.precision()
        assert abs(Q - Q.T).max() == 0.0
        assert np.all(np.linalg.eigvalsh(Q.toarray()) > 0)

    def test_nested_sample_is_linear(self, planar_ops: OperatorMatrices) -> None:
        """Test that sampling applies the linear map Pr Pl^-1 column by column."""
        op = fractional_operator(planar_ops, 1.5)
        noise = np.random.default_rng(3).standard_normal((op.size, 2))
        both = op.nested_sample(noise)
        assert np.allclose(both[:, 0], op.nested_sample(noise[:, 0]))
        assert np.allclose(op.Pl @ np.linalg.solve(op.Pr.toarray(), both), noise)


def correlation_along_x(alpha: float, spacing: float, half_width: float) -> tuple[np.ndarray, ...]:
    """
    Model correlation between the centre of a square grid and the nodes east of it.

    kappa = 1 and H = I, so the continuous field is Matern with smoothness alpha - 1.
    """
    n = int(round(2.0 * half_width / spacing)) + 1
    points = lattice(n, n, spacing, (-half_width, -half_width))
    mesh = build_lonlat_mesh(points, extension_width=0.0, spherical=False)
    mesh = mesh.with_observations([[0.0, 0.0]])
    model = MarginalModel(mesh, isotropic_spec(1.0, alpha, 0.0, 0, BoundingBox.from_points(points)))

    position = np.full(mesh.n_vertices, -1)
    position[model.ops.free] = np.arange(model.n_latent)
    centre = position[np.argmin(np.linalg.norm(mesh.chart, axis=1))]
    unit = np.zeros(model.n_latent)
    unit[centre] = 1.0
    T = model.transform
    row = T @ model.chol.solve(T.T @ unit)

    east = np.flatnonzero((np.abs(mesh.chart[:, 1]) < 1e-9) & (mesh.chart[:, 0] > 0))
    east = east[position[east] >= 0]
    return mesh.chart[east, 0], row[position[east]]


@pytest.mark.slow  # type: ignore[misc]
class TestStationaryCorrelation:
    """Test the stationary model against closed-form Matern correlations."""

    def test_integer_smoothness_is_matern(self) -> None:
        """Test alpha = 2 against r K1(r) for lags of 0.2 to 2 practical ranges."""
        lags, corr = correlation_along_x(2.0, spacing=0.15, half_width=9.0)
        practical = np.sqrt(8.0)
        window = (lags >= 0.2 * practical) & (lags <= 2.0 * practical)
        expected = lags[window] * kv(1.0, lags[window])
        assert window.sum() > 20
        assert np.allclose(corr[window], expected, rtol=0.05, atol=0.0)

    def test_fractional_smoothness_is_exponential(self) -> None:
        """Test alpha = 1.5 through the rational approximation against exp(-r)."""
        lags, corr = correlation_along_x(1.5, spacing=0.08, half_width=7.0)
        practical = 2.0
        window = (lags >= 0.2 * practical) & (lags <= 2.0 * practical)
        assert window.sum() > 20
        assert np.allclose(corr[window], np.exp(-lags[window]), rtol=0.05, atol=0.0)
