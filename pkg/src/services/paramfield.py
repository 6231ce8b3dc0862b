"""
Spatially varying model parameters as cosine-basis regressions.

Each scalar field h(s) = sum_n sum_p beta_np cos(n pi s1 / S1) cos(p pi s2 / S2)
is evaluated in the chart of the observation bounding box, shifted so that the
box starts at the origin. Three such fields define the deformation matrix
H~(s), from which the operator coefficients kappa(s) and H(s) follow; a fourth
field is the cross-correlation rho(s) of the bivariate model.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core.exceptions import DataValidationError, ParameterOverflowError

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class BoundingBox:
    """Origin and strictly positive extents (S1, S2) of the cosine basis."""

    origin: tuple[float, float]
    extents: tuple[float, float]

    def __post_init__(self) -> None:
        if not all(np.isfinite(self.origin)) or min(self.extents) <= 0:
            raise DataValidationError("Bounding box extents must be positive", extents=self.extents)

    @classmethod
    def from_points(cls, points: ArrayLike) -> "BoundingBox":
        xy = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        extents = (float(hi[0] - lo[0]), float(hi[1] - lo[1]))
        return cls(origin=(float(lo[0]), float(lo[1])), extents=extents)


@dataclass(frozen=True, eq=False)
class CosineField:
    """Coefficient matrix beta of shape (k + 1, k + 1) over a bounding box."""

    coefficients: FloatArray
    box: BoundingBox

    def __post_init__(self) -> None:
        beta = np.asarray(self.coefficients, dtype=float)
        if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
            raise DataValidationError(
                f"Coefficients must be a square matrix, got shape {beta.shape}"
            )
        if not np.all(np.isfinite(beta)):
            raise ParameterOverflowError("Cosine coefficients must be finite")
        object.__setattr__(self, "coefficients", beta)

    @classmethod
    def zeros(cls, order: int, box: BoundingBox) -> "CosineField":
        if order < 0:
            raise DataValidationError("Basis order must be non-negative")
        return cls(np.zeros((order + 1, order + 1)), box)

    @classmethod
    def constant(cls, value: float, order: int, box: BoundingBox) -> "CosineField":
        field = np.zeros((order + 1, order + 1))
        field[0, 0] = value
        return cls(field, box)

    @property
    def order(self) -> int:
        return self.coefficients.shape[0] - 1

    @property
    def n_coefficients(self) -> int:
        return self.coefficients.size

    def basis(self, points: ArrayLike) -> tuple[FloatArray, FloatArray]:
        """Cosine factors along each axis, shapes (n, k + 1)."""
        xy = np.atleast_2d(np.asarray(points, dtype=float))
        harmonics = np.arange(self.order + 1) * np.pi
        u = (xy[:, 0] - self.box.origin[0]) / self.box.extents[0]
        v = (xy[:, 1] - self.box.origin[1]) / self.box.extents[1]
        return np.cos(np.outer(u, harmonics)), np.cos(np.outer(v, harmonics))

    def design_matrix(self, points: ArrayLike) -> FloatArray:
        """Matrix X with X @ coefficients.ravel() equal to the field at ``points``."""
        cu, cv = self.basis(points)
        return (cu[:, :, None] * cv[:, None, :]).reshape(len(cu), -1)

    def evaluate(self, points: ArrayLike) -> FloatArray:
        cu, cv = self.basis(points)
        return np.einsum("in,np,ip->i", cu, self.coefficients, cv)

    def with_coefficients(self, coefficients: ArrayLike) -> "CosineField":
        beta = np.asarray(coefficients, dtype=float).reshape(self.coefficients.shape)
        return CosineField(beta, self.box)


def eval_cosine(field: CosineField, s: ArrayLike) -> float:
    """Field value at a single chart point."""
    return float(field.evaluate(np.asarray(s, dtype=float).reshape(1, 2))[0])


@dataclass(frozen=True)
class DeformationParams:
    """
    Deformation fields h1, h2, h3.

    H~ = [[e^h1, t e^((h1+h2)/2)], [t e^((h1+h2)/2), e^h2]] with t = 2 S(h3) - 1
    and S the logistic sigmoid, so |t| < 1 and H~ is positive definite for any
    finite coefficients.
    """

    h1: CosineField
    h2: CosineField
    h3: CosineField

    @classmethod
    def isotropic(cls, kappa: float, order: int, box: BoundingBox) -> "DeformationParams":
        """Constant fields with kappa(s) = kappa; then H = kappa I."""
        h = -float(np.log(kappa))
        return cls(
            CosineField.constant(h, order, box),
            CosineField.constant(h, order, box),
            CosineField.zeros(order, box),
        )

    @property
    def order(self) -> int:
        return self.h1.order

    def fields(self, points: ArrayLike) -> tuple[FloatArray, FloatArray, FloatArray]:
        return self.h1.evaluate(points), self.h2.evaluate(points), self.h3.evaluate(points)

    def tilde_H(self, points: ArrayLike) -> FloatArray:
        h1, h2, h3 = self.fields(points)
        with np.errstate(over="ignore", invalid="ignore"):
            off = np.tanh(0.5 * h3) * np.exp(0.5 * (h1 + h2))
            out = np.empty((len(h1), 2, 2))
            out[:, 0, 0] = np.exp(h1)
            out[:, 1, 1] = np.exp(h2)
            out[:, 0, 1] = out[:, 1, 0] = off
        if not np.all(np.isfinite(out)):
            bad = int((~np.isfinite(out)).sum())
            raise ParameterOverflowError("Deformation matrix overflowed", count=bad)
        return out

    def H_kappa(self, points: ArrayLike) -> tuple[FloatArray, FloatArray]:
        """H(s) = kappa(s)^2 H~(s) with kappa = det(H~)^(-1/2), vectorized over points."""
        h1, h2, h3 = self.fields(points)
        tilde = self.tilde_H(points)
        # det(H~) = e^(h1+h2) / cosh^2(h3/2)
        with np.errstate(over="ignore", invalid="ignore"):
            kappa = np.exp(-0.5 * (h1 + h2)) * np.cosh(0.5 * h3)
            H = (kappa**2)[:, None, None] * tilde
        if not (np.all(np.isfinite(kappa)) and np.all(np.isfinite(H))) or np.any(kappa <= 0):
            raise ParameterOverflowError("Operator coefficients overflowed")
        return H, kappa


def eval_H_kappa(d: DeformationParams, s: ArrayLike) -> tuple[FloatArray, float]:
    """H (2x2) and kappa at a single chart point."""
    H, kappa = d.H_kappa(np.asarray(s, dtype=float).reshape(1, 2))
    return H[0], float(kappa[0])


@dataclass(frozen=True)
class CrossCorrField:
    """Cross-correlation field rho(s); unrestricted real values."""

    rho: CosineField

    @classmethod
    def constant(cls, value: float, order: int, box: BoundingBox) -> "CrossCorrField":
        return cls(CosineField.constant(value, order, box))

    def evaluate(self, points: ArrayLike) -> FloatArray:
        values = self.rho.evaluate(points)
        if not np.all(np.isfinite(values)):
            raise ParameterOverflowError("Cross-correlation field is not finite")
        return values


# =============================================================================
# PARAMETER VECTORS
# =============================================================================


def n_field_coefficients(order: int) -> int:
    return (order + 1) ** 2


def pack_deformation(d: DeformationParams) -> FloatArray:
    """Concatenate h1, h2, h3 coefficients row-major."""
    return np.concatenate([f.coefficients.ravel() for f in (d.h1, d.h2, d.h3)])


def unpack_deformation(vector: ArrayLike, order: int, box: BoundingBox) -> DeformationParams:
    v = np.asarray(vector, dtype=float)
    n = n_field_coefficients(order)
    if v.size != 3 * n:
        raise DataValidationError(f"Expected {3 * n} deformation coefficients, got {v.size}")
    shape = (order + 1, order + 1)
    return DeformationParams(
        CosineField(v[:n].reshape(shape), box),
        CosineField(v[n : 2 * n].reshape(shape), box),
        CosineField(v[2 * n :].reshape(shape), box),
    )


def pack_cross(rho: CrossCorrField) -> FloatArray:
    return rho.rho.coefficients.ravel().copy()


def unpack_cross(vector: ArrayLike, order: int, box: BoundingBox) -> CrossCorrField:
    v = np.asarray(vector, dtype=float)
    if v.size != n_field_coefficients(order):
        raise DataValidationError(
            f"Expected {n_field_coefficients(order)} rho coefficients, got {v.size}"
        )
    return CrossCorrField(CosineField(v.reshape(order + 1, order + 1), box))
