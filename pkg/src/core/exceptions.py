"""
Error hierarchy for seastate-spde.

Every error raised by the numerical modules derives from ``SeaStateError`` and
belongs to one of three families. The family fixes the process exit code used
by the command-line front end:

- ``DataError`` (2): bad input data, meshes or locations
- ``NumericalError`` (3): factorizations, fits and quadratures that fail
- ``ConfigError`` (4): invalid settings or configuration files
"""

from typing import Any


class SeaStateError(Exception):
    """Base class carrying an exit code and structured context for logging."""

    exit_code: int = 1

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


# =============================================================================
# DATA ERRORS
# =============================================================================
class DataError(SeaStateError):
    """Input data violates a documented invariant."""

    exit_code = 2


class MeshConstructionError(DataError):
    """Degenerate point set: too few, duplicate or collinear points."""


class LocationError(DataError):
    """A location lies outside every mesh triangle."""

    def __init__(self, message: str, index: int, **context: Any) -> None:
        super().__init__(message, index=index, **context)
        self.index = index


class DataValidationError(DataError, ValueError):
    """A malformed or out-of-range record in an input file."""

    def __init__(self, message: str, line: int | None = None, **context: Any) -> None:
        super().__init__(message, line=line, **context)
        self.line = line


class MissingStatisticsError(DataError):
    """Per-location statistics required by a transform are missing."""


# =============================================================================
# NUMERICAL ERRORS
# =============================================================================
class NumericalError(SeaStateError):
    """A numerical procedure failed."""

    exit_code = 3


class NotPositiveDefiniteError(NumericalError):
    """Cholesky met a non-positive pivot."""

    def __init__(self, message: str, pivot: int, **context: Any) -> None:
        super().__init__(message, pivot=pivot, **context)
        self.pivot = pivot


class PatternError(NumericalError):
    """A requested inverse entry lies outside the selected pattern."""


class RationalFitError(NumericalError):
    """The rational approximation could not be fitted."""

    def __init__(self, message: str, residual: float, **context: Any) -> None:
        super().__init__(message, residual=residual, **context)
        self.residual = residual


class ConditioningError(NumericalError):
    """A factor of the fractional operator is singular."""


class AssemblyError(NumericalError):
    """Finite element assembly met an invalid triangle or coefficient."""

    def __init__(self, message: str, triangle: int | None = None, **context: Any) -> None:
        super().__init__(message, triangle=triangle, **context)
        self.triangle = triangle


class ParameterOverflowError(NumericalError):
    """Parameter fields produced non-finite values."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach its tolerance."""

    def __init__(self, message: str, error_estimate: float, **context: Any) -> None:
        super().__init__(message, error_estimate=error_estimate, **context)
        self.error_estimate = error_estimate


class DegenerateSeaError(NumericalError):
    """Slope correlation of magnitude one: the sea is degenerate."""


class ModelError(NumericalError):
    """The assembled model precision is not usable."""


# =============================================================================
# CONFIGURATION ERRORS
# =============================================================================
class ConfigError(SeaStateError):
    """Invalid configuration."""

    exit_code = 4
