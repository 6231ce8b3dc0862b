"""
Sea-state data models.

Business Context:
- A sea state is summarized by the significant wave height Hs and one period
- Periods come in three kinds related by fixed ratios under a Bretschneider spectrum
- Spectral moments feed the overtaking and slope laws of the broaching engine
"""

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

# =============================================================================
# PERIODS
# =============================================================================


class PeriodKind(str, Enum):
    """Wave period definitions."""

    TP = "Tp"  # spectral peak period
    T1 = "T1"  # mean period
    TZ = "Tz"  # mean zero-crossing period


# Tp = 1.408 Tz = 1.2965 T1
PEAK_PERIOD_RATIO: dict[PeriodKind, float] = {
    PeriodKind.TP: 1.0,
    PeriodKind.TZ: 1.408,
    PeriodKind.T1: 1.2965,
}


class SeaStateParams(BaseModel):
    """Significant wave height and one wave period."""

    model_config = ConfigDict(frozen=True)

    hs: float = Field(gt=0, description="Significant wave height in meters")
    period: float = Field(gt=0, description="Wave period in seconds")
    kind: PeriodKind = Field(default=PeriodKind.TP, description="Which period is given")

    @property
    def peak_period(self) -> float:
        """Spectral peak period Tp in seconds."""
        return self.period * PEAK_PERIOD_RATIO[self.kind]

    @property
    def peak_frequency(self) -> float:
        """Angular peak frequency in rad/s."""
        return 2.0 * math.pi / self.peak_period


# =============================================================================
# SPECTRAL MOMENTS
# =============================================================================


class CutoffPolicy(BaseModel):
    """
    Integration bandwidth expressed as multiples of the peak frequency.

    ``limited`` is the finite bandwidth used by the risk engines. ``full`` sets
    the upper cutoff from the analytic tails of the spectrum so that the omitted
    parts of m00 and m02 stay below the given relative tolerances.
    """

    model_config = ConfigDict(frozen=True)

    lo_factor: float = Field(default=0.3, gt=0)
    hi_factor: float = Field(default=8.0, gt=0)

    @model_validator(mode="after")
    def validate_order(self) -> "CutoffPolicy":
        """Lower cutoff must lie below the upper one."""
        if self.lo_factor >= self.hi_factor:
            raise ValueError("Lower cutoff factor must be below the upper one")
        return self

    @classmethod
    def limited(cls) -> "CutoffPolicy":
        return cls(lo_factor=0.3, hi_factor=8.0)

    @classmethod
    def full(cls, tol_m00: float = 1e-6, tol_m02: float = 1e-4) -> "CutoffPolicy":
        # Upper tail of m00 relative to the total is 1.25 (wp/w)^4, of m02 it is
        # (wp/w)^2 / (2 k) with k = sqrt(pi) / (4 sqrt(1.25)).
        k02 = math.sqrt(math.pi) / (4.0 * math.sqrt(1.25))
        hi_m00 = (1.25 / tol_m00) ** 0.25
        hi_m02 = math.sqrt(1.0 / (2.0 * k02 * tol_m02))
        return cls(lo_factor=0.3, hi_factor=max(hi_m00, hi_m02))


class SpectralMoments(BaseModel):
    """Moments m_ij = int (w^2/g)^i w^j S(w) dw of a long-crested sea."""

    model_config = ConfigDict(frozen=True)

    m00: float = Field(gt=0)
    m02: float = Field(ge=0)
    m11: float
    m20: float = Field(ge=0)
    omega_lo: float = Field(gt=0, description="Lower integration cutoff in rad/s")
    omega_hi: float = Field(gt=0, description="Upper integration cutoff in rad/s")

    @model_validator(mode="after")
    def validate_psd(self) -> "SpectralMoments":
        """[[m20, m11], [m11, m02]] must be positive semidefinite."""
        if self.m11**2 > self.m20 * self.m02 * (1.0 + 1e-10):
            raise ValueError("Spectral moment matrix is not positive semidefinite")
        return self
