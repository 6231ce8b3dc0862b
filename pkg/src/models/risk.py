"""
Route-risk configuration models.

Business Context:
- Fatigue damage uses ship/material constants C, beta and gamma
- Broaching-to capsize intensity uses a Poisson regression on Hs and T
- Route statistics are computed for either traversal direction
"""

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.seastate import PeriodKind

GRAVITY = 9.81


class TravelDirection(str, Enum):
    """Traversal direction of the transatlantic route."""

    TO_EUROPE = "toEurope"
    TO_AMERICA = "toAmerica"


class RiskEngine(str, Enum):
    """Route statistic evaluated per realization."""

    FATIGUE = "fatigue"
    BROACHING = "broaching"


class PeriodModel(str, Enum):
    """How the wave period along the route is obtained."""

    BIVARIATE = "bivariate"
    PROXY = "univariate+proxy"
    CONDITIONAL_MEAN = "univariate+conditional-mean"


class FatigueConfig(BaseModel):
    """Ship and material constants of the fatigue rate."""

    model_config = ConfigDict(frozen=True)

    c_ship: float = Field(default=20.0, gt=0, description="Design constant C")
    beta: float = Field(default=3.0, gt=0, description="Material exponent")
    gamma: float = Field(default=10.0**12.73, gt=0, description="Material constant")
    g: float = Field(default=GRAVITY, gt=0)


class BroachingConfig(BaseModel):
    """Dangerous-wave and Poisson-regression constants of the broaching engine."""

    model_config = ConfigDict(frozen=True)

    beta0: float = Field(default=math.log(0.05))
    beta_h: float = Field(default=7.5)
    beta_t: float = Field(default=-7.5)
    slope_lo: float = Field(default=-0.4)
    slope_hi: float = Field(default=-0.2)
    cutoff_angle_deg: float = Field(default=75.0, gt=0, lt=90)
    regression_period: PeriodKind = Field(
        default=PeriodKind.T1, description="Period kind entering the regression"
    )
    unit_scale: float = Field(default=1.0, gt=0, description="Scale applied to lambda")

    @model_validator(mode="after")
    def validate_interval(self) -> "BroachingConfig":
        """Dangerous slopes lie on the down-crossing branch."""
        if not self.slope_lo <= self.slope_hi <= 0:
            raise ValueError("Dangerous slope interval must satisfy lo <= hi <= 0")
        return self

    @property
    def dangerous_slopes(self) -> tuple[float, float]:
        return (self.slope_lo, self.slope_hi)
