"""
Data models package for seastate-spde.

This package contains the validated value objects shared by the numerical
services and the command-line front end:
- Sea-state parameters, period kinds and spectral moments
- Fatigue and broaching configurations for the route-risk engines
- Fit reports produced by the estimation pipeline
- Gridded input records
"""

from .fit import FitReport
from .risk import (
    GRAVITY,
    BroachingConfig,
    FatigueConfig,
    PeriodModel,
    RiskEngine,
    TravelDirection,
)
from .seastate import (
    PEAK_PERIOD_RATIO,
    CutoffPolicy,
    PeriodKind,
    SeaStateParams,
    SpectralMoments,
)
from .series import SeaStateRecord

__all__ = [
    "GRAVITY",
    "PEAK_PERIOD_RATIO",
    "BroachingConfig",
    "CutoffPolicy",
    "FatigueConfig",
    "FitReport",
    "PeriodKind",
    "PeriodModel",
    "RiskEngine",
    "SeaStateParams",
    "SeaStateRecord",
    "SpectralMoments",
    "TravelDirection",
]
