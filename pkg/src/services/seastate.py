"""
Deterministic sea-state mathematics.

Bretschneider spectrum, conversions between period kinds and the spectral
moments of a long-crested Gaussian sea used by the broaching engine.

The spectrum scales exactly as S(w; Hs, wp) = Hs^2 / wp * s(w / wp) where s is
the spectrum with unit wave height and unit peak frequency. Moments over a
bandwidth proportional to wp therefore follow from one quadrature of s per
(i, j) and cutoff policy, scaled by Hs^2 g^-i wp^(2i + j).
"""

import math
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from src.core.exceptions import DataValidationError, QuadratureError
from src.core.logging_config import get_logger
from src.models.risk import GRAVITY
from src.models.seastate import (
    PEAK_PERIOD_RATIO,
    CutoffPolicy,
    PeriodKind,
    SeaStateParams,
    SpectralMoments,
)

log = get_logger("seastate.seastate")

_QUAD_EPSREL = 1e-11
_QUAD_ACCEPT = 1e-8


def bretschneider(params: SeaStateParams, omega: ArrayLike) -> NDArray[np.float64]:
    """
    Bretschneider spectral density S(w) = c w^-5 exp(-1.25 wp^4 / w^4).

    Args:
        params: sea state; its period is converted to the peak period.
        omega: angular frequencies in rad/s, strictly positive.

    Returns:
        Spectral density in m^2 s, same shape as ``omega``.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise DataValidationError("Angular frequency must be positive")
    wp = params.peak_frequency
    c = (1.25 / 4.0) * params.hs**2 * wp**4
    return c * w**-5 * np.exp(-1.25 * wp**4 / w**4)


def convert_period(value: float, from_kind: PeriodKind | str, to_kind: PeriodKind | str) -> float:
    """Convert a wave period between kinds under the Bretschneider ratios."""
    if value <= 0:
        raise DataValidationError("Period must be positive")
    try:
        src, dst = PeriodKind(from_kind), PeriodKind(to_kind)
    except ValueError as exc:
        raise DataValidationError(f"Unknown period kind: {exc}") from exc
    return value * PEAK_PERIOD_RATIO[src] / PEAK_PERIOD_RATIO[dst]


def convert_period_array(
    values: ArrayLike, from_kind: PeriodKind | str, to_kind: PeriodKind | str
) -> NDArray[np.float64]:
    """Vectorized ``convert_period``."""
    factor = convert_period(1.0, from_kind, to_kind)
    return np.asarray(values, dtype=float) * factor


def _unit_spectrum(u: float) -> float:
    # Hs = 1, wp = 1
    return (1.25 / 4.0) * u**-5 * math.exp(-1.25 / u**4)


@lru_cache(maxsize=64)
def _unit_moment(power: int, lo_factor: float, hi_factor: float) -> float:
    value, abserr = integrate.quad(
        lambda u: u**power * _unit_spectrum(u),
        lo_factor,
        hi_factor,
        points=[1.0] if lo_factor < 1.0 < hi_factor else None,
        epsabs=0.0,
        epsrel=_QUAD_EPSREL,
        limit=400,
    )
    if not math.isfinite(value) or abserr > _QUAD_ACCEPT * abs(value):
        raise QuadratureError(
            "Spectral moment quadrature did not converge", error_estimate=float(abserr), power=power
        )
    return float(value)


def spectral_moments(
    params: SeaStateParams, policy: CutoffPolicy | None = None, g: float = GRAVITY
) -> SpectralMoments:
    """
    Spectral moments m00, m02, m11, m20 over the policy's bandwidth.

    m_ij integrates (w^2 / g)^i w^j S(w) between ``lo_factor * wp`` and
    ``hi_factor * wp``. The default policy is the limited bandwidth [0.3, 8] wp.
    """
    policy = policy or CutoffPolicy.limited()
    wp = params.peak_frequency
    scale = params.hs**2

    def moment(i: int, j: int) -> float:
        power = 2 * i + j
        return scale * wp**power * g**-i * _unit_moment(power, policy.lo_factor, policy.hi_factor)

    return SpectralMoments(
        m00=moment(0, 0),
        m02=moment(0, 2),
        m11=moment(1, 1),
        m20=moment(2, 0),
        omega_lo=policy.lo_factor * wp,
        omega_hi=policy.hi_factor * wp,
    )


def spectral_moments_array(
    hs: ArrayLike, period: ArrayLike, kind: PeriodKind, policy: CutoffPolicy | None = None,
    g: float = GRAVITY,
) -> dict[str, NDArray[np.float64]]:
    """Moments for arrays of sea states sharing one period kind and policy."""
    policy = policy or CutoffPolicy.limited()
    hs_arr = np.asarray(hs, dtype=float)
    tp = np.asarray(period, dtype=float) * PEAK_PERIOD_RATIO[PeriodKind(kind)]
    if np.any(hs_arr <= 0) or np.any(tp <= 0):
        raise DataValidationError("Wave heights and periods must be positive")
    wp = 2.0 * np.pi / tp
    scale = hs_arr**2
    out = {}
    for name, (i, j) in {"m00": (0, 0), "m02": (0, 2), "m11": (1, 1), "m20": (2, 0)}.items():
        power = 2 * i + j
        unit = _unit_moment(power, policy.lo_factor, policy.hi_factor)
        out[name] = scale * wp**power * g**-i * unit
    return out
