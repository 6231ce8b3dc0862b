# Bretschneider spectrum, period conversions and spectral moments

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from src.models.seastate import CutoffPolicy, PeriodKind, SeaStateParams, SpectralMoments
from src.services.seastate import (
    _unit_moment,
    bretschneider,
    convert_period,
    convert_period_array,
    spectral_moments,
    spectral_moments_array,
)


class TestPeriods:
    """Test period kinds and conversions."""

    def test_peak_frequency(self) -> None:
        """Test wp = 2 pi / Tp for each period kind."""
        assert SeaStateParams(hs=1.0, period=10.0).peak_frequency == pytest.approx(2 * math.pi / 10)
        tz = SeaStateParams(hs=1.0, period=10.0, kind=PeriodKind.TZ)
        assert tz.peak_period == pytest.approx(14.08)

    @pytest.mark.parametrize(  # type: ignore[misc]
        ("value", "src", "dst", "expected"),
        [
            (10.0, "Tz", "Tp", 14.08),
            (12.965, "Tp", "T1", 10.0),
            (8.0, "T1", "Tz", 8.0 * 1.2965 / 1.408),
            (7.0, "Tp", "Tp", 7.0),
        ],
    )
    def test_convert(self, value: float, src: str, dst: str, expected: float) -> None:
        """Test conversions through the peak period ratios."""
        assert convert_period(value, src, dst) == pytest.approx(expected)

    @given(
        st.floats(0.5, 30.0),
        st.sampled_from(list(PeriodKind)),
        st.sampled_from(list(PeriodKind)),
    )  # type: ignore[misc]
    def test_round_trip(self, value: float, src: PeriodKind, dst: PeriodKind) -> None:
        """Test that converting there and back returns the period."""
        there = convert_period(value, src, dst)
        assert there > 0
        assert convert_period(there, dst, src) == pytest.approx(value, rel=1e-12)

    def test_convert_array(self) -> None:
        """Test the vectorized conversion."""
        out = convert_period_array([1.0, 2.0], PeriodKind.TZ, PeriodKind.TP)
        assert np.allclose(out, [1.408, 2.816])

    def test_invalid_input(self) -> None:
        """Test rejection of non-positive periods and unknown kinds."""
        with pytest.raises(ValueError):
            convert_period(0.0, "Tp", "Tz")
        with pytest.raises(ValueError):
            convert_period(5.0, "Tp", "Tm")
        with pytest.raises(ValidationError):
            SeaStateParams(hs=-1.0, period=8.0)


class TestBretschneider:
    """Test the spectral density."""

    def test_peak_location(self) -> None:
        """Test that the density peaks at the peak frequency."""
        params = SeaStateParams(hs=3.0, period=9.0)
        omega = np.linspace(0.2, 2.0, 20001)
        peak = omega[np.argmax(bretschneider(params, omega))]
        assert peak == pytest.approx(params.peak_frequency, abs=1e-3)

    def test_scales_with_height_squared(self) -> None:
        """Test S proportional to Hs^2 at fixed period."""
        omega = np.array([0.4, 0.7, 1.3])
        small = bretschneider(SeaStateParams(hs=1.0, period=8.0), omega)
        large = bretschneider(SeaStateParams(hs=3.0, period=8.0), omega)
        assert np.allclose(large, 9.0 * small)

    def test_non_positive_frequency(self) -> None:
        """Test that zero frequency is rejected."""
        with pytest.raises(ValueError):
            bretschneider(SeaStateParams(hs=1.0, period=8.0), [0.0, 1.0])


class TestSpectralMoments:
    """Test moments against closed forms of the full spectrum."""

    def test_variance_is_hs_squared_over_16(self) -> None:
        """Test m00 = Hs^2 / 16 over the full bandwidth."""
        moments = spectral_moments(SeaStateParams(hs=4.0, period=11.0), CutoffPolicy.full())
        assert moments.m00 == pytest.approx(1.0, rel=1e-5)

    def test_zero_crossing_period_ratio(self) -> None:
        """Test that the full-bandwidth Tp / Tz ratio is 1.408."""
        params = SeaStateParams(hs=2.0, period=10.0)
        moments = spectral_moments(params, CutoffPolicy.full())
        tz = 2 * math.pi * math.sqrt(moments.m00 / moments.m02)
        assert params.peak_period / tz == pytest.approx(1.408, rel=1e-3)

    def test_mean_period_ratio(self) -> None:
        """Test Tp / T1 = 1.25^(1/4) Gamma(3/4), close to 1.2965."""
        policy = CutoffPolicy.full()
        m0 = _unit_moment(0, policy.lo_factor, policy.hi_factor)
        m1 = _unit_moment(1, policy.lo_factor, policy.hi_factor)
        assert m1 / m0 == pytest.approx(1.25**0.25 * math.gamma(0.75), rel=1e-5)
        assert m1 / m0 == pytest.approx(1.2965, rel=2e-3)

    def test_limited_bandwidth(self) -> None:
        """Test that the limited policy integrates over [0.3, 8] wp and loses little variance."""
        params = SeaStateParams(hs=2.0, period=8.0)
        limited = spectral_moments(params)
        full = spectral_moments(params, CutoffPolicy.full())
        assert limited.omega_lo == pytest.approx(0.3 * params.peak_frequency)
        assert limited.omega_hi == pytest.approx(8.0 * params.peak_frequency)
        assert limited.m00 < full.m00
        assert limited.m00 == pytest.approx(full.m00, rel=1e-3)
        assert limited.m11**2 <= limited.m20 * limited.m02

    def test_scaling(self) -> None:
        """Test m_ij proportional to Hs^2 and the array version."""
        one = spectral_moments(SeaStateParams(hs=1.0, period=6.0, kind=PeriodKind.T1))
        arr = spectral_moments_array([1.0, 2.5], [6.0, 6.0], PeriodKind.T1)
        for name in ("m00", "m02", "m11", "m20"):
            assert arr[name][0] == pytest.approx(getattr(one, name), rel=1e-12)
            assert arr[name][1] == pytest.approx(6.25 * getattr(one, name), rel=1e-12)

    def test_array_rejects_non_positive(self) -> None:
        """Test that non-positive heights are rejected."""
        with pytest.raises(ValueError):
            spectral_moments_array([1.0, 0.0], [6.0, 6.0], PeriodKind.T1)

    def test_policy_and_moment_validation(self) -> None:
        """Test ordering of cutoffs and positive semidefiniteness of the moments."""
        with pytest.raises(ValidationError):
            CutoffPolicy(lo_factor=2.0, hi_factor=1.0)
        with pytest.raises(ValidationError):
            SpectralMoments(m00=1.0, m02=1.0, m11=2.0, m20=1.0, omega_lo=0.1, omega_hi=1.0)
