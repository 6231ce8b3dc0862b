# Core configuration, logging and error hierarchy tests

import io
import json
from pathlib import Path

import pytest
import structlog

from src.core.config import Settings, get_settings, load_settings
from src.core.exceptions import (
    AssemblyError,
    ConfigError,
    DataError,
    DataValidationError,
    LocationError,
    NotPositiveDefiniteError,
    NumericalError,
    SeaStateError,
)
from src.core.logging_config import get_logger, setup_logging


class TestCoreConfiguration:
    """Test core configuration functionality."""

    def test_settings_defaults(self) -> None:
        """Test that the reference configuration is the default."""
        settings = Settings()
        assert settings.app_name == "seastate-spde"
        assert settings.basis_order == 4
        assert settings.rational_order == 2
        assert settings.route_points == 100
        assert settings.ship_speed == 10.0
        assert settings.route_duration_hours == pytest.approx(149.69)
        assert settings.cutoff_angle_deg == 75.0
        assert settings.dangerous_slopes == (-0.4, -0.2)

    def test_settings_import(self) -> None:
        """Test that cached settings can be imported and initialized."""
        settings = get_settings()
        assert settings.environment in ["development", "testing", "staging", "production"]
        assert isinstance(settings.debug, bool)

    def test_env_file_overrides(self, tmp_path: Path) -> None:
        """Test that an explicit env file overrides defaults."""
        env = tmp_path / "run.env"
        env.write_text("BASIS_ORDER=2\nRHO_FIT_METHOD=FULLML\nSEED=7\n", encoding="utf-8")
        settings = load_settings(env)
        assert settings.basis_order == 2
        assert settings.rho_fit_method == "fullml"
        assert settings.seed == 7

    def test_missing_env_file(self, tmp_path: Path) -> None:
        """Test that a missing configuration file is a configuration error."""
        with pytest.raises(ConfigError):
            load_settings(tmp_path / "absent.env")

    @pytest.mark.parametrize(  # type: ignore[misc]
        "line",
        [
            "CUTOFF_ANGLE_DEG=95",
            "RATIONAL_ORDER=0",
            "DANGEROUS_SLOPE_LO=-0.1",
            "RHO_FIT_METHOD=grid",
            "LOG_FORMAT=xml",
        ],
    )
    def test_invalid_values(self, tmp_path: Path, line: str) -> None:
        """Test that validation failures surface as ConfigError with exit code 4."""
        env = tmp_path / "bad.env"
        env.write_text(line + "\n", encoding="utf-8")
        with pytest.raises(ConfigError) as info:
            load_settings(env)
        assert info.value.exit_code == 4

    def test_config_hash_is_stable(self) -> None:
        """Test that the hash depends on values only."""
        a = Settings(SEED=3)
        b = Settings(SEED=3)
        c = Settings(SEED=4)
        assert a.config_hash == b.config_hash
        assert a.config_hash != c.config_hash
        assert len(a.config_hash) == 16


class TestLogging:
    """Test structured logging setup."""

    def test_logging_setup(self) -> None:
        """Test that logging can be set up without errors."""
        setup_logging()
        logger = get_logger(__name__)
        assert logger is not None

    def test_json_lines_carry_context(self) -> None:
        """Test that bound context variables reach JSON log lines."""
        stream = io.StringIO()
        setup_logging(Settings(LOG_FORMAT="json", LOG_LEVEL="INFO"), stream=stream)
        structlog.contextvars.bind_contextvars(run_id="abc123", command="fit")
        try:
            structlog.get_logger("seastate.test").info("Fit finished", iterations=12)
        finally:
            structlog.contextvars.clear_contextvars()
            setup_logging(Settings(LOG_LEVEL="WARNING", LOG_FORMAT="text"))
        record = json.loads(stream.getvalue().strip().splitlines()[-1])
        assert record["event"] == "Fit finished"
        assert record["run_id"] == "abc123"
        assert record["command"] == "fit"
        assert record["iterations"] == 12
        assert record["level"] == "info"


class TestErrorHierarchy:
    """Test error families and their exit codes."""

    def test_exit_codes(self) -> None:
        """Test that each family maps to its documented exit code."""
        assert DataValidationError("bad row", line=3).exit_code == 2
        assert NotPositiveDefiniteError("pivot", pivot=5).exit_code == 3
        assert ConfigError("bad").exit_code == 4
        assert issubclass(LocationError, DataError)
        assert issubclass(AssemblyError, NumericalError)
        assert issubclass(NumericalError, SeaStateError)

    def test_context_in_message(self) -> None:
        """Test that structured context is rendered into the message."""
        error = LocationError("Location outside the mesh", index=4)
        assert error.index == 4
        assert "index=4" in str(error)
