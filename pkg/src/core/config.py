"""
Configuration management for seastate-spde.

This module provides the configuration system using Pydantic BaseSettings for
type-safe environment variable management with validation, computed properties,
and environment-specific defaults. The same settings object drives the mesh
construction, the model fit, the simulation and the route-risk engines.
"""

import hashlib
from functools import lru_cache
from pathlib import Path

from pydantic import Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from src.core.exceptions import ConfigError


class Settings(BaseSettings):
    """
    Application settings with validation.

    All settings have defaults so that a bare environment runs the reference
    configuration: basis order 4, rational order 2, a 100-point route sailed at
    10 m/s for 149.69 hours, and a 75 degree cutoff angle for broaching.

    Features:
    - Type-safe environment variable loading
    - Optional env file given on the command line
    - Custom validation for numerical settings
    - Stable configuration hash for output provenance
    """

    # =============================================================================
    # APPLICATION CONFIGURATION
    # =============================================================================
    app_name: str = Field(default="seastate-spde", description="Application name", alias="APP_NAME")
    app_version: str = Field(
        default="1.0.0", description="Application version", alias="APP_VERSION"
    )
    environment: str = Field(
        default="development", description="Deployment environment", alias="ENVIRONMENT"
    )
    debug: bool = Field(default=False, description="Enable debug mode", alias="DEBUG")

    # =============================================================================
    # LOGGING CONFIGURATION
    # =============================================================================
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_format: str = Field(default="json", alias="LOG_FORMAT")  # json or text

    # =============================================================================
    # MESH CONFIGURATION
    # =============================================================================
    extension_width: float = Field(
        default=2.0, description="Width of the extension zone in degrees", alias="EXTENSION_WIDTH"
    )
    mesh_resolution: float | None = Field(
        default=None,
        description="Node spacing in degrees; data locations are used when unset",
        alias="MESH_RESOLUTION",
    )
    spherical_mesh: bool = Field(
        default=True, description="Map vertices onto the unit sphere", alias="SPHERICAL_MESH"
    )

    # =============================================================================
    # MODEL CONFIGURATION
    # =============================================================================
    basis_order: int = Field(default=4, description="Cosine basis order k", alias="BASIS_ORDER")
    rational_order: int = Field(
        default=2, description="Order m of the rational approximation", alias="RATIONAL_ORDER"
    )

    # =============================================================================
    # OPTIMIZER CONFIGURATION
    # =============================================================================
    optimizer_max_iter: int = Field(default=500, alias="OPTIMIZER_MAX_ITER")
    optimizer_gtol: float = Field(default=1e-5, alias="OPTIMIZER_GTOL")
    fd_rel_step: float = Field(default=1e-5, alias="FD_REL_STEP")
    threads: int = Field(default=1, description="Worker threads", alias="THREADS")

    # =============================================================================
    # ESTIMATION CONFIGURATION
    # =============================================================================
    rho_fit_method: str = Field(default="pointwise", alias="RHO_FIT_METHOD")  # pointwise or fullml
    shift_radius_cells: int = Field(default=5, alias="SHIFT_RADIUS_CELLS")
    use_shifted_crosscorr: bool = Field(default=False, alias="USE_SHIFTED_CROSSCORR")
    include_nugget_in_gamma: bool = Field(default=False, alias="INCLUDE_NUGGET_IN_GAMMA")

    # =============================================================================
    # SIMULATION & RISK CONFIGURATION
    # =============================================================================
    seed: int = Field(default=0, alias="SEED")
    n_realizations: int = Field(default=600, alias="N_REALIZATIONS")
    n_repeats: int = Field(default=200, alias="N_REPEATS")
    route_points: int = Field(default=100, alias="ROUTE_POINTS")
    ship_speed: float = Field(default=10.0, description="Ship speed in m/s", alias="SHIP_SPEED")
    route_duration_hours: float = Field(default=149.69, alias="ROUTE_DURATION_HOURS")
    route_start_lon: float = Field(default=-74.0, alias="ROUTE_START_LON")
    route_start_lat: float = Field(default=40.5, alias="ROUTE_START_LAT")
    route_end_lon: float = Field(default=-5.5, alias="ROUTE_END_LON")
    route_end_lat: float = Field(default=49.5, alias="ROUTE_END_LAT")
    cutoff_angle_deg: float = Field(default=75.0, alias="CUTOFF_ANGLE_DEG")
    dangerous_slope_lo: float = Field(default=-0.4, alias="DANGEROUS_SLOPE_LO")
    dangerous_slope_hi: float = Field(default=-0.2, alias="DANGEROUS_SLOPE_HI")
    lambda_unit_scale: float = Field(default=1.0, alias="LAMBDA_UNIT_SCALE")

    # =============================================================================
    # VALIDATION METHODS
    # =============================================================================
    @field_validator("environment")
    @classmethod
    def validate_environment(cls, v: str) -> str:
        """Validate environment is one of accepted values."""
        allowed_envs = ["development", "testing", "staging", "production"]
        if v.lower() not in allowed_envs:
            raise ValueError(f"Environment must be one of {allowed_envs}")
        return v.lower()

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is acceptable."""
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"Log level must be one of {allowed_levels}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        """Validate log format."""
        if v.lower() not in ("json", "text"):
            raise ValueError("Log format must be 'json' or 'text'")
        return v.lower()

    @field_validator("rho_fit_method")
    @classmethod
    def validate_rho_fit_method(cls, v: str) -> str:
        """Validate the cross-correlation estimator."""
        if v.lower() not in ("pointwise", "fullml"):
            raise ValueError("Cross-correlation fit must be 'pointwise' or 'fullml'")
        return v.lower()

    @field_validator("extension_width")
    @classmethod
    def validate_extension_width(cls, v: float) -> float:
        """Extension width may be zero but not negative."""
        if v < 0:
            raise ValueError("Extension width must be non-negative")
        return v

    @field_validator("mesh_resolution", "ship_speed", "route_duration_hours", "optimizer_gtol")
    @classmethod
    def validate_positive(cls, v: float | None) -> float | None:
        """Ensure strictly positive values."""
        if v is not None and v <= 0:
            raise ValueError("Value must be strictly positive")
        return v

    @field_validator("fd_rel_step")
    @classmethod
    def validate_fd_step(cls, v: float) -> float:
        """Finite-difference step must be small and positive."""
        if not 0 < v < 1e-1:
            raise ValueError("Finite-difference step must lie in (0, 0.1)")
        return v

    @field_validator(
        "rational_order", "optimizer_max_iter", "threads", "n_realizations", "n_repeats"
    )
    @classmethod
    def validate_at_least_one(cls, v: int) -> int:
        """Counts must be at least one."""
        if v < 1:
            raise ValueError("Value must be at least 1")
        return v

    @field_validator("basis_order", "shift_radius_cells", "seed")
    @classmethod
    def validate_non_negative(cls, v: int) -> int:
        """Orders, radii and seeds are non-negative."""
        if v < 0:
            raise ValueError("Value must be non-negative")
        return v

    @field_validator("route_points")
    @classmethod
    def validate_route_points(cls, v: int) -> int:
        """A route needs at least two points."""
        if v < 2:
            raise ValueError("Route needs at least 2 points")
        return v

    @field_validator("cutoff_angle_deg")
    @classmethod
    def validate_cutoff_angle(cls, v: float) -> float:
        """Ensure cutoff angle lies strictly between 0 and 90 degrees."""
        if not 0 < v < 90:
            raise ValueError("Cutoff angle must be between 0 and 90 degrees")
        return v

    @model_validator(mode="after")
    def validate_cross_fields(self) -> "Settings":
        """Check constraints spanning several fields."""
        if not self.dangerous_slope_lo < self.dangerous_slope_hi <= 0:
            raise ValueError("Dangerous slope interval must satisfy lo < hi <= 0")
        if (self.route_start_lon, self.route_start_lat) == (self.route_end_lon, self.route_end_lat):
            raise ValueError("Route endpoints must be distinct")
        return self

    # =============================================================================
    # COMPUTED PROPERTIES
    # =============================================================================
    @property
    def is_development(self) -> bool:
        """Check if running in development environment."""
        return self.environment == "development"

    @property
    def is_testing(self) -> bool:
        """Check if running in testing environment."""
        return self.environment == "testing"

    @property
    def dangerous_slopes(self) -> tuple[float, float]:
        """Dangerous slope interval A."""
        return (self.dangerous_slope_lo, self.dangerous_slope_hi)

    @property
    def config_hash(self) -> str:
        """Stable hash of every setting, recorded in output headers."""
        payload = self.model_dump_json(by_alias=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore",
        "case_sensitive": False,
        "populate_by_name": True,
    }


@lru_cache
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Using lru_cache ensures settings are loaded only once per process
    lifecycle, improving performance and ensuring consistency.

    Returns:
        Cached Settings instance
    """
    return Settings()


def load_settings(path: str | Path | None = None) -> Settings:
    """
    Build settings from an explicit env file, bypassing the cache.

    Raises:
        ConfigError: if the file is missing or a value fails validation.
    """
    if path is None:
        return get_settings()
    env_path = Path(path)
    if not env_path.is_file():
        raise ConfigError(f"Configuration file not found: {env_path}", path=str(env_path))
    try:
        return Settings(_env_file=env_path)  # type: ignore[call-arg]
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration in {env_path}", errors=exc.errors()) from exc


# Global settings instance for convenient access
settings = get_settings()
