# Shared fixtures: small planar and spherical meshes and stationary model specs

from collections.abc import Callable
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from src.core.config import Settings
from src.core.logging_config import setup_logging
from src.models.series import SeaStateRecord
from src.services.bivarmodel import MarginalSpec
from src.services.estimation import FittedModel, isotropic_spec
from src.services.mesh import Mesh, build_lonlat_mesh
from src.services.paramfield import BoundingBox, CosineField, CrossCorrField, DeformationParams


def lattice(
    nx: int, ny: int, spacing: float = 1.0, origin: tuple[float, float] = (0.0, 0.0)
) -> np.ndarray:
    """Regular (nx * ny, 2) grid of chart points."""
    xs = origin[0] + spacing * np.arange(nx)
    ys = origin[1] + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


@pytest.fixture(autouse=True, scope="session")
def _quiet_logging() -> None:
    """Route test logs through the text renderer at warning level."""
    setup_logging(Settings(LOG_LEVEL="WARNING", LOG_FORMAT="text"))


@pytest.fixture  # type: ignore[misc]
def planar_points() -> np.ndarray:
    """4 x 4 lattice with unit spacing."""
    return lattice(4, 4)


@pytest.fixture  # type: ignore[misc]
def planar_mesh(planar_points: np.ndarray) -> Mesh:
    """Planar mesh of the 4 x 4 lattice with one extension ring, observed at the lattice."""
    mesh = build_lonlat_mesh(planar_points, extension_width=1.0, spherical=False)
    return mesh.with_observations(planar_points)


@pytest.fixture  # type: ignore[misc]
def planar_box(planar_points: np.ndarray) -> BoundingBox:
    return BoundingBox.from_points(planar_points)


@pytest.fixture  # type: ignore[misc]
def sphere_points() -> np.ndarray:
    """5 x 4 lon/lat grid with 0.75 degree spacing in the north Atlantic."""
    return lattice(5, 4, spacing=0.75, origin=(-40.0, 45.0))


@pytest.fixture  # type: ignore[misc]
def sphere_mesh(sphere_points: np.ndarray) -> Mesh:
    mesh = build_lonlat_mesh(sphere_points, extension_width=1.5, spherical=True)
    return mesh.with_observations(sphere_points)


@pytest.fixture  # type: ignore[misc]
def stationary_spec(planar_box: BoundingBox) -> MarginalSpec:
    """Stationary marginal with kappa = 1.5, alpha = 2 and a small nugget."""
    return isotropic_spec(kappa=1.5, alpha=2.0, nugget=0.05, order=1, box=planar_box)


@pytest.fixture  # type: ignore[misc]
def fitted_model(
    planar_mesh: Mesh, planar_points: np.ndarray, planar_box: BoundingBox
) -> FittedModel:
    """Non-stationary model with per-location statistics on the planar lattice."""
    m = len(planar_points)
    rng = np.random.default_rng(0)
    base = isotropic_spec(1.5, 2.0, 0.05, 1, planar_box).deformation
    h3 = CosineField(np.array([[0.0, 0.2], [-0.1, 0.05]]), planar_box)
    x = MarginalSpec(
        DeformationParams(base.h1, base.h2, h3),
        2.0,
        0.05,
        0.8 + 0.1 * rng.standard_normal(m),
        np.full(m, 0.09),
    )
    y = MarginalSpec(
        isotropic_spec(0.9, 1.6, 0.02, 1, planar_box).deformation,
        1.6,
        0.02,
        np.full(m, 2.0),
        0.01 + rng.uniform(size=m) * 1e-3,
    )
    rho = CrossCorrField(CosineField(np.array([[0.4, 0.1], [0.0, -0.2]]), planar_box))
    return FittedModel(
        mesh=planar_mesh,
        box=planar_box,
        x=x,
        y=y,
        rho=rho,
        reports=[],
        rational_order=1,
        locations=planar_points,
    )


@pytest.fixture  # type: ignore[misc]
def make_records() -> Callable[..., list[SeaStateRecord]]:
    """Factory of synthetic gridded records: one record per location and time stamp."""

    def factory(
        locations: np.ndarray,
        n_times: int,
        step_hours: float = 6.0,
        seed: int = 0,
        start: datetime = datetime(2001, 1, 1),
    ) -> list[SeaStateRecord]:
        rng = np.random.default_rng(seed)
        records = []
        for i in range(n_times):
            common = rng.standard_normal()
            for lon, lat in locations:
                z = 0.7 * common + 0.3 * rng.standard_normal()
                records.append(
                    SeaStateRecord(
                        time=start + timedelta(hours=step_hours * i),
                        lon=float(lon),
                        lat=float(lat),
                        hs=float(np.exp(0.8 + 0.3 * z)),
                        t1=float(np.exp(1.9 + 0.1 * z + 0.05 * rng.standard_normal())),
                    )
                )
        return records

    return factory


@pytest.fixture  # type: ignore[misc]
def series_csv(tmp_path: Path) -> Callable[[str], Path]:
    """Write raw CSV text to a temporary file."""

    def write(text: str, name: str = "series.csv") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
