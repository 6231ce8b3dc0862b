# Series, route and model file formats

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.core.exceptions import DataValidationError, MissingStatisticsError
from src.models.series import SeaStateRecord
from src.services.estimation import FittedModel, constant_rho
from src.services.storage import (
    provenance_header,
    read_directions,
    read_model,
    read_points,
    read_series,
    thin_records,
    write_model,
    write_series,
    write_table,
)

SERIES = """\
# hourly export
time,lon,lat,hs,t1
2001-01-01T00:00:00Z,-40.0,45.0,2.5,7.1
2001-01-01T06:00:00Z,-40.0,45.0,2.7,7.4
"""


class TestSeriesFiles:
    """Test reading, thinning and writing series CSVs."""

    def test_read_series(self, series_csv: Callable[..., Path]) -> None:
        """Test parsing with comments and UTC time stamps."""
        records = read_series(series_csv(SERIES))
        assert len(records) == 2
        assert records[1].hs == 2.7
        assert records[0].time.utcoffset() is not None

    def test_bad_row_names_its_line(self, series_csv: Callable[..., Path]) -> None:
        """Test that an invalid value reports the file line number."""
        path = series_csv(SERIES + "2001-01-01T12:00:00Z,-40.0,45.0,-1.0,7.0\n")
        with pytest.raises(DataValidationError) as info:
            read_series(path)
        assert info.value.line == 5
        assert "hs" in str(info.value)
        assert info.value.exit_code == 2

    def test_missing_column(self, series_csv: Callable[..., Path]) -> None:
        """Test that a missing column is reported on the header line."""
        with pytest.raises(DataValidationError) as info:
            read_series(series_csv("time,lon,lat,hs\n2001-01-01,0,0,1\n"))
        assert info.value.line == 1

    def test_renamed_columns(self, series_csv: Callable[..., Path]) -> None:
        """Test mapping of input column names."""
        path = series_csv("time,lon,lat,swh,mwp\n2001-01-01T00:00:00,1,2,3.0,8.0\n")
        (record,) = read_series(path, rename={"swh": "hs", "mwp": "t1"})
        assert (record.hs, record.t1) == (3.0, 8.0)

    def test_thin_records(self, make_records: Callable[..., list[SeaStateRecord]]) -> None:
        """Test that thinning keeps multiples of the period from the first stamp."""
        records = make_records(np.array([[0.0, 0.0], [1.0, 0.0]]), 8, step_hours=6.0)
        kept = thin_records(records, 12.0)
        assert len(kept) == 8
        assert {r.time.hour for r in kept} == {0, 12}
        assert thin_records(records, 0) == records

    def test_write_then_read(
        self, tmp_path: Path, make_records: Callable[..., list[SeaStateRecord]]
    ) -> None:
        """Test that written series are read back with the provenance line skipped."""
        records = make_records(np.array([[0.0, 0.0]]), 3)
        path = tmp_path / "out.csv"
        write_series(records, path, provenance_header("abc", 7))
        assert path.read_text().splitlines()[0] == "# seastate-spde config_hash=abc seed=7"
        assert read_series(path) == records


class TestTables:
    """Test route, direction and output tables."""

    def test_write_table_is_deterministic(self, tmp_path: Path) -> None:
        """Test identical bytes for identical frames."""
        frame = pd.DataFrame({"value": [0.1, 0.25], "lower": [0.0, 0.5]})
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_table(frame, a, "# header")
        write_table(frame, b, "# header")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text() == "# header\nvalue,lower\n0.1,0.0\n0.25,0.5\n"

    def test_read_points(self, series_csv: Callable[..., Path]) -> None:
        """Test a lon,lat route file."""
        points = read_points(series_csv("lon,lat\n-70.0,40.0\n-10.0,50.0\n", "route.csv"))
        assert points.tolist() == [[-70.0, 40.0], [-10.0, 50.0]]
        with pytest.raises(DataValidationError):
            read_points(series_csv("lon,lat\n-70.0,north\n", "bad.csv"))

    def test_read_directions(self, series_csv: Callable[..., Path]) -> None:
        """Test a direction field file."""
        field = read_directions(series_csv("lon,lat,theta_deg\n0,0,90\n1,0,180\n", "dirs.csv"))
        assert field.theta_deg.tolist() == [90.0, 180.0]
        assert field.locations.shape == (2, 2)


class TestModelFile:
    """Test the model file round trip."""

    def test_round_trip(self, fitted_model: FittedModel, tmp_path: Path) -> None:
        """Test that a read model has the parameters and correlations of the written one."""
        path = tmp_path / "model.txt"
        mesh_path = write_model(fitted_model, path, provenance_header("h", 1))
        assert mesh_path == tmp_path / "model.mesh"
        loaded = read_model(path)
        assert loaded.rational_order == 1
        assert loaded.x.alpha == fitted_model.x.alpha
        h3 = loaded.x.deformation.h3.coefficients
        assert np.array_equal(h3, fitted_model.x.deformation.h3.coefficients)
        assert np.array_equal(loaded.rho.rho.coefficients, fitted_model.rho.rho.coefficients)
        assert np.array_equal(loaded.y.var_field, fitted_model.y.var_field)
        assert np.array_equal(loaded.mesh.points, fitted_model.mesh.points)
        expected = fitted_model.build().pointwise_crosscorr()
        assert np.allclose(loaded.build().pointwise_crosscorr(), expected, atol=1e-12)

    def test_requires_statistics(self, fitted_model: FittedModel, tmp_path: Path) -> None:
        """Test that a model without per-location statistics cannot be written."""
        bare = FittedModel(
            mesh=fitted_model.mesh,
            box=fitted_model.box,
            x=fitted_model.x,
            y=fitted_model.y,
            rho=constant_rho(0.3, 1, fitted_model.box),
            reports=[],
        )
        with pytest.raises(MissingStatisticsError):
            write_model(bare, tmp_path / "model.txt", "# h")

    def test_malformed_file(self, tmp_path: Path) -> None:
        """Test that a model file without required keys is rejected."""
        path = tmp_path / "model.txt"
        path.write_text("order=1\n[stats]\nlon,lat\n", encoding="utf-8")
        with pytest.raises(DataValidationError):
            read_model(path)
