"""
Plain-text file formats.

- series CSV: ``time,lon,lat,hs,t1`` rows, validated one by one
- route CSV: ``lon,lat``; direction field CSV: ``lon,lat,theta_deg``
- model file: ``key=value`` header lines followed by ``[section]`` CSV blocks;
  the mesh is written next to it
- output CSVs: a provenance comment line, then a header and the rows

Every file written here is a pure function of its inputs, so reruns with the
same data, configuration and seed give identical bytes.
"""

import io
from collections.abc import Iterable
from datetime import timedelta
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import ValidationError

from src.core.exceptions import DataValidationError, MissingStatisticsError
from src.core.logging_config import get_logger
from src.models.series import SeaStateRecord
from src.services.bivarmodel import MarginalSpec
from src.services.estimation import FittedModel, utc_naive
from src.services.mesh import read_mesh, write_mesh
from src.services.paramfield import BoundingBox, CosineField, CrossCorrField, DeformationParams
from src.services.riskroute import WaveDirectionField

log = get_logger("seastate.storage")

SERIES_COLUMNS = ["time", "lon", "lat", "hs", "t1"]
_FIELD_SECTIONS = ("h1", "h2", "h3")


def provenance_header(config_hash: str, seed: int) -> str:
    return f"# seastate-spde config_hash={config_hash} seed={seed}"


def _read_table(
    path: str | Path, columns: list[str], rename: dict[str, str] | None = None
) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, comment="#", dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataValidationError(f"Cannot read {path}: {exc}") from exc
    if rename:
        frame = frame.rename(columns=rename)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataValidationError(f"Missing columns {missing} in {path}", line=1)
    return frame


def _data_line_numbers(path: str | Path) -> list[int]:
    """1-based file line numbers of the data rows (after comments and the header)."""
    numbers = []
    header_seen = False
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if not header_seen:
                header_seen = True
                continue
            numbers.append(number)
    return numbers


def read_series(path: str | Path, rename: dict[str, str] | None = None) -> list[SeaStateRecord]:
    """
    Read and validate a series CSV.

    ``rename`` maps input column names to ``time``, ``lon``, ``lat``, ``hs`` and ``t1``.

    Raises:
        DataValidationError: a malformed or out-of-range row; ``line`` is its line number.
    """
    frame = _read_table(path, SERIES_COLUMNS, rename)
    lines = _data_line_numbers(path)
    records = []
    for row, number in zip(frame[SERIES_COLUMNS].itertuples(index=False), lines, strict=False):
        try:
            records.append(SeaStateRecord(**dict(zip(SERIES_COLUMNS, row, strict=True))))
        except ValidationError as exc:
            first = exc.errors()[0]
            field = ".".join(str(p) for p in first["loc"])
            raise DataValidationError(f"Invalid {field}: {first['msg']}", line=number) from exc
    log.info("Series read", path=str(path), records=len(records))
    return records


def thin_records(records: Iterable[SeaStateRecord], hours: float) -> list[SeaStateRecord]:
    """Keep records whose offset from the first stamp is a multiple of ``hours``; 0 keeps all."""
    rows = list(records)
    if hours <= 0 or not rows:
        return rows
    start = min(utc_naive(r.time) for r in rows)
    period = timedelta(hours=hours)
    return [r for r in rows if (utc_naive(r.time) - start) % period == timedelta(0)]


def write_series(records: Iterable[SeaStateRecord], path: str | Path, header: str) -> None:
    rows = [
        {
            "time": r.time.isoformat(),
            "lon": r.lon,
            "lat": r.lat,
            "hs": r.hs,
            "t1": r.t1,
        }
        for r in records
    ]
    write_table(pd.DataFrame(rows, columns=SERIES_COLUMNS), path, header)


def write_table(frame: pd.DataFrame, path: str | Path, header: str) -> None:
    """Write ``frame`` as CSV under a provenance comment line."""
    buffer = io.StringIO()
    buffer.write(header + "\n")
    frame.to_csv(buffer, index=False, lineterminator="\n")
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")


def read_points(path: str | Path) -> NDArray[np.float64]:
    """Read a ``lon,lat`` CSV such as a route file."""
    frame = _read_table(path, ["lon", "lat"])
    try:
        return frame[["lon", "lat"]].astype(float).to_numpy()
    except ValueError as exc:
        raise DataValidationError(f"Non-numeric coordinates in {path}") from exc


def read_directions(path: str | Path) -> WaveDirectionField:
    frame = _read_table(path, ["lon", "lat", "theta_deg"])
    try:
        values = frame[["lon", "lat", "theta_deg"]].astype(float).to_numpy()
    except ValueError as exc:
        raise DataValidationError(f"Non-numeric direction field in {path}") from exc
    return WaveDirectionField(locations=values[:, :2], theta_deg=values[:, 2])


# =============================================================================
# MODEL FILE
# =============================================================================


def _field_block(name: str, field: CosineField) -> list[str]:
    lines = [f"[{name}]"]
    lines += [",".join(repr(float(v)) for v in row) for row in field.coefficients]
    return lines


def write_model(fitted: FittedModel, path: str | Path, header: str) -> Path:
    """Write the model file and its mesh; returns the mesh path."""
    if fitted.locations is None or fitted.x.mean_field is None or fitted.y.mean_field is None:
        raise MissingStatisticsError("Model has no per-location statistics to write")
    path = Path(path)
    mesh_path = path.with_suffix(".mesh")
    write_mesh(fitted.mesh, mesh_path)
    x, y = fitted.x, fitted.y
    lines = [
        header,
        f"order={fitted.x.deformation.order}",
        f"rational_order={fitted.rational_order}",
        f"alpha_x={x.alpha!r}",
        f"alpha_y={y.alpha!r}",
        f"nugget_x={x.nugget!r}",
        f"nugget_y={y.nugget!r}",
        f"box_origin={fitted.box.origin[0]!r},{fitted.box.origin[1]!r}",
        f"box_extents={fitted.box.extents[0]!r},{fitted.box.extents[1]!r}",
        f"mesh={mesh_path.name}",
    ]
    for suffix, spec in (("x", x), ("y", y)):
        d = spec.deformation
        for name, field in zip(_FIELD_SECTIONS, (d.h1, d.h2, d.h3), strict=True):
            lines += _field_block(f"{name}_{suffix}", field)
    lines += _field_block("rho", fitted.rho.rho)
    lines.append("[stats]")
    lines.append("lon,lat,mean_x,var_x,mean_y,var_y")
    stats = np.column_stack(
        [fitted.locations, x.mean_field, x.var_field, y.mean_field, y.var_field]
    )
    lines += [",".join(repr(float(v)) for v in row) for row in stats]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("Model written", path=str(path), mesh=str(mesh_path))
    return mesh_path


def _sections(text: str) -> tuple[dict[str, str], dict[str, list[str]]]:
    header: dict[str, str] = {}
    blocks: dict[str, list[str]] = {}
    current: str | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            blocks[current] = []
        elif current is None:
            if "=" not in line:
                raise DataValidationError("Expected key=value in model header", line=number)
            key, value = line.split("=", 1)
            header[key.strip()] = value.strip()
        else:
            blocks[current].append(line)
    return header, blocks


def _matrix(lines: list[str]) -> NDArray[np.float64]:
    return np.asarray([[float(v) for v in line.split(",")] for line in lines], dtype=float)


def read_model(path: str | Path) -> FittedModel:
    """Read a model file and its mesh."""
    path = Path(path)
    header, blocks = _sections(path.read_text(encoding="utf-8"))
    try:
        origin = tuple(float(v) for v in header["box_origin"].split(","))
        extents = tuple(float(v) for v in header["box_extents"].split(","))
        box = BoundingBox(origin=(origin[0], origin[1]), extents=(extents[0], extents[1]))

        def field(name: str) -> CosineField:
            return CosineField(_matrix(blocks[name]), box)

        stats_lines = blocks["stats"]
        stats = _matrix(stats_lines[1:])
        locations = stats[:, :2]
        specs = {}
        for suffix, mean_col in (("x", 2), ("y", 4)):
            deformation = DeformationParams(*(field(f"{n}_{suffix}") for n in _FIELD_SECTIONS))
            specs[suffix] = MarginalSpec(
                deformation=deformation,
                alpha=float(header[f"alpha_{suffix}"]),
                nugget=float(header[f"nugget_{suffix}"]),
                mean_field=stats[:, mean_col],
                var_field=stats[:, mean_col + 1],
            )
        mesh = read_mesh(path.parent / header["mesh"]).with_observations(locations)
        fitted = FittedModel(
            mesh=mesh,
            box=box,
            x=specs["x"],
            y=specs["y"],
            rho=CrossCorrField(field("rho")),
            reports=[],
            rational_order=int(header.get("rational_order", "2")),
            locations=locations,
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise DataValidationError(f"Malformed model file {path}: {exc}") from exc
    return fitted
