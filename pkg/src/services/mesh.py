"""
Triangular FEM mesh over the observation domain.

Meshes are built in a two-dimensional chart (longitude/latitude in degrees, or
planar x/y) and embedded in 3D: on the unit sphere for spherical domains, or
in the z = 0 plane otherwise. Each triangle is planar in the embedding. An
extension zone of structured rings around the data hull pushes the Dirichlet
boundary away from the observations; its triangles carry the extension flag.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import Delaunay, QhullError, cKDTree

from src.core.exceptions import DataValidationError, LocationError, MeshConstructionError
from src.core.logging_config import get_logger

log = get_logger("seastate.mesh")

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

_BARY_TOL = 1e-9
_SNAP_TOL = 1e-12
_MAX_LAT = 89.0


class RegionFlag(str, Enum):
    """Which part of the domain a triangle belongs to."""

    INTERIOR = "interior"
    EXTENSION = "extension"


@dataclass(frozen=True)
class Vertex:
    position: tuple[float, float, float]
    index: int


@dataclass(frozen=True)
class Triangle:
    vertex_indices: tuple[int, int, int]
    region_flag: RegionFlag


def to_embedding(chart: ArrayLike, spherical: bool) -> FloatArray:
    """Map chart coordinates to 3D: unit sphere from lon/lat degrees, or the z = 0 plane."""
    xy = np.atleast_2d(np.asarray(chart, dtype=float))
    if not spherical:
        return np.column_stack([xy[:, 0], xy[:, 1], np.zeros(len(xy))])
    lon, lat = np.radians(xy[:, 0]), np.radians(xy[:, 1])
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def _signed_areas(chart: FloatArray, triangles: IntArray) -> FloatArray:
    a, b, c = (chart[triangles[:, i]] for i in range(3))
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    return 0.5 * cross


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Conforming triangulation with interior/extension flags.

    ``points`` are the embedded vertex positions, ``chart`` the 2D coordinates
    the parameter fields are evaluated in. ``observation_map`` is attached by
    ``with_observations``.
    """

    points: FloatArray
    chart: FloatArray
    triangles: IntArray
    extension: NDArray[np.bool_]
    spherical: bool
    observation_map: sp.csr_matrix | None = None

    @property
    def n_vertices(self) -> int:
        return int(self.points.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def vertices(self) -> list[Vertex]:
        return [Vertex(position=tuple(p), index=i) for i, p in enumerate(self.points.tolist())]

    @property
    def triangle_list(self) -> list[Triangle]:
        return [
            Triangle(
                vertex_indices=tuple(t),
                region_flag=RegionFlag.EXTENSION if ext else RegionFlag.INTERIOR,
            )
            for t, ext in zip(self.triangles.tolist(), self.extension.tolist(), strict=True)
        ]

    @cached_property
    def areas(self) -> FloatArray:
        """Triangle areas in the embedding."""
        p0, p1, p2 = (self.points[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)

    @cached_property
    def centroid_chart(self) -> FloatArray:
        return self.chart[self.triangles].mean(axis=1)

    @cached_property
    def edges(self) -> tuple[IntArray, IntArray]:
        """Unique undirected edges and the number of triangles sharing each."""
        t = self.triangles
        all_edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        unique, counts = np.unique(all_edges, axis=0, return_counts=True)
        return unique, counts

    @cached_property
    def boundary_vertices(self) -> IntArray:
        """Vertices on edges that belong to a single triangle."""
        unique, counts = self.edges
        return np.unique(unique[counts == 1])

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def interior_area(self) -> float:
        return float(self.areas[~self.extension].sum())

    def with_observations(self, locations: ArrayLike) -> "Mesh":
        """Copy of the mesh carrying the observation matrix of ``locations``."""
        return replace(self, observation_map=observation_matrix(self, locations))


def _check_points(points: FloatArray, tol: float) -> None:
    if points.ndim != 2 or points.shape[1] != 2:
        raise MeshConstructionError("Expected an array of (lon, lat) pairs", shape=points.shape)
    if len(points) < 3:
        raise MeshConstructionError("At least 3 points are required", count=len(points))
    if not np.all(np.isfinite(points)):
        raise MeshConstructionError("Point coordinates must be finite")
    pairs = cKDTree(points).query_pairs(r=tol)
    if pairs:
        i, j = sorted(next(iter(pairs)))
        raise MeshConstructionError("Duplicate points", first=i, second=j, count=len(pairs))
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    if singular[-1] <= 1e-12 * max(singular[0], 1e-300):
        raise MeshConstructionError("Points are collinear")


def _lattice_nodes(points: FloatArray, resolution: float) -> FloatArray:
    """Regular lattice clipped to the hull of ``points``, plus the hull vertices."""
    hull = Delaunay(points)
    lo, hi = points.min(axis=0), points.max(axis=0)
    xs = np.arange(lo[0], hi[0] + 0.5 * resolution, resolution)
    ys = np.arange(lo[1], hi[1] + 0.5 * resolution, resolution)
    grid = np.column_stack([g.ravel() for g in np.meshgrid(xs, ys)])
    inside = grid[hull.find_simplex(grid, tol=1e-9) >= 0]
    corners = points[np.unique(hull.convex_hull)]
    nodes = np.concatenate([corners, inside])
    tree = cKDTree(nodes)
    keep = np.ones(len(nodes), dtype=bool)
    for i, j in sorted(tree.query_pairs(r=1e-3 * resolution)):
        if keep[i]:
            keep[j] = False
    return nodes[keep]


def _boundary_loop(chart: FloatArray, triangles: IntArray) -> IntArray:
    """Ordered counter-clockwise outer boundary of a CCW triangulation."""
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    boundary = directed[counts[inverse.ravel()] == 1]
    nxt = dict(zip(boundary[:, 0].tolist(), boundary[:, 1].tolist(), strict=True))

    loops: list[list[int]] = []
    unvisited = set(nxt)
    while unvisited:
        start = min(unvisited)
        loop = [start]
        unvisited.discard(start)
        current = nxt[start]
        while current != start:
            loop.append(current)
            unvisited.discard(current)
            current = nxt[current]
        loops.append(loop)

    def loop_area(loop: list[int]) -> float:
        p = chart[loop]
        return 0.5 * float(np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]))

    return np.asarray(max(loops, key=loop_area), dtype=np.int64)


def _extension_rings(
    chart: FloatArray, loop: IntArray, width: float, spherical: bool
) -> tuple[FloatArray, IntArray]:
    """
    Rings offset outward from the boundary loop, joined by quads split in two.

    Returns the new chart points and the new triangles, indexed against the
    concatenation of the existing and new points.
    """
    poly = chart[loop]
    edge = np.roll(poly, -1, axis=0) - poly
    lengths = np.linalg.norm(edge, axis=1)
    normals = np.column_stack([edge[:, 1], -edge[:, 0]]) / lengths[:, None]
    before, after = np.roll(normals, 1, axis=0), normals
    denom = np.maximum(1.0 + np.sum(before * after, axis=1), 0.25)
    miter = (before + after) / denom[:, None]

    spacing = float(np.median(lengths))
    n_layers = max(1, math.ceil(width / spacing - 1e-9))
    n_loop, n_old = len(loop), len(chart)

    new_points = []
    rings = [loop]
    for layer in range(1, n_layers + 1):
        ring = poly + (width * layer / n_layers) * miter
        if spherical:
            ring[:, 1] = np.clip(ring[:, 1], -_MAX_LAT, _MAX_LAT)
        new_points.append(ring)
        rings.append(n_old + (layer - 1) * n_loop + np.arange(n_loop))

    new_triangles = []
    for inner, outer in zip(rings[:-1], rings[1:], strict=True):
        a, b = inner, np.roll(inner, -1)
        c, d = np.roll(outer, -1), outer
        new_triangles.append(np.column_stack([a, c, b]))
        new_triangles.append(np.column_stack([a, d, c]))
    return np.concatenate(new_points), np.concatenate(new_triangles).astype(np.int64)


def _orient_ccw(chart: FloatArray, triangles: IntArray) -> IntArray:
    flipped = _signed_areas(chart, triangles) < 0
    out = triangles.copy()
    out[flipped, 1], out[flipped, 2] = triangles[flipped, 2], triangles[flipped, 1]
    return out


def build_lonlat_mesh(
    grid: ArrayLike,
    extension_width: float,
    spherical: bool = True,
    resolution: float | None = None,
    duplicate_tol: float = 1e-9,
) -> Mesh:
    """
    Triangulate lon/lat points and surround them with an extension zone.

    Args:
        grid: (M, 2) array of chart coordinates (degrees for spherical meshes).
        extension_width: width of the extension zone in chart units, >= 0.
        spherical: embed vertices on the unit sphere instead of the plane.
        resolution: optional node spacing; the data points themselves are used when unset.

    Raises:
        MeshConstructionError: fewer than 3 points, duplicates or collinear input.
    """
    points = np.asarray(grid, dtype=float)
    if extension_width < 0:
        raise MeshConstructionError("Extension width must be non-negative", width=extension_width)
    _check_points(points, duplicate_tol)
    nodes = _lattice_nodes(points, resolution) if resolution else points

    try:
        tri = Delaunay(nodes)
    except QhullError as exc:
        raise MeshConstructionError("Delaunay triangulation failed", reason=str(exc)) from exc

    triangles = _orient_ccw(nodes, tri.simplices.astype(np.int64))
    areas = _signed_areas(nodes, triangles)
    keep = areas > _SNAP_TOL * np.median(areas)
    if not keep.all():
        log.warning("Removed degenerate triangles", count=int((~keep).sum()))
        triangles = triangles[keep]

    chart = nodes
    extension = np.zeros(len(triangles), dtype=bool)
    if extension_width > 0:
        loop = _boundary_loop(chart, triangles)
        ring_points, ring_triangles = _extension_rings(chart, loop, extension_width, spherical)
        chart = np.concatenate([chart, ring_points])
        ring_triangles = _orient_ccw(chart, ring_triangles)
        triangles = np.concatenate([triangles, ring_triangles])
        extension = np.concatenate([extension, np.ones(len(ring_triangles), dtype=bool)])

    mesh = Mesh(
        points=to_embedding(chart, spherical),
        chart=chart,
        triangles=triangles,
        extension=extension,
        spherical=spherical,
    )
    log.info(
        "Mesh built",
        vertices=mesh.n_vertices,
        triangles=mesh.n_triangles,
        extension_triangles=int(extension.sum()),
        spherical=spherical,
    )
    return mesh


def _barycentric(corners: FloatArray, p: FloatArray) -> FloatArray:
    """Barycentric coordinates of points p (..., 2) in triangles corners (..., 3, 2)."""
    a, b, c = corners[..., 0, :], corners[..., 1, :], corners[..., 2, :]
    v0, v1, v2 = b - a, c - a, p - a
    den = v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]
    l1 = (v2[..., 0] * v1[..., 1] - v1[..., 0] * v2[..., 1]) / den
    l2 = (v0[..., 0] * v2[..., 1] - v2[..., 0] * v0[..., 1]) / den
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _barycentric_3d(corners: FloatArray, p: FloatArray) -> FloatArray:
    """Barycentric coordinates of the radial projection of p (n, 3) onto triangles (n, 3, 3)."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    normal = np.cross(b - a, c - a)
    scale = np.einsum("ij,ij->i", normal, a) / np.einsum("ij,ij->i", normal, p)
    q = scale[:, None] * p
    area2 = np.einsum("ij,ij->i", normal, normal)
    la = np.einsum("ij,ij->i", normal, np.cross(b - q, c - q)) / area2
    lb = np.einsum("ij,ij->i", normal, np.cross(c - q, a - q)) / area2
    return np.stack([la, lb, 1.0 - la - lb], axis=-1)


def locate(mesh: Mesh, locations: ArrayLike) -> tuple[IntArray, FloatArray]:
    """Containing triangle of each chart location, -1 outside, and its chart weights."""
    locs = np.atleast_2d(np.asarray(locations, dtype=float))
    corners = mesh.chart[mesh.triangles]
    k = min(16, mesh.n_triangles)
    _, candidates = cKDTree(mesh.centroid_chart).query(locs, k=k)
    candidates = candidates.reshape(len(locs), k)

    bary = _barycentric(corners[candidates], locs[:, None, :])
    inside = bary.min(axis=2) >= -_BARY_TOL
    found = inside.any(axis=1)
    first = np.argmax(inside, axis=1)
    rows_tri = candidates[np.arange(len(locs)), first].astype(np.int64)
    weights = bary[np.arange(len(locs)), first]

    for i in np.flatnonzero(~found):
        full = _barycentric(corners, locs[i][None, :])
        hits = np.flatnonzero(full.min(axis=1) >= -_BARY_TOL)
        rows_tri[i] = hits[0] if hits.size else -1
        weights[i] = full[hits[0]] if hits.size else np.nan
    return rows_tri, weights


def observation_matrix(mesh: Mesh, locations: ArrayLike) -> sp.csr_matrix:
    """
    Barycentric interpolation matrix A from nodal values to ``locations``.

    The containing triangle is found in the chart. On the sphere the weights
    are those of the location projected radially onto the plane of that
    triangle, so they agree with the piecewise-linear basis of the 3D mesh.

    Raises:
        LocationError: a location lies outside every triangle; ``index`` names it.
    """
    locs = np.atleast_2d(np.asarray(locations, dtype=float))
    rows_tri, weights = locate(mesh, locs)
    outside = np.flatnonzero(rows_tri < 0)
    if outside.size:
        i = int(outside[0])
        raise LocationError("Location outside the mesh", index=i, location=locs[i].tolist())

    if mesh.spherical:
        weights = _barycentric_3d(mesh.points[mesh.triangles[rows_tri]], to_embedding(locs, True))
    weights = np.clip(weights, 0.0, 1.0)
    weights[weights < _SNAP_TOL] = 0.0
    weights /= weights.sum(axis=1, keepdims=True)
    rows = np.repeat(np.arange(len(locs)), 3)
    cols = mesh.triangles[rows_tri].ravel()
    A = sp.csr_matrix((weights.ravel(), (rows, cols)), shape=(len(locs), mesh.n_vertices))
    A.eliminate_zeros()
    return A


# =============================================================================
# TEXT FORMAT
# =============================================================================


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    """Write ``v x y z`` and ``t i j k flag`` lines."""
    lon_range = 360 if mesh.spherical and np.any(mesh.chart[:, 0] > 180.0) else 180
    lines = [f"# mesh spherical={int(mesh.spherical)} lon_range={lon_range}"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.points.tolist()]
    for (i, j, k), ext in zip(mesh.triangles.tolist(), mesh.extension.tolist(), strict=True):
        flag = RegionFlag.EXTENSION.value if ext else RegionFlag.INTERIOR.value
        lines.append(f"t {i} {j} {k} {flag}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mesh(path: str | Path) -> Mesh:
    """Read a mesh written by ``write_mesh``."""
    spherical, lon_range = True, 180
    points: list[list[float]] = []
    triangles: list[list[int]] = []
    flags: list[bool] = []
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if token.startswith("spherical="):
                    spherical = token.split("=", 1)[1] == "1"
                elif token.startswith("lon_range="):
                    lon_range = int(token.split("=", 1)[1])
            continue
        parts = line.split()
        try:
            if parts[0] == "v" and len(parts) == 4:
                points.append([float(v) for v in parts[1:]])
            elif parts[0] == "t" and len(parts) == 5:
                triangles.append([int(v) for v in parts[1:4]])
                flags.append(RegionFlag(parts[4]) is RegionFlag.EXTENSION)
            else:
                raise ValueError(f"unexpected record {parts[0]!r}")
        except ValueError as exc:
            raise DataValidationError(f"Malformed mesh line: {exc}", line=number) from exc

    xyz = np.asarray(points, dtype=float)
    if spherical:
        lon = np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0]))
        if lon_range == 360:
            lon = np.mod(lon, 360.0)
        lat = np.degrees(np.arcsin(np.clip(xyz[:, 2], -1.0, 1.0)))
        chart = np.column_stack([lon, lat])
    else:
        chart = xyz[:, :2].copy()
    tri = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if tri.size and (tri.min() < 0 or tri.max() >= len(xyz)):
        raise DataValidationError("Triangle index out of range")
    return Mesh(
        points=xyz,
        chart=chart,
        triangles=tri,
        extension=np.asarray(flags, dtype=bool),
        spherical=spherical,
    )
