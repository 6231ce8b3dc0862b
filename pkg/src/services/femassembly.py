"""
Finite element assembly of the anisotropic operator.

For the operator kappa^(2/alpha - 2) (kappa^2 - div H grad) with piecewise
linear elements, the reaction matrix B carries the coefficient kappa^(2/alpha)
and the diffusion matrix G the tensor kappa^(2/alpha - 2) H. Coefficients are
evaluated once per triangle at its centroid, so the gradient of kappa does not
enter the weak form. The mass matrix C is lumped.

Triangles are planar in the 3D embedding; gradients are taken in a per-triangle
orthonormal tangent frame aligned with east/north (or x/y on planar meshes), the
frame in which H is expressed.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from src.core.exceptions import AssemblyError
from src.core.logging_config import get_logger
from src.services.mesh import Mesh
from src.services.paramfield import CrossCorrField, DeformationParams

log = get_logger("seastate.femassembly")

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
Boundary = Literal["dirichlet", "neumann"]

_REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


@dataclass(frozen=True, eq=False)
class OperatorMatrices:
    """
    Lumped mass C, reaction B, diffusion G and K = B + G.

    Matrices are restricted to the ``free`` vertices; with the Dirichlet
    condition the mesh boundary is removed.
    """

    C: sp.dia_matrix
    Cinv: sp.dia_matrix
    B: sp.csr_matrix
    G: sp.csr_matrix
    K: sp.csr_matrix
    free: IntArray
    n_vertices: int
    reaction_min: float = float("nan")

    @property
    def size(self) -> int:
        return int(self.free.size)

    def restrict(self, matrix: sp.spmatrix) -> sp.csr_matrix:
        """Keep the free columns of a vertex-indexed matrix such as an observation matrix."""
        return sp.csr_matrix(matrix)[:, self.free]

    def extend(self, values: FloatArray) -> FloatArray:
        """Scatter free-vertex values to all vertices, zero on removed ones."""
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape[:-1] + (self.n_vertices,))
        out[..., self.free] = values
        return out


@dataclass(frozen=True, eq=False)
class CrossMatrices:
    C_rho: sp.dia_matrix
    K_rho: sp.csr_matrix


@dataclass(frozen=True, eq=False)
class TriangleGeometry:
    """Areas and physical gradients of the barycentric basis, one row per triangle."""

    areas: FloatArray
    gradients: FloatArray


def tangent_frames(mesh: Mesh) -> FloatArray:
    """Orthonormal (east, north) frame in each triangle plane, shape (T, 2, 3)."""
    p0, p1, p2 = (mesh.points[mesh.triangles[:, i]] for i in range(3))
    normal = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(normal, axis=1)
    bad = np.flatnonzero(norm <= 0)
    if bad.size:
        raise AssemblyError("Zero-area triangle", triangle=int(bad[0]))
    normal /= norm[:, None]

    if mesh.spherical:
        lon, lat = np.radians(mesh.centroid_chart).T
        east = np.column_stack([-np.sin(lon), np.cos(lon), np.zeros_like(lon)])
        north = np.column_stack(
            [-np.sin(lat) * np.cos(lon), -np.sin(lat) * np.sin(lon), np.cos(lat)]
        )
    else:
        n = mesh.n_triangles
        east = np.tile([1.0, 0.0, 0.0], (n, 1))
        north = np.tile([0.0, 1.0, 0.0], (n, 1))

    e1 = east - np.sum(east * normal, axis=1)[:, None] * normal
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(normal, e1)
    flip = np.sum(e2 * north, axis=1) < 0
    e2[flip] *= -1.0
    return np.stack([e1, e2], axis=1)


def triangle_geometry(mesh: Mesh) -> TriangleGeometry:
    frames = tangent_frames(mesh)
    p0, p1, p2 = (mesh.points[mesh.triangles[:, i]] for i in range(3))
    edges = np.stack([p1 - p0, p2 - p0], axis=2)  # (T, 3, 2)
    D = np.einsum("tkx,txc->tkc", frames, edges)  # local edge coordinates (T, 2, 2)
    det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
    bad = np.flatnonzero(np.abs(det) <= 1e-300)
    if bad.size:
        raise AssemblyError("Zero-area triangle", triangle=int(bad[0]))
    inv_D = np.linalg.inv(D)
    gradients = np.einsum("ar,trk->tak", _REF_GRAD, inv_D)
    return TriangleGeometry(areas=0.5 * np.abs(det), gradients=gradients)


def _scatter(mesh: Mesh, local: FloatArray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_mass(mesh: Mesh) -> sp.dia_matrix:
    """Lumped mass: each triangle adds a third of its area to its vertices."""
    areas = mesh.areas
    bad = np.flatnonzero(areas <= 0)
    if bad.size:
        raise AssemblyError("Zero-area triangle", triangle=int(bad[0]))
    weights = np.repeat(areas / 3.0, 3)
    diag = np.bincount(mesh.triangles.ravel(), weights=weights, minlength=mesh.n_vertices)
    return sp.diags(diag)


def assemble_consistent_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent mass <phi_i, phi_j>."""
    return _scatter(mesh, mesh.areas[:, None, None] * _LOCAL_MASS)


def free_vertices(mesh: Mesh, boundary: Boundary) -> IntArray:
    if boundary == "neumann":
        return np.arange(mesh.n_vertices)
    if boundary != "dirichlet":
        raise AssemblyError(f"Unknown boundary condition {boundary!r}")
    mask = np.ones(mesh.n_vertices, dtype=bool)
    mask[mesh.boundary_vertices] = False
    return np.flatnonzero(mask)


def assemble_from_coefficients(
    mesh: Mesh,
    reaction: FloatArray,
    diffusion: FloatArray,
    boundary: Boundary = "dirichlet",
) -> OperatorMatrices:
    """
    Assemble C, B, G and K for per-triangle coefficients.

    Args:
        reaction: (T,) coefficient multiplying the consistent local mass.
        diffusion: (T, 2, 2) symmetric positive definite tensors in the tangent frame.
    """
    reaction = np.asarray(reaction, dtype=float)
    diffusion = np.asarray(diffusion, dtype=float)
    if reaction.shape != (mesh.n_triangles,) or diffusion.shape != (mesh.n_triangles, 2, 2):
        raise AssemblyError("Coefficient shapes do not match the mesh", triangles=mesh.n_triangles)

    det = diffusion[:, 0, 0] * diffusion[:, 1, 1] - diffusion[:, 0, 1] * diffusion[:, 1, 0]
    not_spd = (diffusion[:, 0, 0] <= 0) | (det <= 0) | ~np.isfinite(det)
    if not_spd.any():
        bad = int(np.argmax(not_spd))
        raise AssemblyError("Diffusion tensor is not positive definite", triangle=bad)
    if np.any(~np.isfinite(reaction)) or np.any(reaction < 0):
        bad = int(np.argmax(~(reaction >= 0)))
        raise AssemblyError("Reaction coefficient must be non-negative", triangle=bad)

    geometry = triangle_geometry(mesh)
    local_B = (reaction * geometry.areas)[:, None, None] * _LOCAL_MASS
    local_G = geometry.areas[:, None, None] * np.einsum(
        "tak,tkl,tbl->tab", geometry.gradients, diffusion, geometry.gradients
    )

    free = free_vertices(mesh, boundary)
    C_full = assemble_mass(mesh).diagonal()
    B = _scatter(mesh, local_B)[free][:, free]
    G = _scatter(mesh, local_G)[free][:, free]
    K = (B + G).tocsr()
    C = C_full[free]
    log.debug("Operator assembled", nodes=int(free.size), nnz=int(K.nnz), boundary=boundary)
    return OperatorMatrices(
        C=sp.diags(C),
        Cinv=sp.diags(1.0 / C),
        B=B.tocsr(),
        G=G.tocsr(),
        K=K,
        free=free,
        n_vertices=mesh.n_vertices,
        reaction_min=float(reaction.min()),
    )


def operator_coefficients(
    mesh: Mesh, d: DeformationParams, alpha: float
) -> tuple[FloatArray, FloatArray]:
    """Per-triangle reaction kappa^(2/alpha) and diffusion kappa^(2/alpha - 2) H."""
    if alpha < 1:
        raise AssemblyError("Smoothness alpha must be at least 1", alpha=alpha)
    H, kappa = d.H_kappa(mesh.centroid_chart)
    power = 2.0 / alpha
    return kappa**power, (kappa ** (power - 2.0))[:, None, None] * H


def assemble_operator(
    mesh: Mesh, d: DeformationParams, alpha: float, boundary: Boundary = "dirichlet"
) -> OperatorMatrices:
    reaction, diffusion = operator_coefficients(mesh, d, alpha)
    return assemble_from_coefficients(mesh, reaction, diffusion, boundary)


def assemble_cross(
    mesh: Mesh, rho: CrossCorrField, K_Y: sp.spmatrix, C: sp.spmatrix, free: IntArray | None = None
) -> CrossMatrices:
    """
    Lumped C_rho with rho at triangle centroids, and K_rho = -C^-1 C_rho K_Y.

    ``free`` selects the vertices kept by the boundary condition of ``K_Y``.
    """
    free = np.arange(mesh.n_vertices) if free is None else np.asarray(free)
    if K_Y.shape != (free.size, free.size) or C.shape != K_Y.shape:
        raise AssemblyError(
            "Cross assembly dimension mismatch", K_Y=K_Y.shape, C=C.shape, free=free.size
        )
    values = rho.evaluate(mesh.centroid_chart)
    weights = np.repeat(mesh.areas * values / 3.0, 3)
    c_rho = np.bincount(mesh.triangles.ravel(), weights=weights, minlength=mesh.n_vertices)[free]
    C_rho = sp.diags(c_rho)
    K_rho = -(sp.diags(c_rho / sp.csr_matrix(C).diagonal()) @ sp.csr_matrix(K_Y))
    return CrossMatrices(C_rho=C_rho, K_rho=sp.csr_matrix(K_rho))


def write_coo(matrix: sp.spmatrix, path: str | Path) -> None:
    """Write ``i j value`` lines."""
    coo = sp.coo_matrix(matrix)
    rows = zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist(), strict=True)
    lines = [f"{i} {j} {v!r}" for i, j, v in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
