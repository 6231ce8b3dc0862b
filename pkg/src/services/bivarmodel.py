"""
Univariate and bivariate latent GMRF models on a shared mesh.

A marginal field is U = D^-1 Pr U~ where U~ has precision Pl^T C^-1 Pl and D
holds the nodal standard deviations of Pr U~, so every node has unit
variance. The bivariate model couples X = log Hs and Y = log T through the
system

    sqrt(1 + rho^2) L_X^(alpha/2) X - rho L_Y^(beta/2) Y = W1,    L_Y^(beta/2) Y = W2,

which after discretization reads M [U~_X; U~_Y] = [xi1; xi2] with xi ~ N(0, C),

    M = [[S Pl, -R Ql], [0, Ql]],  S = diag(sqrt(1 + rho_i^2)),  R = C^-1 C_rho,

and gives the latent precision Q~ = M^T blockdiag(C^-1, C^-1) M. Pl U~_X has
law N(0, C) whatever rho is, so the X marginal equals the univariate model.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from src.core.exceptions import (
    DataValidationError,
    MissingStatisticsError,
    ModelError,
    NotPositiveDefiniteError,
)
from src.core.logging_config import get_logger
from src.services.femassembly import Boundary, OperatorMatrices, assemble_cross, assemble_operator
from src.services.fracrational import FractionalOperator, fractional_operator
from src.services.mesh import Mesh
from src.services.paramfield import CrossCorrField, DeformationParams
from src.services.sparsela import (
    SelectedInverse,
    SparseChol,
    bilinear_diag,
    factorize,
    gaussian_loglik,
    sample_gmrf,
    takahashi,
)

log = get_logger("seastate.bivarmodel")

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class MarginalSpec:
    """Parameters of one marginal field plus its pointwise standardization statistics."""

    deformation: DeformationParams
    alpha: float
    nugget: float
    mean_field: FloatArray | None = None
    var_field: FloatArray | None = None

    def __post_init__(self) -> None:
        if self.alpha < 1:
            raise ModelError("Smoothness must be at least 1", alpha=self.alpha)
        if self.nugget < 0:
            raise ModelError("Nugget variance must be non-negative", nugget=self.nugget)
        if self.var_field is not None and np.any(np.asarray(self.var_field) <= 0):
            raise ModelError("Pointwise variances must be positive")


def _factorize_model(Q: sp.spmatrix, what: str) -> SparseChol:
    try:
        return factorize(Q)
    except NotPositiveDefiniteError as exc:
        raise ModelError(f"{what} precision is not positive definite", pivot=exc.pivot) from exc


class MarginalModel:
    """
    Univariate model of one standardized log field.

    The observation operator maps the latent U~ to the observation locations
    of ``mesh`` through D^-1 Pr and the barycentric interpolation matrix.
    """

    def __init__(
        self,
        mesh: Mesh,
        spec: MarginalSpec,
        rational_order: int = 2,
        boundary: Boundary = "dirichlet",
    ) -> None:
        if mesh.observation_map is None:
            raise ModelError("Mesh carries no observation locations")
        self.mesh = mesh
        self.spec = spec
        self.ops: OperatorMatrices = assemble_operator(mesh, spec.deformation, spec.alpha, boundary)
        self.frac: FractionalOperator = fractional_operator(self.ops, spec.alpha, rational_order)
        self.precision = self.frac.precision()
        self.chol = _factorize_model(self.precision, "Marginal")

        node_var, fallbacks = bilinear_diag(self.selected, self.frac.Pr, self.frac.Pr, self.chol)
        if fallbacks:
            log.warning("Variance entries outside the selected pattern", fallbacks=fallbacks)
        if np.any(node_var <= 0):
            raise ModelError("Non-positive nodal variance", count=int((node_var <= 0).sum()))
        self.node_sd = np.sqrt(node_var)
        self.transform = (sp.diags(1.0 / self.node_sd) @ self.frac.Pr).tocsr()
        self.A = (self.ops.restrict(mesh.observation_map) @ self.transform).tocsr()

    @cached_property
    def selected(self) -> SelectedInverse:
        return takahashi(self.chol)

    @property
    def n_latent(self) -> int:
        return self.ops.size

    def loglik(self, data: ArrayLike, nugget: float | None = None) -> float:
        """
        Log-likelihood of replicates (rows) of standardized observations.

        NaN entries are missing; replicates sharing a missing pattern are
        evaluated together.
        """
        nugget = self.spec.nugget if nugget is None else nugget
        return grouped_loglik(self.precision, self.A, nugget, data, self.chol)

    def sample(self, n: int, seed: int | np.random.Generator | None = None) -> FloatArray:
        """Nodal samples on all mesh vertices, shape (n, n_vertices)."""
        latent = sample_gmrf(self.chol, n, seed)
        return self.ops.extend(np.asarray(self.transform @ latent.T).T)


def grouped_loglik(
    precision: sp.spmatrix,
    A: sp.csr_matrix,
    noise_var: float,
    data: ArrayLike,
    prior: SparseChol | None = None,
) -> float:
    """Sum of ``gaussian_loglik`` over groups of replicates with equal missing patterns."""
    Y = np.atleast_2d(np.asarray(data, dtype=float))
    if Y.shape[1] != A.shape[0]:
        raise DataValidationError(
            f"Data width {Y.shape[1]} does not match {A.shape[0]} observation rows"
        )
    observed = ~np.isnan(Y)
    if observed.all():
        return gaussian_loglik(precision, A, noise_var, Y, prior)

    prior = prior if prior is not None else factorize(precision)
    patterns, inverse = np.unique(observed, axis=0, return_inverse=True)
    total = 0.0
    for g, pattern in enumerate(patterns):
        if not pattern.any():
            continue
        rows = np.flatnonzero(inverse.ravel() == g)
        total += gaussian_loglik(precision, A[pattern], noise_var, Y[np.ix_(rows, pattern)], prior)
    return total


def _same_mesh(a: Mesh, b: Mesh) -> bool:
    return (
        a.points.shape == b.points.shape
        and np.array_equal(a.triangles, b.triangles)
        and np.allclose(a.points, b.points, rtol=0.0, atol=1e-12)
        and np.array_equal(a.boundary_vertices, b.boundary_vertices)
    )


class BivariateModel:
    """Coupled X (log Hs) and Y (log T) fields on one mesh."""

    def __init__(self, x: MarginalModel, y: MarginalModel, rho: CrossCorrField) -> None:
        if x.mesh is not y.mesh and not _same_mesh(x.mesh, y.mesh):
            raise ModelError("Marginals must share one mesh")
        if not np.array_equal(x.ops.free, y.ops.free):
            raise ModelError("Marginals must share one boundary condition")
        self.x = x
        self.y = y
        self.rho = rho

        cross = assemble_cross(x.mesh, rho, y.ops.K, y.ops.C, y.ops.free)
        self.K_rho = cross.K_rho
        self.rho_nodal = cross.C_rho.diagonal() / y.ops.C.diagonal()
        R = sp.diags(self.rho_nodal)
        S = sp.diags(np.sqrt(1.0 + self.rho_nodal**2))
        Pl, Ql = x.frac.Pl, y.frac.Pl
        self.system = sp.bmat([[S @ Pl, -(R @ Ql)], [None, Ql]], format="csr")
        Cinv = sp.diags(1.0 / x.ops.C.diagonal())
        Q = self.system.T @ sp.block_diag([Cinv, Cinv]) @ self.system
        self.Q_tilde = ((Q + Q.T) * 0.5).tocsr()

    @property
    def n_latent(self) -> int:
        return self.x.n_latent

    @cached_property
    def chol(self) -> SparseChol:
        return _factorize_model(self.Q_tilde, "Bivariate")

    @cached_property
    def selected(self) -> SelectedInverse:
        return takahashi(self.chol)

    @cached_property
    def observation_operator(self) -> sp.csr_matrix:
        """blockdiag(A_X, A_Y) acting on the joint latent vector."""
        return sp.block_diag([self.x.A, self.y.A], format="csr")

    def loglik(self, data_x: ArrayLike, data_y: ArrayLike) -> float:
        """Joint log-likelihood of paired replicates with the fitted nuggets."""
        X = np.atleast_2d(np.asarray(data_x, dtype=float))
        Y = np.atleast_2d(np.asarray(data_y, dtype=float))
        m = X.shape[1]
        noise = np.concatenate([np.full(m, self.x.spec.nugget), np.full(m, self.y.spec.nugget)])
        joint = np.hstack([X, Y])
        A = self.observation_operator
        observed = ~np.isnan(joint)
        if observed.all():
            return gaussian_loglik(self.Q_tilde, A, noise, joint, self.chol)
        patterns, inverse = np.unique(observed, axis=0, return_inverse=True)
        total = 0.0
        for g, pattern in enumerate(patterns):
            if not pattern.any():
                continue
            rows = np.flatnonzero(inverse.ravel() == g)
            total += gaussian_loglik(
                self.Q_tilde, A[pattern], noise[pattern], joint[np.ix_(rows, pattern)], self.chol
            )
        return total

    def sample(
        self, n: int, seed: int | np.random.Generator | None = None
    ) -> tuple[FloatArray, FloatArray]:
        """Nodal (U_X, U_Y) on all vertices, each of shape (n, n_vertices)."""
        latent = sample_gmrf(self.chol, n, seed)
        N = self.n_latent
        ux = np.asarray(self.x.transform @ latent[:, :N].T).T
        uy = np.asarray(self.y.transform @ latent[:, N:].T).T
        return self.x.ops.extend(ux), self.y.ops.extend(uy)

    def covariance_dense(self) -> FloatArray:
        """
        Nodal covariance of (U_X, U_Y) from the non-latent block system.

        Uses K_X = S Pl Pr^-1, K_Y = Ql Qr^-1 and K_rho = -R K_Y; for small meshes only.
        """
        N = self.n_latent
        Pr_inv = np.linalg.inv(self.x.frac.Pr.toarray())
        Qr_inv = np.linalg.inv(self.y.frac.Pr.toarray())
        S = np.diag(np.sqrt(1.0 + self.rho_nodal**2))
        K_X = S @ self.x.frac.Pl.toarray() @ Pr_inv
        K_Y = self.y.frac.Pl.toarray() @ Qr_inv
        K_rho = -np.diag(self.rho_nodal) @ K_Y
        system = np.block([[K_X, K_rho], [np.zeros((N, N)), K_Y]])
        C = np.diag(np.concatenate([self.x.ops.C.diagonal(), self.y.ops.C.diagonal()]))
        inv = np.linalg.inv(system)
        cov = inv @ C @ inv.T
        scale = np.concatenate([1.0 / self.x.node_sd, 1.0 / self.y.node_sd])
        return scale[:, None] * cov * scale[None, :]

    def pointwise_crosscorr(self, include_nugget: bool = False) -> FloatArray:
        """
        Model correlation gamma_j between X and Y at each observation location.

        Entries of Q~^-1 come from the selected inverse; rows reaching outside
        its pattern fall back to solves and are logged.
        """
        N = self.n_latent
        m = self.x.A.shape[0]
        zeros = sp.csr_matrix((m, N))
        left = sp.hstack([self.x.A, zeros], format="csr")
        right = sp.hstack([zeros, self.y.A], format="csr")
        cov_xy, f1 = bilinear_diag(self.selected, left, right, self.chol)
        var_x, f2 = bilinear_diag(self.selected, left, left, self.chol)
        var_y, f3 = bilinear_diag(self.selected, right, right, self.chol)
        fallbacks = f1 + f2 + f3
        if fallbacks:
            log.warning(
                "Cross-correlation entries outside the selected pattern", fallbacks=fallbacks
            )
        if include_nugget:
            var_x = var_x + self.x.spec.nugget
            var_y = var_y + self.y.spec.nugget
        return np.clip(cov_xy / np.sqrt(var_x * var_y), -1.0, 1.0)


def build(x: MarginalModel, y: MarginalModel, rho: CrossCorrField) -> BivariateModel:
    model = BivariateModel(x, y, rho)
    log.info("Bivariate model built", nodes=model.n_latent, nnz=int(model.Q_tilde.nnz))
    return model


def sample(model: BivariateModel, n: int, seed: int | None = None) -> tuple[FloatArray, FloatArray]:
    return model.sample(n, seed)


def pointwise_crosscorr(model: BivariateModel, include_nugget: bool = False) -> FloatArray:
    return model.pointwise_crosscorr(include_nugget)


def standardize(values: ArrayLike, mean: ArrayLike, var: ArrayLike) -> FloatArray:
    """(log value - mean) / sd per location; ``values`` are already on the log scale."""
    return (np.asarray(values, dtype=float) - np.asarray(mean)) / np.sqrt(np.asarray(var))


def destandardize(field: ArrayLike, spec: MarginalSpec) -> FloatArray:
    """exp(mean + sqrt(var) z) per location."""
    if spec.mean_field is None or spec.var_field is None:
        raise MissingStatisticsError("Pointwise mean and variance are required")
    z = np.asarray(field, dtype=float)
    mean, var = np.asarray(spec.mean_field), np.asarray(spec.var_field)
    if z.shape[-1] != mean.shape[-1]:
        raise MissingStatisticsError(
            "Statistics do not cover every location", locations=z.shape[-1], stats=mean.shape[-1]
        )
    return np.exp(mean + np.sqrt(var) * z)
