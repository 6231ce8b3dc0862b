"""
Sparse numerical kernel.

Cholesky factorization of sparse symmetric positive definite matrices through
CHOLMOD with an approximate minimum degree ordering, triangular solves,
log-determinants, sampling of Gaussian Markov random fields, selected
inversion by the Takahashi recursion, and the log-likelihood of a latent GMRF
observed with independent Gaussian noise.

For FEM precisions on 2-D meshes the AMD ordering keeps the fill of L near
O(n log n) and the factorization near O(n^{3/2}). The Takahashi recursion runs
over the nonzero pattern of L, which is closed under the recursion, so every
selected entry lies inside the factor's pattern.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from sksparse.cholmod import CholmodNotPositiveDefiniteError, Factor, analyze

from src.core.exceptions import DataValidationError, NotPositiveDefiniteError, PatternError
from src.core.logging_config import get_logger

log = get_logger("seastate.sparsela")

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class SparseChol:
    """
    CHOLMOD factor P A P^T = L L^T.

    ``perm[i]`` is the original index placed at position ``i``; ``position`` is
    its inverse.
    """

    factor: Factor
    perm: IntArray
    position: IntArray
    logdet: float

    @property
    def n(self) -> int:
        return int(self.perm.size)

    @cached_property
    def L(self) -> sp.csc_matrix:
        """Lower-triangular factor of the permuted matrix, sorted column by column."""
        L = sp.csc_matrix(self.factor.L())
        L.sort_indices()
        return L

    def solve(self, rhs: FloatArray) -> FloatArray:
        """Solve A x = rhs for a vector or a matrix of right-hand sides (columns)."""
        rhs = np.asarray(rhs, dtype=float)
        out = self.factor.solve_A(rhs.reshape(self.n, -1))
        return np.asarray(out).reshape(rhs.shape)

    def solve_upper(self, rhs: FloatArray) -> FloatArray:
        """Return P^T L^-T rhs; rhs is given in the permuted ordering."""
        rhs = np.asarray(rhs, dtype=float)
        y = self.factor.solve_Lt(rhs.reshape(self.n, -1), use_LDLt_decomposition=False)
        return np.asarray(self.factor.apply_Pt(y)).reshape(rhs.shape)


def factorize(matrix: sp.spmatrix | FloatArray, symmetry_tol: float = 1e-10) -> SparseChol:
    """
    Factorize a sparse SPD matrix after an approximate minimum degree reordering.

    Raises:
        DataValidationError: when the matrix is not square.
        NotPositiveDefiniteError: when the matrix is not symmetric or a pivot is
            not positive; ``pivot`` is the original index of the failing row.
    """
    A = sp.csc_matrix(matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DataValidationError(f"Expected a square matrix, got {A.shape}")
    scale = abs(A).max() if A.nnz else 1.0
    asym = abs(A - A.T).max() if A.nnz else 0.0
    if asym > symmetry_tol * max(scale, 1e-300):
        raise NotPositiveDefiniteError("Matrix is not symmetric", pivot=-1, asymmetry=float(asym))

    # supernodal mode always computes L L^T, so indefinite input fails at its pivot
    symbolic = analyze(A, mode="supernodal", ordering_method="amd")
    perm = np.asarray(symbolic.P(), dtype=np.int64)
    try:
        factor = symbolic.cholesky(A)
    except CholmodNotPositiveDefiniteError as exc:
        column = int(getattr(exc, "column", -1))
        original = int(perm[column]) if 0 <= column < n else -1
        raise NotPositiveDefiniteError(
            "Non-positive pivot in Cholesky factorization", pivot=original
        ) from exc

    position = np.empty_like(perm)
    position[perm] = np.arange(n)
    logdet = float(factor.logdet())
    if not np.isfinite(logdet):
        raise NotPositiveDefiniteError("Cholesky factor has a non-finite determinant", pivot=-1)
    log.debug("Cholesky factorized", n=n, nnz=int(A.nnz), logdet=logdet)
    return SparseChol(factor=factor, perm=perm, position=position, logdet=logdet)


def sample_gmrf(
    chol: SparseChol, n: int, seed: int | np.random.Generator | None = None
) -> FloatArray:
    """
    Draw ``n`` samples x = P^T L^-T z with precision equal to the factorized matrix.

    Returns an array of shape (n, dim). A fixed integer seed gives bit-identical draws.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((chol.n, n))
    return chol.solve_upper(z).T


@dataclass(frozen=True, eq=False)
class SelectedInverse:
    """
    Entries of A^-1 on the pattern of the Cholesky factor.

    ``values`` holds the lower triangle in the permuted ordering with the
    column structure of L.
    """

    values: sp.csc_matrix
    perm: IntArray
    position: IntArray

    @property
    def n(self) -> int:
        return int(self.perm.size)

    @cached_property
    def _full(self) -> sp.csr_matrix:
        # symmetric, original ordering
        lower = self.values.tocoo()
        r, c, v = self.perm[lower.row], self.perm[lower.col], lower.data
        off = lower.row != lower.col
        rows = np.concatenate([r, c[off]])
        cols = np.concatenate([c, r[off]])
        data = np.concatenate([v, v[off]])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def _mask(self) -> sp.csr_matrix:
        # stored entries, kept even where the selected value is exactly zero
        full = self._full.copy()
        full.data = np.ones_like(full.data)
        return full

    def get(self, i: int, j: int) -> float:
        """Entry (i, j) in the original ordering."""
        p, q = int(self.position[i]), int(self.position[j])
        row, col = max(p, q), min(p, q)
        start, end = self.values.indptr[col], self.values.indptr[col + 1]
        rows = self.values.indices[start:end]
        k = int(np.searchsorted(rows, row))
        if k >= rows.size or rows[k] != row:
            raise PatternError("Entry outside the selected pattern", i=i, j=j)
        return float(self.values.data[start + k])

    def diagonal(self) -> FloatArray:
        """Diagonal of A^-1 in the original ordering."""
        return self.values.diagonal()[self.position]

    def block(self, rows: IntArray, cols: IntArray) -> FloatArray:
        """Dense block A^-1[rows][:, cols]."""
        rows, cols = np.asarray(rows), np.asarray(cols)
        if not self._mask[rows][:, cols].toarray().all():
            raise PatternError("Block reaches outside the selected pattern")
        return self._full[rows][:, cols].toarray()

    def to_sparse(self) -> sp.csr_matrix:
        """All selected entries as a symmetric sparse matrix in the original ordering."""
        return self._full.copy()


def takahashi(chol: SparseChol) -> SelectedInverse:
    """
    Selected inverse by the Takahashi recursion on the pattern of L.

    Columns are processed from last to first. For column j with sub-diagonal
    structure J, the recursion needs S[J, J], which lies in the pattern of the
    already finished columns.
    """
    L = chol.L
    indptr, indices, data = L.indptr, L.indices, L.data
    S = np.zeros_like(data)

    for j in range(chol.n - 1, -1, -1):
        start, end = indptr[j], indptr[j + 1]
        d = data[start]
        rows = indices[start + 1 : end]
        if rows.size == 0:
            S[start] = 1.0 / (d * d)
            continue
        ratio = data[start + 1 : end] / d
        trailing = np.empty((rows.size, rows.size))
        for a, k in enumerate(rows):
            k0, k1 = indptr[k], indptr[k + 1]
            column_rows = indices[k0:k1]
            wanted = rows[a:]
            pos = np.searchsorted(column_rows, wanted)
            if np.any(pos >= column_rows.size) or np.any(column_rows[pos] != wanted):
                raise PatternError("Factor pattern is not closed", column=int(j))
            trailing[a:, a] = S[k0 + pos]
            trailing[a, a:] = S[k0 + pos]
        column = -trailing @ ratio
        S[start + 1 : end] = column
        S[start] = 1.0 / (d * d) - ratio @ column

    values = sp.csc_matrix((S, indices.copy(), indptr.copy()), shape=L.shape)
    return SelectedInverse(values=values, perm=chol.perm, position=chol.position)


def bilinear_diag(
    selected: SelectedInverse,
    left: sp.spmatrix,
    right: sp.spmatrix,
    chol: SparseChol | None = None,
) -> tuple[FloatArray, int]:
    """
    Row-wise diag(left A^-1 right^T) from the selected inverse.

    Rows whose support reaches outside the pattern fall back to a solve with
    ``chol`` when given. Returns the values and the number of fallbacks.
    """
    R = sp.csr_matrix(left)
    T = sp.csr_matrix(right)
    out = np.empty(R.shape[0])
    fallbacks = 0
    for i in range(R.shape[0]):
        r0, r1 = R.indptr[i], R.indptr[i + 1]
        t0, t1 = T.indptr[i], T.indptr[i + 1]
        r_idx, r_val = R.indices[r0:r1], R.data[r0:r1]
        t_idx, t_val = T.indices[t0:t1], T.data[t0:t1]
        if r_idx.size == 0 or t_idx.size == 0:
            out[i] = 0.0
            continue
        try:
            out[i] = r_val @ selected.block(r_idx, t_idx) @ t_val
        except PatternError:
            if chol is None:
                raise
            fallbacks += 1
            rhs = np.zeros(selected.n)
            rhs[t_idx] = t_val
            out[i] = r_val @ chol.solve(rhs)[r_idx]
    return out, fallbacks


def gaussian_loglik(
    precision: sp.spmatrix,
    obs_matrix: sp.spmatrix,
    noise_var: float | FloatArray,
    observations: FloatArray,
    prior: SparseChol | None = None,
) -> float:
    """
    Log-likelihood of replicates y = A x + e with x ~ N(0, Q^-1) and e ~ N(0, diag(noise_var)).

    ``observations`` has one replicate per row; replicates are independent and
    their log-likelihoods add. Uses the determinant lemma and Woodbury identity,
    so only the prior precision Q and the conditional precision
    Q + A^T W^-1 A are factorized.
    """
    Y = np.atleast_2d(np.asarray(observations, dtype=float))
    A = sp.csr_matrix(obs_matrix)
    m = A.shape[0]
    if Y.shape[1] != m:
        raise DataValidationError(f"Observation width {Y.shape[1]} does not match {m} rows of A")
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), (m,))
    if np.any(nv <= 0):
        raise DataValidationError("Noise variances must be positive")

    chol_prior = prior if prior is not None else factorize(precision)
    conditional = sp.csr_matrix(precision) + A.T @ sp.diags(1.0 / nv) @ A
    chol_cond = factorize(conditional)

    rhs = np.asarray(A.T @ (Y / nv).T)
    mean = chol_cond.solve(rhs)
    quad = float(np.sum(Y * Y / nv) - np.sum(rhs * mean))
    reps = Y.shape[0]
    return -0.5 * (
        reps * m * _LOG_2PI
        + reps * float(np.sum(np.log(nv)))
        + reps * (chol_cond.logdet - chol_prior.logdet)
        + quad
    )
