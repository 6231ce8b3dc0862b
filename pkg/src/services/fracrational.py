"""
Rational approximation of fractional operator powers.

The field U solves L^(alpha/2) U = W with L = C^-1 K. Writing alpha/2 =
m_alpha + e with an integer m_alpha and 0 <= e < 1, the function
lambda^(-alpha/2) is replaced on the spectral interval [lo, hi] of L by

    f(lambda) = (c / b) prod_i (1 - r1_i lambda) / (lambda^m_alpha prod_j (1 - r2_j lambda))

with m roots r1 and m + 1 poles r2. This gives the sparse factors

    Pl = b C L^m_alpha prod_j (I - r2_j L),    Pr = c prod_i (I - r1_i L),

and U = Pr Pl^-1 xi for xi ~ N(0, C): a GMRF U~ with precision Pl^T C^-1 Pl
observed through Pr.

The fit of lambda^(-e) works in x = lambda / lo on [1, R] with a sum of
m + 1 positive partial fractions sum_k w_k / (x + t_k). For fixed poles the
weights minimizing the maximum relative error solve a linear program; the
poles are then tuned by Nelder-Mead in log space. Orders are fitted
incrementally, each starting from the previous poles plus one new pole, so
the error never increases with m. Positive weights keep every root real.
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import polynomial as P
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog, minimize
from scipy.sparse.linalg import SuperLU, splu

from src.core.exceptions import ConditioningError, DataValidationError, RationalFitError
from src.core.logging_config import get_logger
from src.services.femassembly import OperatorMatrices

log = get_logger("seastate.fracrational")

FloatArray = NDArray[np.float64]

_GRID_POINTS = 600
_RATIO_BUCKETS_PER_DECADE = 8
_IMAG_TOL = 1e-8


@dataclass(frozen=True)
class RationalCoeffs:
    """Factored rational approximation of lambda^(-alpha/2) on ``interval``."""

    m: int
    m_alpha: int
    exponent: float
    poles_r2: tuple[float, ...]
    roots_r1: tuple[float, ...]
    scale_b: float
    scale_c: float
    interval: tuple[float, float]
    max_rel_error: float

    @property
    def is_exact(self) -> bool:
        return self.exponent == 0.0

    def evaluate(self, lam: ArrayLike) -> FloatArray:
        lam = np.asarray(lam, dtype=float)
        num = np.ones_like(lam)
        for r in self.roots_r1:
            num = num * (1.0 - r * lam)
        den = lam**self.m_alpha
        for r in self.poles_r2:
            den = den * (1.0 - r * lam)
        return (self.scale_c / self.scale_b) * num / den

    def relative_error(self, lam: ArrayLike) -> FloatArray:
        lam = np.asarray(lam, dtype=float)
        target = lam ** -(self.m_alpha + self.exponent)
        return np.abs(self.evaluate(lam) / target - 1.0)


def split_alpha(alpha: float) -> tuple[int, float]:
    """Integer and fractional parts of the operator power alpha / 2."""
    if alpha < 1:
        raise DataValidationError(f"alpha must be at least 1, got {alpha}")
    beta = alpha / 2.0
    m_alpha = math.floor(beta + 1e-12)
    e = max(beta - m_alpha, 0.0)
    return m_alpha, (0.0 if e < 1e-12 else e)


def _minimax_weights(basis: FloatArray, target: FloatArray) -> tuple[FloatArray, float]:
    """Nonnegative weights minimizing max |basis w / target - 1|."""
    scaled = basis / target[:, None]
    n_grid, n_w = scaled.shape
    ones = np.ones((n_grid, 1))
    A_ub = np.block([[scaled, -ones], [-scaled, -ones]])
    b_ub = np.concatenate([np.ones(n_grid), -np.ones(n_grid)])
    cost = np.zeros(n_w + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * (n_w + 1), method="highs")
    if res.status != 0:
        return np.zeros(n_w), math.inf
    return res.x[:n_w], float(res.x[-1])


def _grid_error(log_t: FloatArray, x: FloatArray, target: FloatArray) -> float:
    t = np.exp(log_t)
    _, err = _minimax_weights(1.0 / (x[:, None] + t[None, :]), target)
    return err


def _fit_partial_fractions(e: float, ratio: float, m: int) -> tuple[FloatArray, FloatArray, float]:
    """Poles t and weights w of sum w_k / (x + t_k) ~ x^-e on [1, ratio], m + 1 terms."""
    x = np.logspace(0.0, math.log10(ratio), _GRID_POINTS)
    target = x**-e
    log_hi = math.log(ratio)
    candidates = np.linspace(-2.0 * math.log(10.0), log_hi + math.log(10.0), 13)

    log_t = np.empty(0)
    err = math.inf
    for _ in range(m + 1):
        trials = [np.append(log_t, c) for c in candidates]
        errors = [_grid_error(trial, x, target) for trial in trials]
        start = trials[int(np.argmin(errors))]
        result = minimize(
            _grid_error,
            start,
            args=(x, target),
            method="Nelder-Mead",
            options={"maxiter": 300 * start.size, "xatol": 1e-5, "fatol": 1e-12},
        )
        log_t = result.x if result.fun <= min(errors) else start
        err = min(float(result.fun), min(errors))

    t = np.exp(log_t)
    w, err = _minimax_weights(1.0 / (x[:, None] + t[None, :]), target)
    if not math.isfinite(err):
        raise RationalFitError("Minimax weight problem is infeasible", residual=err, exponent=e)
    return t, w, err


@lru_cache(maxsize=128)
def _cached_fit(
    e: float, ratio: float, m: int
) -> tuple[tuple[float, ...], tuple[float, ...], float]:
    t, w, err = _fit_partial_fractions(e, ratio, m)
    return tuple(t.tolist()), tuple(w.tolist()), err


def _bucket_ratio(ratio: float) -> float:
    buckets = math.ceil(_RATIO_BUCKETS_PER_DECADE * math.log10(ratio) - 1e-9)
    exponent = buckets / _RATIO_BUCKETS_PER_DECADE
    return 10.0**exponent


def fit_rational(alpha: float, interval: tuple[float, float], m: int = 2) -> RationalCoeffs:
    """
    Fit the factored rational approximation of lambda^(-alpha/2) on ``interval``.

    Raises:
        RationalFitError: the fit failed or produced complex roots.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not (0 < lo < hi):
        raise DataValidationError(f"Invalid spectral interval [{lo}, {hi}]")
    if m < 1:
        raise DataValidationError("Approximation order must be at least 1")
    m_alpha, e = split_alpha(alpha)

    if e == 0.0:
        return RationalCoeffs(
            m=m,
            m_alpha=m_alpha,
            exponent=0.0,
            poles_r2=(0.0,) * (m + 1),
            roots_r1=(0.0,) * m,
            scale_b=1.0,
            scale_c=1.0,
            interval=(lo, hi),
            max_rel_error=0.0,
        )

    ratio = _bucket_ratio(hi / lo)
    t_tuple, w_tuple, err = _cached_fit(round(e, 10), ratio, m)
    t, w = np.asarray(t_tuple), np.asarray(w_tuple)

    # numerator N(x) = sum_k w_k prod_{j != k} (x + t_j)
    numerator = np.zeros(m + 1)
    for k in range(m + 1):
        term = np.array([w[k]])
        for j in range(m + 1):
            if j != k:
                term = P.polymul(term, [t[j], 1.0])
        numerator = P.polyadd(numerator, term)[: m + 1]
    roots = P.polyroots(numerator)
    if np.any(np.abs(roots.imag) > _IMAG_TOL * (1.0 + np.abs(roots.real))):
        raise RationalFitError("Rational approximation has complex roots", residual=err, exponent=e)
    z = np.sort(roots.real)
    if np.any(z >= 0):
        raise RationalFitError(
            "Rational approximation has a non-negative root", residual=err, exponent=e
        )

    coeffs = RationalCoeffs(
        m=m,
        m_alpha=m_alpha,
        exponent=e,
        poles_r2=tuple((-1.0 / (lo * t)).tolist()),
        roots_r1=tuple((1.0 / (lo * z)).tolist()),
        scale_b=float(np.prod(t)),
        scale_c=float(lo**-e * w.sum() * np.prod(-z)),
        interval=(lo, hi),
        max_rel_error=err,
    )
    log.debug("Rational approximation fitted", alpha=alpha, m=m, ratio=ratio, max_rel_error=err)
    return coeffs


def spectral_interval(ops: OperatorMatrices, pad: float = 1.1) -> tuple[float, float]:
    """
    Bounds on the spectrum of C^-1 K.

    The upper bound is the Gershgorin row bound; the lower one uses that the
    consistent reaction mass is at least a quarter of the lumped mass.
    """
    K = sp.csr_matrix(ops.K)
    c = ops.C.diagonal()
    row_sums = np.asarray(abs(K).sum(axis=1)).ravel()
    hi = pad * float(np.max(row_sums / c))
    lo = 0.25 * ops.reaction_min / pad
    if not (lo > 0 and hi > lo):
        raise RationalFitError("Degenerate spectral interval", residual=math.nan, lo=lo, hi=hi)
    return lo, hi


@dataclass(frozen=True, eq=False)
class FractionalOperator:
    """Sparse factors Pl and Pr of the rational approximation applied to K."""

    K: sp.csr_matrix
    C: sp.dia_matrix
    coeffs: RationalCoeffs
    Pl: sp.csr_matrix
    Pr: sp.csr_matrix

    @property
    def size(self) -> int:
        return int(self.K.shape[0])

    @cached_property
    def _lu(self) -> SuperLU:
        try:
            return splu(sp.csc_matrix(self.Pl))
        except RuntimeError as exc:
            raise ConditioningError("Left factor Pl is singular", reason=str(exc)) from exc

    def precision(self) -> sp.csr_matrix:
        """Precision Pl^T C^-1 Pl of the latent field U~."""
        Cinv = sp.diags(1.0 / self.C.diagonal())
        Q = (self.Pl.T @ Cinv @ self.Pl).tocsr()
        return ((Q + Q.T) * 0.5).tocsr()

    def solve_left(self, rhs: ArrayLike) -> FloatArray:
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def nested_sample(self, noise: ArrayLike) -> FloatArray:
        """U = Pr Pl^-1 noise for noise of shape (n,) or (n, k)."""
        return np.asarray(self.Pr @ self.solve_left(noise))

    def covariance_dense(self) -> FloatArray:
        """Dense Pr Pl^-1 C Pl^-T Pr^T; for small meshes only."""
        A = self.Pr.toarray() @ np.linalg.inv(self.Pl.toarray())
        return A @ self.C.toarray() @ A.T


def build_factors(K: sp.spmatrix, C: sp.spmatrix, coeffs: RationalCoeffs) -> FractionalOperator:
    """Assemble Pl and Pr by repeated sparse multiplication with L = C^-1 K."""
    K = sp.csr_matrix(K)
    n = K.shape[0]
    if K.shape != (n, n) or C.shape != (n, n):
        raise DataValidationError(f"Shape mismatch: K {K.shape}, C {C.shape}")
    c_diag = sp.csr_matrix(C).diagonal()
    Cdiag = sp.diags(c_diag)
    L = (sp.diags(1.0 / c_diag) @ K).tocsr()
    eye = sp.identity(n, format="csr")

    Pl = sp.csr_matrix(Cdiag)
    for _ in range(coeffs.m_alpha):
        Pl = Pl @ L
    for r in coeffs.poles_r2:
        if r != 0.0:
            Pl = Pl @ (eye - r * L)
    Pl = (coeffs.scale_b * Pl).tocsr()

    Pr = eye.copy()
    for r in coeffs.roots_r1:
        if r != 0.0:
            Pr = Pr @ (eye - r * L)
    Pr = (coeffs.scale_c * Pr).tocsr()
    return FractionalOperator(K=K, C=sp.dia_matrix(Cdiag), coeffs=coeffs, Pl=Pl, Pr=Pr)


def fractional_operator(ops: OperatorMatrices, alpha: float, m: int = 2) -> FractionalOperator:
    """Fit on the spectral interval of ``ops`` and build the factors."""
    coeffs = fit_rational(alpha, spectral_interval(ops), m)
    return build_factors(ops.K, ops.C, coeffs)


def nested_sample(op: FractionalOperator, noise: ArrayLike) -> FloatArray:
    return op.nested_sample(noise)
