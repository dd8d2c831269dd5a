"""Dense linear-model numerics shared by the rest of the package.

Index sets are 0-based, sorted integer arrays throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from .errors import DegenerateFit, DimensionMismatch, DomainError, EmptySelection, RankDeficient

__all__ = [
    "Dataset",
    "ProjectionTarget",
    "Contrast",
    "OLSFit",
    "ols_fit",
    "inverse_gram_diag",
    "projection_parameter",
    "projection_residual_form",
    "projection_contrast",
    "estimate_sigma",
    "toeplitz_cov",
    "gen_design",
    "RANK_TOL",
    "AUTO_CLASSICAL_RATIO",
]

#: smallest |R_ii| relative to the largest before a design is declared singular
RANK_TOL = 1e-10
#: ``estimate_sigma(mode="auto")`` is classical iff p < n * AUTO_CLASSICAL_RATIO
AUTO_CLASSICAL_RATIO = 0.25


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    mu: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    sigma2: Optional[float] = None

    def __post_init__(self):
        n, p = _check_xy(self.X, self.y)
        if self.mu is not None and len(self.mu) != n:
            raise DimensionMismatch(f"mu has length {len(self.mu)}, expected {n}")
        if self.beta is not None:
            if len(self.beta) != p:
                raise DimensionMismatch(f"beta has length {len(self.beta)}, expected {p}")
            if self.mu is not None:
                scale = max(1.0, float(np.max(np.abs(self.mu))))
                if np.max(np.abs(self.X @ self.beta - self.mu)) > 1e-8 * scale:
                    raise DomainError("mu is not X @ beta")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ProjectionTarget:
    s: np.ndarray
    values: np.ndarray
    design_tag: str = "full_design"

    def __post_init__(self):
        if len(self.s) == 0:
            raise EmptySelection("projection target needs a non-empty set")
        if len(self.values) != len(self.s):
            raise DimensionMismatch("one value per selected index")
        if np.any(np.diff(self.s) <= 0):
            raise DomainError("selected indices must be strictly increasing")
        if self.design_tag not in ("full_design", "holdout_design"):
            raise DomainError(f"unknown design tag {self.design_tag!r}")


@dataclass(frozen=True)
class Contrast:
    eta: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        norm = float(np.linalg.norm(self.eta))
        if not norm > 0:
            raise DomainError("contrast must be non-zero")
        object.__setattr__(self, "norm", norm)


class OLSFit(NamedTuple):
    coef: np.ndarray
    residuals: np.ndarray
    sigma2_hat: float


def _check_xy(X, y):
    X = np.asarray(X)
    y = np.asarray(y)
    if X.ndim != 2 or y.ndim != 1:
        raise DimensionMismatch(f"expected 2-d X and 1-d y, got {X.shape} and {y.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
    return X.shape


def as_index(s, p: Optional[int] = None) -> np.ndarray:
    s = np.unique(np.asarray(s, dtype=np.intp))
    if p is not None and len(s) and (s[0] < 0 or s[-1] >= p):
        raise DomainError(f"index set out of range for {p} columns")
    return s


def _qr(X: np.ndarray):
    """Economic pivoted QR with the rank check used everywhere."""
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[-1] < RANK_TOL * d[0]:
        raise RankDeficient(f"numerical rank below {X.shape[1]}")
    return Q, R, piv


def _solve_qr(Q, R, piv, y):
    b = np.empty(R.shape[1])
    b[piv] = linalg.solve_triangular(R, Q.T @ y)
    return b


def ols_fit(X, y) -> OLSFit:
    """Least squares through a pivoted QR decomposition.

    A square design is solved exactly and ``sigma2_hat`` is NaN.

    Raises
    ------
    RankDeficient
        When the smallest diagonal of the triangular factor falls below
        ``RANK_TOL`` times the largest.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = _check_xy(X, y)
    if n < p:
        raise DomainError(f"ols_fit needs at least as many rows as columns, got {n}x{p}")
    Q, R, piv = _qr(X)
    coef = _solve_qr(Q, R, piv, y)
    # residual from the orthogonal complement keeps X'resid at rounding level
    resid = y - Q @ (Q.T @ y)
    sigma2 = float(resid @ resid) / (n - p) if n > p else math.nan
    return OLSFit(coef, resid, sigma2)


def inverse_gram_diag(X) -> np.ndarray:
    """Diagonal of ``(X'X)^{-1}`` computed from the triangular factor."""
    X = np.asarray(X, dtype=float)
    _, R, piv = _qr(X)
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    d = np.empty(R.shape[0])
    d[piv] = np.sum(Rinv * Rinv, axis=1)
    return d


def projection_parameter(X, s, mu, design_tag: str = "full_design") -> ProjectionTarget:
    """Coefficients of the best linear predictor of ``mu`` using the columns ``s``."""
    X = np.asarray(X, dtype=float)
    s = as_index(s, X.shape[1])
    if len(s) == 0:
        raise EmptySelection("empty selection")
    Xs = X[:, s]
    if len(s) > Xs.shape[0]:
        raise RankDeficient(f"{len(s)} columns but only {Xs.shape[0]} rows")
    Q, R, piv = _qr(Xs)
    return ProjectionTarget(s, _solve_qr(Q, R, piv, np.asarray(mu, dtype=float)), design_tag)


def projection_residual_form(X, s, i: int, mu) -> float:
    """Component ``i`` of the projection parameter as ``r_i'mu / |r_i|^2``.

    ``r_i`` is the residual of the ``i``-th selected column after regressing it
    on the other selected columns.
    """
    X = np.asarray(X, dtype=float)
    s = as_index(s, X.shape[1])
    if len(s) < 2:
        raise DomainError("residual form needs at least two selected columns")
    Xs = X[:, s]
    # full-rank check on X(s) itself, not only on the complement
    _qr(Xs)
    xi = Xs[:, i]
    others = np.delete(Xs, i, axis=1)
    Q, _, _ = _qr(others)
    r = xi - Q @ (Q.T @ xi)
    rr = float(r @ r)
    if rr <= (RANK_TOL * np.linalg.norm(xi)) ** 2:
        raise RankDeficient("selected column lies in the span of the others")
    return float(r @ np.asarray(mu, dtype=float)) / rr


def projection_contrast(X, s, j: int) -> Contrast:
    """``eta = X(s) {X(s)'X(s)}^{-1} e_j`` so that ``eta'mu`` is component ``j``."""
    X = np.asarray(X, dtype=float)
    s = as_index(s, X.shape[1])
    if len(s) == 0:
        raise EmptySelection("empty selection")
    Q, R, piv = _qr(X[:, s])
    e = np.zeros(len(s))
    e[np.flatnonzero(piv == j)[0]] = 1.0
    # X(s) P = Q R  =>  X(s) (X(s)'X(s))^{-1} e_j = Q R^{-T} P' e_j
    return Contrast(Q @ linalg.solve_triangular(R, e, trans="T"))


def estimate_sigma(X, y, mode: str = "auto", rng=None, n_folds: int = 10,
                   classical_ratio: float = AUTO_CLASSICAL_RATIO) -> float:
    """Estimate the noise variance.

    Returns the *variance* estimate.  ``classical`` is ``RSS/(n-p)`` of the
    full least-squares fit; ``high_dim`` is ``RSS/(n-s)`` of the
    cross-validated lasso fit with ``s`` non-zero coefficients.  ``auto`` is
    classical iff ``p < classical_ratio * n``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = _check_xy(X, y)
    if mode == "auto":
        mode = "classical" if p < classical_ratio * n else "high_dim"
    if mode == "classical":
        if p >= n:
            raise DomainError("classical variance estimate needs p < n")
        return ols_fit(X, y).sigma2_hat
    if mode != "high_dim":
        raise DomainError(f"unknown variance mode {mode!r}")

    from .lasso import lasso_cv  # deferred: lasso imports linmodel helpers

    scale = np.sqrt(np.mean(X * X, axis=0))
    if np.any(scale == 0):
        raise DomainError("design has an all-zero column")
    _, fit = lasso_cv(X / scale, y, n_folds=n_folds, rng=rng)
    support = int(np.count_nonzero(fit.coef))
    if n - support <= 0:
        raise DegenerateFit(f"lasso support {support} leaves no residual degrees of freedom")
    resid = y - (X / scale) @ fit.coef
    sigma2 = float(resid @ resid) / (n - support)
    if not sigma2 > 0:
        raise DegenerateFit("lasso fit interpolates the response")
    return sigma2


def toeplitz_cov(p: int, rho: float) -> np.ndarray:
    """Covariance with entries ``rho ** |i - j|``."""
    return rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p))).astype(float)


@lru_cache(maxsize=16)
def _toeplitz_chol(p: int, rho: float) -> np.ndarray:
    L = np.linalg.cholesky(toeplitz_cov(p, rho))
    L.setflags(write=False)
    return L


def gen_design(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Rows drawn i.i.d. from ``N(0, Gamma)`` with ``Gamma_ij = rho^|i-j|``."""
    if n < 1 or p < 1:
        raise DomainError("n and p must be positive")
    if not 0.0 <= rho < 1.0:
        raise DomainError("rho must lie in [0, 1)")
    Z = rng.standard_normal((n, p))
    if rho == 0.0:
        return Z
    return Z @ _toeplitz_chol(p, float(rho)).T
