"""Variable selectors run on the selection share of the data.

Reported indices are 0-based columns of the design passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainError, RankDeficient
from .lasso import lasso_cd, lasso_cv, lasso_entry_order

__all__ = [
    "SelectionOutcome",
    "knockoff_construct",
    "sdp_knockoff_s",
    "knockoff_threshold",
    "knockoff_filter",
    "stability_q",
    "stability_select",
    "lasso_support",
]

SELECTORS = ("knockoff", "stability", "lasso_support")


@dataclass(frozen=True)
class SelectionOutcome:
    s: np.ndarray
    selector_tag: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.selector_tag not in SELECTORS:
            raise DomainError(f"unknown selector {self.selector_tag!r}")


def _standardize(X, y):
    """Center both and scale columns to unit mean square."""
    Xc = X - X.mean(axis=0)
    scale = np.sqrt(np.mean(Xc * Xc, axis=0))
    scale[scale == 0] = 1.0
    return Xc / scale, y - y.mean()


KNOCKOFF_METHODS = ("sdp", "equi")


@numba.njit(cache=True)
def _barrier_ascent(Sigma, s, mu_start, mu_stop, tol, max_sweeps):
    """Coordinate ascent on ``sum(s) + mu log det(2 Sigma - diag(s))`` over
    ``0 <= s <= 1`` for a decreasing sequence of ``mu``.

    For one coordinate the barrier objective is ``d + mu log(1 - d m)`` with
    ``m = [(2 Sigma - diag(s))^{-1}]_jj``, maximised at ``d = 1/m - mu``;
    the inverse is kept current with Sherman-Morrison updates and refreshed
    at every ``mu``.
    """
    p = s.shape[0]
    mu = mu_start
    while True:
        M = 2.0 * Sigma.copy()
        for j in range(p):
            M[j, j] -= s[j]
        Minv = np.linalg.inv(M)
        for _ in range(max_sweeps):
            moved = 0.0
            for j in range(p):
                m = Minv[j, j]
                new = s[j] + 1.0 / m - mu
                if new < 0.0:
                    new = 0.0
                elif new > 1.0:
                    new = 1.0
                d = new - s[j]
                if d == 0.0:
                    continue
                scale = d / (1.0 - d * m)
                u = Minv[:, j].copy()
                for a in range(p):
                    for b in range(p):
                        Minv[a, b] += scale * u[a] * u[b]
                s[j] = new
                if abs(d) > moved:
                    moved = abs(d)
            if moved <= tol * mu:
                break
        if mu <= mu_stop:
            return s
        mu = max(mu * 0.2, mu_stop)


def sdp_knockoff_s(Sigma, mu_stop: float = 1e-7) -> np.ndarray:
    """Approximate solution of ``max sum(s)`` subject to ``0 <= s <= 1`` and
    ``diag(s) <= 2 Sigma`` (Loewner order) for a correlation matrix ``Sigma``.

    Solved by a log-barrier path with inexact centering; the returned point
    is strictly feasible and its objective is typically within 0.1% of the
    optimum.  The
    equi-correlated point ``min(2 lambda_min, 1)`` is the starting value, so
    the result is never worse than the equi-correlated construction.
    """
    Sigma = np.ascontiguousarray(Sigma, dtype=float)
    lam_min = np.linalg.eigvalsh(Sigma)[0]
    if lam_min <= 1e-10:
        raise RankDeficient(f"Gram matrix has smallest eigenvalue {lam_min:.3g}")
    s0 = np.full(Sigma.shape[0], 0.99 * min(2.0 * lam_min, 1.0))
    return _barrier_ascent(Sigma, s0, 0.1, mu_stop, 0.1, 500)


def knockoff_construct(X, method: str = "sdp") -> np.ndarray:
    """Fixed-X knockoffs.

    Columns of ``X`` are scaled to unit Euclidean norm first; the returned
    knockoffs are on that scale.  With ``Sigma`` the Gram matrix of the
    scaled design and ``D = diag(s)``::

        Xk' Xk = Sigma,    X' Xk = Sigma - D

    ``method="equi"`` takes ``s_j = min(2 lambda_min(Sigma), 1)`` for all
    ``j``; ``method="sdp"`` maximises ``sum(s)`` (see :func:`sdp_knockoff_s`).
    Needs ``n >= 2p`` so that an orthonormal block orthogonal to the column
    space of ``X`` exists.
    """
    if method not in KNOCKOFF_METHODS:
        raise DomainError(f"unknown knockoff method {method!r}")
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < 2 * p:
        raise DomainError(f"fixed-X knockoffs need n >= 2p, got n={n}, p={p}")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise RankDeficient("design has an all-zero column")
    Xn = X / norms
    Sigma = Xn.T @ Xn
    evals = np.linalg.eigvalsh(Sigma)
    if evals[0] <= 1e-10:
        raise RankDeficient(f"Gram matrix has smallest eigenvalue {evals[0]:.3g}")
    if method == "equi":
        s = np.full(p, min(2.0 * evals[0], 1.0))
    else:
        s = sdp_knockoff_s(Sigma)
    Sinv = np.linalg.inv(Sigma)
    # C'C = 2 D - D Sigma^{-1} D, PSD because D <= 2 Sigma
    A = 2.0 * np.diag(s) - (s[:, None] * Sinv) * s[None, :]
    A = (A + A.T) / 2
    w, V = np.linalg.eigh(A)
    C = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    Q, _ = np.linalg.qr(Xn, mode="complete")
    U = Q[:, p:2 * p]
    return Xn - (Xn @ Sinv) * s + U @ C


def knockoff_threshold(W, q: float, offset: int = 1) -> float:
    """Smallest ``t`` among the non-zero ``|W|`` whose estimated false
    discovery proportion ``(offset + #{W <= -t}) / max(1, #{W >= t})`` is at
    most ``q``; ``inf`` when none qualifies."""
    if offset not in (0, 1):
        raise DomainError("offset must be 0 or 1")
    W = np.asarray(W, dtype=float)
    for t in np.unique(np.abs(W[W != 0])):
        if (offset + np.count_nonzero(W <= -t)) / max(1, np.count_nonzero(W >= t)) <= q:
            return float(t)
    return math.inf


def knockoff_filter(X, y, q: float = 0.3, offset: int = 1, rng=None,
                    n_folds: int = 10, method: str = "sdp",
                    knockoffs=None) -> SelectionOutcome:
    """Fixed-X knockoff filter with lasso coefficient-difference statistics.

    The lasso is fitted by cross-validation on ``[X, Xk]``.  Original and
    knockoff columns are swapped at random before the fit so that ties in the
    solver's coordinate order cannot favour either copy.  ``knockoffs`` may
    carry a precomputed ``knockoff_construct(X, method)`` for repeated fits
    on one design.
    """
    if not 0 < q < 1:
        raise DomainError("q must lie in (0, 1)")
    if rng is None:
        rng = np.random.default_rng()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    Xk = knockoff_construct(X, method) if knockoffs is None else np.asarray(knockoffs)
    if Xk.shape != X.shape:
        raise DomainError("knockoffs must have the shape of X")
    Xn = X / np.linalg.norm(X, axis=0)
    swap = rng.random(p) < 0.5
    left = np.where(swap, Xk, Xn)
    right = np.where(swap, Xn, Xk)
    Z, yc = _standardize(np.hstack([left, right]), y)
    lam, fit = lasso_cv(Z, yc, n_folds=n_folds, rng=rng)
    b = np.abs(fit.coef)
    W = (b[:p] - b[p:]) * np.where(swap, -1.0, 1.0)
    T = knockoff_threshold(W, q, offset)
    s = np.flatnonzero(W >= T)
    return SelectionOutcome(s, "knockoff", {"W": W, "threshold": np.array([T]),
                                            "lambda": np.array([lam])})


def stability_q(p: int, pfer: float, cutoff: float) -> int:
    """Per-subsample selection size from the error bound
    ``E(V) <= q^2 / ((2 cutoff - 1) p)`` solved at ``E(V) = pfer``."""
    # the slack keeps exact squares such as 3 * 0.4 * 30 = 36 from flooring to 5
    return int(math.floor(math.sqrt(pfer * (2.0 * cutoff - 1.0) * p) + 1e-9))


def stability_select(X, y, pfer: float = 3.0, cutoff: float = 0.7, B: int = 50,
                     rng=None) -> SelectionOutcome:
    """Stability selection over ``B`` half-size subsamples.

    On every subsample the first ``q`` variables to enter the lasso path are
    recorded; a variable is selected when its entry frequency reaches
    ``cutoff``.
    """
    if not 0.5 < cutoff < 1:
        raise DomainError("cutoff must lie in (0.5, 1)")
    if not pfer > 0:
        raise DomainError("pfer must be positive")
    if B < 10:
        raise DomainError("need at least 10 subsamples")
    if rng is None:
        rng = np.random.default_rng()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    q = stability_q(p, pfer, cutoff)
    if q < 1:
        raise DomainError("pfer and cutoff leave no variable per subsample")
    half = n // 2
    counts = np.zeros(p)
    for _ in range(B):
        idx = rng.choice(n, size=half, replace=False)
        Xs, ys = _standardize(X[idx], y[idx])
        counts[lasso_entry_order(Xs, ys, q)] += 1
    freq = counts / B
    return SelectionOutcome(np.flatnonzero(freq >= cutoff), "stability",
                            {"freq": freq, "q": np.array([q])})


def lasso_support(X, y, lam: float) -> SelectionOutcome:
    """Support of the lasso at a fixed penalty (no centering or scaling)."""
    fit = lasso_cd(X, y, lam)
    return SelectionOutcome(np.flatnonzero(fit.coef), "lasso_support", {"coef": fit.coef})
