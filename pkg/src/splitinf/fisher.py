"""Fisher-information splits in the Gaussian linear model and the optimality
criteria used to compare hold-out splitting with additive randomisation.

For a constant-inclusion strategy ``R`` (``P(i in R) = f`` for every row)
and a convex, strictly increasing criterion ``phi``::

    phi{(1/f) I_Y^{-1}}       <  E phi{I_R^{-1}}
    phi{(1/(1-f)) I_Y^{-1}}   <  E phi{I_{R^c}^{-1}}

whenever ``I_R`` is not almost surely constant.  The left-hand sides are the
criteria of the randomised split, whose selection and inference copies carry
``f I_Y`` and ``(1-f) I_Y``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, RankDeficient
from .split import SplitPlan, split_size

__all__ = [
    "InfoSplit",
    "PhiCriterion",
    "CRITERIA",
    "gaussian_info_split",
    "phi_eval",
    "Strategy",
    "Prop1Result",
    "verify_proposition1",
]

ENUMERATION_LIMIT = 10_000


@dataclass(frozen=True)
class InfoSplit:
    info_selection: np.ndarray
    info_inference: np.ndarray
    info_full: np.ndarray


@dataclass(frozen=True)
class PhiCriterion:
    kind: str
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in CRITERIA:
            raise DomainError(f"unknown criterion {self.kind!r}")
        if self.kind == "quadratic_form" and self.v is None:
            raise DomainError("quadratic_form needs a vector v")

    def __call__(self, A):
        return phi_eval(A, self)


CRITERIA = ("trace", "quadratic_form", "max_diag", "max_eigenvalue")


def gaussian_info_split(X, plan: SplitPlan, sigma2: float = 1.0) -> InfoSplit:
    X = np.asarray(X, dtype=float)
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    sel = X[plan.selection_idx]
    inf = X[plan.inference_idx]
    I_sel = sel.T @ sel / sigma2
    I_inf = inf.T @ inf / sigma2
    for name, M in (("selection", I_sel), ("inference", I_inf)):
        if np.linalg.matrix_rank(M) < X.shape[1]:
            raise RankDeficient(f"{name} information is singular")
    return InfoSplit(I_sel, I_inf, X.T @ X / sigma2)


def _phi_batch(A: np.ndarray, crit: PhiCriterion) -> np.ndarray:
    """Criterion on a stack of symmetric matrices with shape (..., p, p)."""
    if crit.kind == "trace":
        return np.trace(A, axis1=-2, axis2=-1)
    if crit.kind == "quadratic_form":
        v = np.asarray(crit.v, dtype=float)
        return np.einsum("i,...ij,j->...", v, A, v)
    if crit.kind == "max_diag":
        return np.diagonal(A, axis1=-2, axis2=-1).max(axis=-1)
    return np.linalg.eigvalsh(A)[..., -1]


def phi_eval(A, criterion: PhiCriterion, tol: float = 1e-10) -> float:
    """Evaluate a criterion on one symmetric positive-definite matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("expected a square matrix")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > tol * scale:
        raise DomainError("matrix is not symmetric")
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise DomainError("matrix is not positive definite")
    return float(_phi_batch(A, criterion))


@dataclass(frozen=True)
class Strategy:
    """Constant-inclusion splitting strategy.

    ``simple`` draws ``round(f n)`` rows uniformly; ``coin_flip`` swaps the
    roles of ``A`` and its complement with probability 1/2 (``A`` defaults to
    the first ``n/2`` rows); ``stratified`` takes ``f g`` rows from each of
    ``k`` consecutive blocks of size ``g``.
    """

    kind: str
    A: Optional[tuple] = None
    k: int = 2

    def __post_init__(self):
        if self.kind not in ("simple", "coin_flip", "stratified"):
            raise DomainError(f"strategy {self.kind!r} does not give every row the same "
                              "inclusion probability")

    def support(self, n: int, f: float):
        """All selection sets with their probabilities, or None if too many."""
        if self.kind == "simple":
            n1 = split_size(n, f)
            if math.comb(n, n1) > ENUMERATION_LIMIT:
                return None
            sets = [np.array(c) for c in itertools.combinations(range(n), n1)]
        elif self.kind == "coin_flip":
            A = self._a(n, f)
            sets = [A, np.setdiff1d(np.arange(n), A)]
        else:
            blocks, m = self._blocks(n, f)
            if math.comb(len(blocks[0]), m) ** len(blocks) > ENUMERATION_LIMIT:
                return None
            per = [list(itertools.combinations(b, m)) for b in blocks]
            sets = [np.sort(np.concatenate(c)) for c in itertools.product(*per)]
        return np.array(sets), np.full(len(sets), 1.0 / len(sets))

    def sample(self, n: int, f: float, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` selection sets as rows of an index matrix."""
        if self.kind == "simple":
            n1 = split_size(n, f)
            return np.sort(rng.permuted(np.tile(np.arange(n), (size, 1)), axis=1)[:, :n1], axis=1)
        if self.kind == "coin_flip":
            A = self._a(n, f)
            Ac = np.setdiff1d(np.arange(n), A)
            heads = rng.random(size) < 0.5
            return np.where(heads[:, None], A[None, :], Ac[None, :])
        blocks, m = self._blocks(n, f)
        parts = [np.sort(rng.permuted(np.tile(b, (size, 1)), axis=1)[:, :m], axis=1)
                 for b in blocks]
        return np.hstack(parts)

    def _a(self, n, f):
        if abs(f - 0.5) > 1e-12 or n % 2:
            raise DomainError("coin-flip strategy needs f = 1/2 and even n")
        A = np.arange(n // 2) if self.A is None else np.unique(np.asarray(self.A))
        if len(A) != n // 2:
            raise DomainError("coin-flip set A must hold half the rows")
        return A

    def _blocks(self, n, f):
        if n % self.k:
            raise DomainError(f"{n} rows do not split into {self.k} equal groups")
        g = n // self.k
        m = f * g
        if abs(m - round(m)) > 1e-9 or not 1 <= round(m) < g:
            raise DomainError(f"f * group size must be an integer in [1, {g})")
        return np.arange(n).reshape(self.k, g), int(round(m))


@dataclass(frozen=True)
class Prop1Result:
    lhs_sel: float
    rhs_sel: float
    lhs_inf: float
    rhs_inf: float
    se_sel: float
    se_inf: float
    jensen_sel: float
    jensen_inf: float
    degenerate: bool
    exhaustive: bool
    n_splits: int

    @property
    def margins(self):
        return self.rhs_sel - self.lhs_sel, self.rhs_inf - self.lhs_inf

    def strict(self, n_se: float = 3.0) -> bool:
        """Both margins positive beyond ``n_se`` standard errors."""
        m_sel, m_inf = self.margins
        return m_sel > n_se * self.se_sel and m_inf > n_se * self.se_inf


def _inverse_infos(X, rows, sigma2):
    Xr = X[rows]  # (m, k, p)
    info = np.einsum("mki,mkj->mij", Xr, Xr) / sigma2
    if np.any(np.linalg.matrix_rank(info) < X.shape[1]):
        raise RankDeficient("a sampled split has singular information")
    return info, np.linalg.inv(info)


def verify_proposition1(X, strategy: Strategy, f: float, criterion: PhiCriterion,
                        n_mc: int = 10_000, rng=None, sigma2: float = 1.0,
                        exhaustive: Optional[bool] = None, tol: float = 1e-12) -> Prop1Result:
    """Compare the randomised split's criteria with the strategy's expected ones.

    The expectation over the strategy is exact when its support has at most
    ``ENUMERATION_LIMIT`` members (or ``exhaustive=True``), otherwise a Monte
    Carlo average over ``n_mc`` draws with its standard error.  Also reports
    ``phi(E[I_R^{-1}])``, the value between the two sides that separates the
    harmonic-arithmetic step from the Jensen step.
    """
    if not isinstance(strategy, Strategy):
        raise DomainError("strategy must be a constant-inclusion Strategy")
    if not 0 < f < 1:
        raise DomainError("f must lie in (0, 1)")
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    support = strategy.support(n, f) if exhaustive is not False else None
    if exhaustive and support is None:
        raise DomainError("strategy support too large to enumerate")
    if support is not None:
        sets, weights = support
    else:
        if rng is None:
            rng = np.random.default_rng()
        sets = strategy.sample(n, f, n_mc, rng)
        weights = np.full(n_mc, 1.0 / n_mc)
    comp = np.array([np.setdiff1d(np.arange(n), r) for r in sets])
    # actual inclusion fraction of the sets; equals f for the strategies above
    f_eff = sets.shape[1] / n

    I_full_inv = np.linalg.inv(X.T @ X / sigma2)
    info_sel, inv_sel = _inverse_infos(X, sets, sigma2)
    _, inv_inf = _inverse_infos(X, comp, sigma2)
    phi_sel = _phi_batch(inv_sel, criterion)
    phi_inf = _phi_batch(inv_inf, criterion)

    spread = np.abs(info_sel - info_sel[0]).max()
    degenerate = spread <= tol * max(1.0, np.abs(info_sel).max())

    if support is not None:
        se_sel = se_inf = 0.0
    else:
        se_sel = float(phi_sel.std(ddof=1) / math.sqrt(len(phi_sel)))
        se_inf = float(phi_inf.std(ddof=1) / math.sqrt(len(phi_inf)))
    return Prop1Result(
        lhs_sel=float(_phi_batch(I_full_inv / f_eff, criterion)),
        rhs_sel=float(weights @ phi_sel),
        lhs_inf=float(_phi_batch(I_full_inv / (1.0 - f_eff), criterion)),
        rhs_inf=float(weights @ phi_inf),
        se_sel=se_sel,
        se_inf=se_inf,
        jensen_sel=float(_phi_batch(np.tensordot(weights, inv_sel, axes=1), criterion)),
        jensen_inf=float(_phi_batch(np.tensordot(weights, inv_inf, axes=1), criterion)),
        degenerate=bool(degenerate),
        exhaustive=support is not None,
        n_splits=len(sets),
    )
