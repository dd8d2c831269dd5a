"""Information-splitting strategies.

Hold-out splits return a :class:`SplitPlan` (0-based row indices); additive
randomisation returns a :class:`UVDecomposition` of the response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DomainError

__all__ = [
    "SplitPlan",
    "UVDecomposition",
    "split_size",
    "gamma_from_fraction",
    "fraction_from_gamma",
    "randomised_split",
    "simple_split",
    "duplex_split",
    "coin_flip_split",
    "stratified_split",
]

STRATEGIES = ("simple", "duplex", "coin_flip", "stratified")


@dataclass(frozen=True)
class SplitPlan:
    selection_idx: np.ndarray
    inference_idx: np.ndarray
    fraction: float
    strategy_tag: str

    def __post_init__(self):
        if self.strategy_tag not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy_tag!r}")
        both = np.concatenate([self.selection_idx, self.inference_idx])
        if len(np.unique(both)) != len(both) or (len(both) and both.max() != len(both) - 1):
            raise DomainError("selection and inference sets must partition 0..n-1")

    @property
    def n(self) -> int:
        return len(self.selection_idx) + len(self.inference_idx)


@dataclass(frozen=True)
class UVDecomposition:
    u: np.ndarray
    v: np.ndarray
    gamma: float
    sigma_hat: float
    z: np.ndarray

    def reconstruct(self) -> np.ndarray:
        g2 = self.gamma * self.gamma
        return (self.u + g2 * self.v) / (1.0 + g2)


def split_size(n: int, f: float) -> int:
    """Selection-set size ``round(f n)`` with halves rounded up."""
    return int(math.floor(f * n + 0.5))


def _check_fraction(f):
    if not 0.0 < f < 1.0:
        raise DomainError(f"fraction must lie in (0, 1), got {f}")


def gamma_from_fraction(f: float) -> float:
    """Randomisation scale whose selection copy keeps fraction ``f`` of the
    Fisher information: ``(1 + gamma^2)^{-1} = f``."""
    _check_fraction(f)
    return math.sqrt(1.0 / f - 1.0)


def fraction_from_gamma(gamma: float) -> float:
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    return 1.0 / (1.0 + gamma * gamma)


def randomised_split(y, f: float, sigma_hat: float, rng: np.random.Generator) -> UVDecomposition:
    """``U = y + gamma W`` for selection, ``V = y - W / gamma`` for inference,
    with ``W = sigma_hat Z`` and ``Z`` standard normal."""
    gamma = gamma_from_fraction(f)
    if not sigma_hat > 0:
        raise DomainError("sigma_hat must be positive")
    y = np.asarray(y, dtype=float)
    z = rng.standard_normal(y.shape[0])
    w = sigma_hat * z
    return UVDecomposition(y + gamma * w, y - w / gamma, gamma, float(sigma_hat), z)


def _plan(selection, n, f, tag) -> SplitPlan:
    sel = np.sort(np.asarray(selection, dtype=np.intp))
    mask = np.ones(n, dtype=bool)
    mask[sel] = False
    return SplitPlan(sel, np.flatnonzero(mask), float(f), tag)


def simple_split(n: int, f: float, rng: np.random.Generator) -> SplitPlan:
    """Selection set drawn uniformly among subsets of size ``round(f n)``."""
    _check_fraction(f)
    n1 = split_size(n, f)
    if not 1 <= n1 < n:
        raise DomainError(f"fraction {f} leaves an empty set for n={n}")
    return _plan(rng.choice(n, size=n1, replace=False), n, f, "simple")


def duplex_split(X, f: float) -> SplitPlan:
    """Deterministic DUPLEX allocation of the rows of ``X``.

    The farthest pair of rows seeds the selection set and the farthest
    remaining pair seeds the inference set.  The sets then take turns,
    selection first, each adding the unassigned row whose minimum distance
    to its current members is largest.  Once the smaller set reaches its
    quota every remaining row goes to the other set.  Ties resolve to the
    lowest row index.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 4:
        raise DomainError("DUPLEX needs at least four rows")
    _check_fraction(f)
    n_sel = split_size(n, f)
    if not 1 <= n_sel < n:
        raise DomainError(f"fraction {f} leaves an empty set for n={n}")
    quota = np.array([n_sel, n - n_sel])
    D = squareform(pdist(X)) if X.shape[1] else np.zeros((n, n))

    free = np.ones(n, dtype=bool)
    members = ([], [])
    # min distance of every row to each set; +inf while the set is empty
    near = np.full((2, n), np.inf)

    def assign(i, side):
        members[side].append(i)
        free[i] = False
        np.minimum(near[side], D[i], out=near[side])

    def farthest_pair():
        idx = np.flatnonzero(free)
        sub = np.where(np.triu(np.ones((len(idx), len(idx)), dtype=bool), 1),
                       D[np.ix_(idx, idx)], -1.0)
        flat = int(np.argmax(sub))  # first maximum in row-major order
        a, b = divmod(flat, len(idx))
        return idx[a], idx[b]

    for side in (0, 1):
        if quota[side] >= 2 and free.sum() >= 2:
            a, b = farthest_pair()
            assign(a, side)
            assign(b, side)
    small = int(np.argmin(quota)) if quota[0] != quota[1] else -1
    side = 0
    while free.any():
        if small >= 0 and len(members[small]) >= quota[small]:
            for i in np.flatnonzero(free):
                assign(i, 1 - small)
            break
        if len(members[side]) >= quota[side]:
            side = 1 - side
            continue
        score = np.where(free, near[side], -np.inf)
        assign(int(np.argmax(score)), side)
        side = 1 - side
    return _plan(members[0], n, f, "duplex")


def coin_flip_split(A, n: int, rng: np.random.Generator) -> SplitPlan:
    """Return ``(A, A^c)`` or ``(A^c, A)`` with probability one half each."""
    A = np.unique(np.asarray(A, dtype=np.intp))
    if len(A) == 0 or len(A) >= n or A[0] < 0 or A[-1] >= n:
        raise DomainError("A must be a non-empty proper subset of 0..n-1")
    mask = np.zeros(n, dtype=bool)
    mask[A] = True
    sel = A if rng.random() < 0.5 else np.flatnonzero(~mask)
    return _plan(sel, n, len(sel) / n, "coin_flip")


def stratified_split(groups, m: int, rng: np.random.Generator) -> SplitPlan:
    """Draw ``m`` rows uniformly from each of ``k`` equal-size groups."""
    groups = [np.asarray(g, dtype=np.intp) for g in groups]
    sizes = {len(g) for g in groups}
    if len(sizes) != 1:
        raise DomainError("groups must have equal sizes")
    g = sizes.pop()
    if not 1 <= m < g:
        raise DomainError(f"need 1 <= m < group size {g}")
    n = sum(len(grp) for grp in groups)
    sel = np.concatenate([rng.choice(grp, size=m, replace=False) for grp in groups])
    return _plan(sel, n, m / g, "stratified")
