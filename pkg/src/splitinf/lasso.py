"""Lasso solvers: coordinate descent, warm-started paths, K-fold CV and the
homotopy (LARS-lasso) entry order used by stability selection.

All solvers minimise ``(1/2n)|y - X b|^2 + lam |b|_1`` without an intercept;
callers center and scale as they need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DomainError, NoConvergence

__all__ = [
    "LassoFit",
    "soft_threshold",
    "lasso_cd",
    "lasso_path",
    "lambda_grid",
    "lasso_cv",
    "kkt_violation",
    "lasso_entry_order",
]

KKT_TOL = 1e-7
MAX_SWEEPS = 100_000
#: a path stops early once this fraction of the null deviance is explained
DEV_RATIO_STOP = 0.999
#: grid points past the running CV minimum before the CV sweep stops
CV_PATIENCE = 15


@dataclass(frozen=True)
class LassoFit:
    lam: float
    coef: np.ndarray
    n_iter: int
    converged: bool


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@numba.njit(cache=True)
def _coord(G, grad, beta, lam, j):
    gjj = G[j, j]
    old = beta[j]
    z = grad[j] + gjj * old
    if z > lam:
        new = (z - lam) / gjj
    elif z < -lam:
        new = (z + lam) / gjj
    else:
        new = 0.0
    delta = new - old
    if delta != 0.0:
        beta[j] = new
        for k in range(grad.shape[0]):
            grad[k] -= G[j, k] * delta
    return delta


@numba.njit(cache=True)
def _violation(grad, beta, lam, j):
    b = beta[j]
    if b > 0.0:
        return abs(grad[j] - lam)
    if b < 0.0:
        return abs(grad[j] + lam)
    v = abs(grad[j]) - lam
    return v if v > 0.0 else 0.0


@numba.njit(cache=True)
def _polish(G, grad, beta, lam, active, na):
    """Newton step on the current active set with its signs held fixed.

    The fixed-sign problem is a quadratic whose minimiser ``x`` solves a
    linear system.  Moving from ``beta`` towards ``x`` never increases the
    lasso objective until a coordinate crosses zero, so the step stops at the
    first crossing (that coordinate becomes exactly zero).  Returns True when
    the full step was taken.  With collinear active columns the minimisers
    form an affine set; the step then targets the one nearest ``beta``.
    """
    idx = active[:na]
    GA = np.empty((na, na))
    rhs = np.empty(na)
    for a in range(na):
        ja = idx[a]
        s = 1.0 if beta[ja] > 0.0 else -1.0
        # c_A - lam s_A with c = grad + G beta
        acc = grad[ja]
        for b in range(na):
            GA[a, b] = G[ja, idx[b]]
            acc += G[ja, idx[b]] * beta[idx[b]]
        rhs[a] = acc - lam * s
    bA = np.empty(na)
    for a in range(na):
        bA[a] = beta[idx[a]]
    ok = True
    try:
        x = np.linalg.solve(GA, rhs)
    except Exception:  # noqa: BLE001 - singular system
        ok = False
        x = bA
    if ok:
        res = GA @ x - rhs
        ok = np.all(np.isfinite(x)) and np.sqrt(res @ res) <= 1e-9 * (1.0 + np.sqrt(rhs @ rhs))
    if not ok:
        # minimum-norm correction: x = beta_A + pinv(G_AA) (rhs - G_AA beta_A)
        x = bA + np.linalg.lstsq(GA, rhs - GA @ bA, 1e-12)[0]
        if not np.all(np.isfinite(x)):
            return False
    t = 1.0
    hit = -1
    for a in range(na):
        b0 = beta[idx[a]]
        if x[a] * b0 <= 0.0:
            ta = b0 / (b0 - x[a])
            if ta < t:
                t = ta
                hit = a
    for a in range(na):
        ja = idx[a]
        new = 0.0 if a == hit else beta[ja] + t * (x[a] - beta[ja])
        delta = new - beta[ja]
        if delta != 0.0:
            beta[ja] = new
            for k in range(grad.shape[0]):
                grad[k] -= G[ja, k] * delta
    return hit < 0


@numba.njit(cache=True)
def _cd_gram(G, grad, beta, lam, tol, max_sweeps, max_newton):
    """Cyclic CD on the Gram form; ``grad = c - G beta`` is kept in sync.

    Alternates a full sweep with sweeps over the non-zero coordinates and
    returns once the KKT conditions hold to ``tol`` on every coordinate.
    Slow active-set phases are shortcut by a direct solve once the signs
    have settled.
    """
    p = beta.shape[0]
    sweeps = 0
    active = np.empty(p, dtype=np.int64)
    while sweeps < max_sweeps:
        for j in range(p):
            _coord(G, grad, beta, lam, j)
        sweeps += 1
        na = 0
        for j in range(p):
            if beta[j] != 0.0:
                active[na] = j
                na += 1
        inner = 0
        while sweeps < max_sweeps:
            worst = 0.0
            for a in range(na):
                v = _violation(grad, beta, lam, active[a])
                if v > worst:
                    worst = v
            if worst <= 0.5 * tol:
                break
            inner += 1
            if inner % 8 == 0 and 0 < na <= max_newton:
                # the sweeps may have zeroed coordinates, whose sign is undefined
                m = 0
                for a in range(na):
                    if beta[active[a]] != 0.0:
                        active[m] = active[a]
                        m += 1
                na = m
                if na == 0:
                    continue
                _polish(G, grad, beta, lam, active, na)
                # drop coordinates the step zeroed
                m = 0
                for a in range(na):
                    if beta[active[a]] != 0.0:
                        active[m] = active[a]
                        m += 1
                na = m
                continue
            for a in range(na):
                _coord(G, grad, beta, lam, active[a])
            sweeps += 1
        worst = 0.0
        for j in range(p):
            v = _violation(grad, beta, lam, j)
            if v > worst:
                worst = v
        if worst <= tol:
            return sweeps, True
    return sweeps, False


@numba.njit(cache=True)
def _path_gram(G, c, yy, lambdas, tol, max_sweeps, dev_stop, max_newton):
    """Warm-started path; stops early when the explained deviance saturates.

    Returns the coefficient rows, total sweeps and the number of grid points
    solved.  A negative count flags non-convergence at that grid point.
    """
    p = c.shape[0]
    L = lambdas.shape[0]
    coefs = np.zeros((L, p))
    beta = np.zeros(p)
    grad = c.copy()
    total = 0
    for k in range(L):
        sweeps, ok = _cd_gram(G, grad, beta, lambdas[k], tol, max_sweeps, max_newton)
        total += sweeps
        coefs[k] = beta
        if not ok:
            return coefs, total, -(k + 1)
        if yy > 0.0 and dev_stop < 1.0:
            # |y - Xb|^2/n = yy - b'c - b'grad
            rss = yy - beta @ c - beta @ grad
            if 1.0 - rss / yy >= dev_stop:
                return coefs, total, k + 1
    return coefs, total, L


def kkt_violation(X, y, coef, lam) -> float:
    """Largest KKT violation of ``coef`` for the lasso problem at ``lam``."""
    n = X.shape[0]
    grad = X.T @ (y - X @ coef) / n
    v = np.where(coef > 0, np.abs(grad - lam),
                 np.where(coef < 0, np.abs(grad + lam), np.maximum(np.abs(grad) - lam, 0.0)))
    return float(v.max(initial=0.0))


def _newton_cap(shape) -> int:
    # active-set Gram blocks larger than the row count are singular
    return max(0, min(shape[0] - 1, shape[1]))


def _gram(X, y):
    n = X.shape[0]
    return X.T @ X / n, X.T @ y / n


def lasso_cd(X, y, lam: float, init=None, tol: float = KKT_TOL,
             max_sweeps: int = MAX_SWEEPS) -> LassoFit:
    """Coordinate descent for a single penalty value.

    Raises
    ------
    NoConvergence
        If the KKT conditions are not met within ``max_sweeps`` sweeps.
    """
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    G, c = _gram(X, y)
    if np.any(np.diag(G) <= 0):
        raise DomainError("design has an all-zero column")
    beta = np.zeros(X.shape[1]) if init is None else np.array(init, dtype=float)
    grad = c - G @ beta
    sweeps, ok = _cd_gram(G, grad, beta, float(lam), tol, max_sweeps, _newton_cap(X.shape))
    if not ok:
        raise NoConvergence(f"lasso did not converge in {max_sweeps} sweeps at lambda={lam:g}")
    return LassoFit(float(lam), beta, int(sweeps), True)


def lambda_grid(X, y, n_lambda: int = 100, eps: float = 1e-3) -> np.ndarray:
    n = X.shape[0]
    lam_max = float(np.max(np.abs(X.T @ y))) / n
    if lam_max == 0.0:
        return np.zeros(1)
    return np.geomspace(lam_max, eps * lam_max, n_lambda)


def lasso_path(X, y, lambdas=None, tol: float = KKT_TOL, max_sweeps: int = MAX_SWEEPS,
               dev_stop: float = DEV_RATIO_STOP):
    """Solutions along a decreasing penalty grid with warm starts.

    Returns ``(lambdas, coefs)`` truncated to the grid points actually solved.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lambdas is None:
        lambdas = lambda_grid(X, y)
    lambdas = np.asarray(lambdas, dtype=float)
    G, c = _gram(X, y)
    coefs, _, done = _path_gram(G, c, float(y @ y) / len(y), lambdas, tol, max_sweeps, dev_stop,
                                _newton_cap(X.shape))
    if done < 0:
        raise NoConvergence(f"lasso path stalled at lambda={lambdas[-done - 1]:g}")
    return lambdas[:done], coefs[:done]


def _fold_ids(n: int, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % n_folds)


def lasso_cv(X, y, n_folds: int = 10, rng=None, n_lambda: int = 100, eps: float = 1e-3,
             tol: float = KKT_TOL, max_sweeps: int = MAX_SWEEPS, patience: int = CV_PATIENCE,
             return_curve: bool = False):
    """Choose the penalty by K-fold CV and refit on the full data.

    The grid has ``n_lambda`` log-spaced values from ``max|X'y|/n`` down to
    ``eps`` times that; all fold paths and the full-data path advance along it
    together with warm starts.  Out-of-fold squared error is pooled over
    folds.  The sweep stops once ``patience`` grid points have passed since
    the running minimum of the CV error, or when any path has explained
    ``DEV_RATIO_STOP`` of its deviance.  The minimiser (largest penalty on
    ties) is returned with the full-data solution at that penalty.
    """
    if n_folds < 2:
        raise DomainError("need at least two folds")
    if rng is None:
        rng = np.random.default_rng()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n_folds > n:
        raise DomainError("more folds than observations")
    lambdas = lambda_grid(X, y, n_lambda, eps)
    folds = _fold_ids(n, n_folds, rng)

    XtX = X.T @ X
    Xty = X.T @ y
    paths = [_PathState(XtX / n, Xty / n, float(y @ y) / n, _newton_cap(X.shape))]
    tests = []
    for k in range(n_folds):
        test = folds == k
        Xt, yt = X[test], y[test]
        m = n - Xt.shape[0]
        ytr = y[~test]
        paths.append(_PathState((XtX - Xt.T @ Xt) / m, (Xty - Xt.T @ yt) / m,
                                float(ytr @ ytr) / m, _newton_cap((m, p))))
        tests.append((Xt, yt))

    coefs = np.zeros((len(lambdas), p))
    cv = np.full(len(lambdas), np.inf)
    sweeps = 0
    reach = 0
    for k, lam in enumerate(lambdas):
        saturated = False
        for state in paths:
            s, sat = state.advance(lam, tol, max_sweeps)
            sweeps += s
            saturated |= sat
        coefs[k] = paths[0].beta
        sse = 0.0
        for state, (Xt, yt) in zip(paths[1:], tests):
            err = yt - Xt @ state.beta
            sse += float(err @ err)
        cv[k] = sse / n
        reach = k + 1
        if saturated or k - int(np.argmin(cv[:reach])) >= patience:
            break
    best = int(np.argmin(cv[:reach]))
    fit = LassoFit(float(lambdas[best]), coefs[best].copy(), int(sweeps), True)
    if return_curve:
        return fit.lam, fit, lambdas[:reach], cv[:reach]
    return fit.lam, fit


class _PathState:
    """One warm-started path advanced a grid point at a time."""

    def __init__(self, G, c, yy, newton_cap):
        self.G = G
        self.c = c
        self.yy = yy
        self.cap = newton_cap
        self.beta = np.zeros(len(c))
        self.grad = c.copy()

    def advance(self, lam, tol, max_sweeps):
        sweeps, ok = _cd_gram(self.G, self.grad, self.beta, float(lam), tol, max_sweeps, self.cap)
        if not ok:
            raise NoConvergence(f"lasso path stalled at lambda={lam:g}")
        rss = self.yy - self.beta @ self.c - self.beta @ self.grad
        return sweeps, self.yy > 0 and 1.0 - rss / self.yy >= DEV_RATIO_STOP


def lasso_entry_order(X, y, max_entrants: int, atol: float = 1e-12) -> np.ndarray:
    """Variables in the order they first join the lasso homotopy path.

    Follows the piecewise-linear solution path from ``lam = max|X'y|`` down,
    handling coefficients that cross zero (the lasso modification of LARS).
    Stops once ``max_entrants`` distinct variables have entered or the path
    reaches ``lam = 0``.  Ties go to the lowest column index.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    c = X.T @ y
    lam = float(np.max(np.abs(c)))
    if lam <= atol or max_entrants <= 0:
        return np.zeros(0, dtype=np.intp)
    first = int(np.argmax(np.abs(c)))
    active = [first]
    signs = [float(np.sign(c[first]))]
    beta = np.zeros(p)
    order = [first]
    seen = np.zeros(p, dtype=bool)
    seen[first] = True
    max_steps = 8 * max(max_entrants, 1) + 8 * p
    for _ in range(max_steps):
        if len(order) >= max_entrants or lam <= atol:
            break
        A = np.asarray(active)
        XA = X[:, A]
        try:
            v = np.linalg.solve(XA.T @ XA, np.asarray(signs))
        except np.linalg.LinAlgError:
            break
        # per unit decrease of lam: d beta_A = v, d c_j = -a_j
        a = X.T @ (XA @ v)
        inactive = np.ones(p, dtype=bool)
        inactive[A] = False
        step = lam
        enter = -1
        with np.errstate(divide="ignore", invalid="ignore"):
            s1 = (lam - c) / (1.0 - a)
            s2 = (lam + c) / (1.0 + a)
        cand = np.where(inactive & (s1 > atol), s1, np.inf)
        cand = np.minimum(cand, np.where(inactive & (s2 > atol), s2, np.inf))
        j = int(np.argmin(cand))
        if cand[j] < step:
            step, enter = float(cand[j]), j
        drop = -1
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -beta[A] / v
        t = np.where(t > atol, t, np.inf)
        if t.size and t.min() < step:
            k = int(np.argmin(t))
            step, enter, drop = float(t[k]), -1, k
        beta[A] += step * v
        c = c - step * a
        lam -= step
        if drop >= 0:
            beta[A[drop]] = 0.0
            del active[drop]
            del signs[drop]
            if not active:
                break
        elif enter >= 0:
            active.append(enter)
            signs.append(float(np.sign(c[enter])) or 1.0)
            if not seen[enter]:
                seen[enter] = True
                order.append(enter)
        else:
            break
        if len(active) >= min(n, p):
            # path saturates; no further variable can join
            break
    return np.asarray(order[:max_entrants], dtype=np.intp)
