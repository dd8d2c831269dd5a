"""Confidence intervals for selected coefficients and projection parameters.

Each builder returns an :class:`IntervalReport` with one equal-tailed
interval per selected index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateFit, DomainError, EmptySelection
from .linmodel import as_index, inverse_gram_diag, ols_fit, projection_parameter

__all__ = [
    "IntervalReport",
    "ci_coef_face_value",
    "ci_coef_ds",
    "ci_coef_randomised",
    "ci_projection",
]

METHODS = ("face_value", "ds_holdout", "randomised")
TARGETS = ("full_coef", "projection_full_design", "projection_holdout_design")


@dataclass(frozen=True)
class IntervalReport:
    index: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method_tag: str
    target_tag: str
    sigma_used: float

    def __post_init__(self):
        if self.method_tag not in METHODS:
            raise DomainError(f"unknown method {self.method_tag!r}")
        if self.target_tag not in TARGETS:
            raise DomainError(f"unknown target {self.target_tag!r}")
        if np.any(self.lower > self.upper):
            raise DomainError("interval with lower > upper")

    def __len__(self):
        return len(self.index)

    @property
    def length(self) -> np.ndarray:
        return self.upper - self.lower

    def covers(self, target) -> np.ndarray:
        target = np.asarray(target, dtype=float)
        return (self.lower <= target) & (target <= self.upper)


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")


def _report(index, est, se, quantile, alpha, method, target, sigma):
    half = quantile * se
    return IntervalReport(index, est, se, est - half, est + half, 1.0 - alpha, method, target,
                          float(sigma))


def _t_intervals(X, y, s, alpha, method):
    _check_alpha(alpha)
    X = np.asarray(X, dtype=float)
    s = as_index(s, X.shape[1])
    n, p = X.shape
    if n <= p:
        raise DegenerateFit(f"t-intervals need n > p, got {n}x{p}")
    fit = ols_fit(X, y)
    sigma = math.sqrt(fit.sigma2_hat)
    se = sigma * np.sqrt(inverse_gram_diag(X)[s])
    q = stats.t.ppf(1.0 - alpha / 2.0, n - p)
    return _report(s, fit.coef[s], se, q, alpha, method, "full_coef", sigma)


def ci_coef_face_value(X, y, s, alpha: float = 0.1) -> IntervalReport:
    """Classical t-intervals on the data that also drove the selection.

    Ignores selection and is expected to undercover weak effects.
    """
    return _t_intervals(X, y, s, alpha, "face_value")


def ci_coef_ds(X2, y2, s, alpha: float = 0.1) -> IntervalReport:
    """Classical t-intervals on the hold-out rows of a data split."""
    return _t_intervals(X2, y2, s, alpha, "ds_holdout")


def ci_coef_randomised(X, v, s, gamma: float, sigma_hat: float, alpha: float = 0.1) -> IntervalReport:
    """Normal intervals from the inference copy ``V`` of a randomised split.

    The least-squares estimate on ``V`` has variance
    ``(1 + gamma^-2) sigma^2 [(X'X)^{-1}]_jj``; ``sigma_hat`` is plugged in.
    """
    _check_alpha(alpha)
    if not gamma > 0 or not sigma_hat > 0:
        raise DomainError("gamma and sigma_hat must be positive")
    X = np.asarray(X, dtype=float)
    s = as_index(s, X.shape[1])
    fit = ols_fit(X, v)
    scale = math.sqrt(1.0 + gamma ** -2) * sigma_hat
    se = scale * np.sqrt(inverse_gram_diag(X)[s])
    q = stats.norm.ppf(1.0 - alpha / 2.0)
    return _report(s, fit.coef[s], se, q, alpha, "randomised", "full_coef", sigma_hat)


def ci_projection(X_inf, y_inf, s, alpha: float, sigma_hd: float, variance_inflation: float = 1.0,
                  method: str = "ds_holdout",
                  target_tag: str = "projection_holdout_design") -> IntervalReport:
    """Normal intervals for the projection parameter of ``y_inf`` on ``X_inf[:, s]``.

    ``variance_inflation`` multiplies the noise variance: 1 for hold-out rows,
    ``1 + gamma^-2`` for the inference copy of a randomised split.
    """
    _check_alpha(alpha)
    if not sigma_hd > 0:
        raise DomainError("sigma_hd must be positive")
    if variance_inflation < 1.0:
        raise DomainError("variance inflation must be at least 1")
    X_inf = np.asarray(X_inf, dtype=float)
    s = as_index(s, X_inf.shape[1])
    if len(s) == 0:
        raise EmptySelection("no selected columns")
    Xs = X_inf[:, s]
    est = projection_parameter(Xs, np.arange(len(s)), y_inf).values
    scale = math.sqrt(variance_inflation) * sigma_hd
    se = scale * np.sqrt(inverse_gram_diag(Xs))
    q = stats.norm.ppf(1.0 - alpha / 2.0)
    return _report(s, est, se, q, alpha, method, target_tag, sigma_hd)

