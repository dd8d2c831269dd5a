"""Exception hierarchy shared by every module."""


class SplitInfError(Exception):
    """Base class for all package errors."""


class DomainError(SplitInfError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionMismatch(SplitInfError, ValueError):
    """Array shapes are inconsistent."""


class RankDeficient(SplitInfError, ArithmeticError):
    """A design matrix (or submatrix) is numerically rank deficient."""


class EmptySelection(SplitInfError, ValueError):
    """An operation that needs a non-empty selected set received none."""


class DegenerateFit(SplitInfError, ArithmeticError):
    """A fit leaves no residual degrees of freedom."""


class NoConvergence(SplitInfError, ArithmeticError):
    """An iterative solver hit its iteration cap."""


class InsufficientConditioning(SplitInfError, RuntimeError):
    """Too few replications fall in the conditioning event."""


class FailureBudgetExceeded(SplitInfError, RuntimeError):
    """Too many replications had to be resampled after numerical failures."""
