"""Post-selection inference with data splitting and additive Gaussian
randomisation of the response."""

from .errors import (DegenerateFit, DimensionMismatch, DomainError, EmptySelection,
                     FailureBudgetExceeded, InsufficientConditioning, NoConvergence,
                     RankDeficient, SplitInfError)

__version__ = "0.1.0"

__all__ = [
    "SplitInfError",
    "DomainError",
    "DimensionMismatch",
    "RankDeficient",
    "EmptySelection",
    "DegenerateFit",
    "NoConvergence",
    "InsufficientConditioning",
    "FailureBudgetExceeded",
]
