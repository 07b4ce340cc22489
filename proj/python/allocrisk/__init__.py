"""Covariate-balancing treatment allocation (python bindings)."""

from ._allocrisk import (
    AllocriskError,
    Session,
    __version__,
    counterexample_table,
    equal_split_condition,
    mahalanobis,
    optimize,
    risk,
    risk_direct,
    selftest,
)

__all__ = [
    "AllocriskError",
    "Session",
    "__version__",
    "counterexample_table",
    "equal_split_condition",
    "mahalanobis",
    "optimize",
    "risk",
    "risk_direct",
    "selftest",
]
