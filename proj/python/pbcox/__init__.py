"""Cox regression with tied event times.

Thin wrapper over the compiled ``_core`` module. Arrays go in as numpy
arrays (times, 0/1 status, n x p covariates) and results come back as dicts.
"""

from ._core import (
    CapacityError,
    DegenerateError,
    DomainError,
    EvaluationError,
    NonConvergenceError,
    ParseError,
    StructureError,
    fit,
    group_times,
    lecam_bound,
    load_csv,
    log_apl,
    pb_pmf,
    pb_pmf_all,
    simulate,
    tau_sweep,
)

__all__ = [
    "CapacityError",
    "DegenerateError",
    "DomainError",
    "EvaluationError",
    "NonConvergenceError",
    "ParseError",
    "StructureError",
    "fit",
    "group_times",
    "lecam_bound",
    "load_csv",
    "log_apl",
    "pb_pmf",
    "pb_pmf_all",
    "simulate",
    "tau_sweep",
]
