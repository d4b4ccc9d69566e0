"""Python bindings for the mflq periodic mean-field LQ solver."""

from ._mflq import (
    MflqError,
    Problem,
    run_cli,
    simulate,
    solve_finite_horizon,
    solve_periodic,
    turnpike,
    validate,
)

__all__ = [
    "MflqError",
    "Problem",
    "run_cli",
    "simulate",
    "solve_finite_horizon",
    "solve_periodic",
    "turnpike",
    "validate",
]
