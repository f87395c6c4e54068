"""Optimum sample allocation for stratified sampling with box constraints."""

from . import errors
from .core import (
    Allocation,
    ClassicalProblem,
    LowerProblem,
    MinCostProblem,
    SolveTrace,
    StrataFrame,
    TraceStep,
    UpperProblem,
    candidate,
    cost,
    lower_bounds_from_precision,
    s_value,
    srswor_params,
    validate,
    variance,
)
from .solvers import (
    SolveOptions,
    from_lower,
    lrna,
    neyman,
    rna,
    solve_min_cost,
    to_lower,
)
from .verify import (
    SUBSET_CAP,
    Verdict,
    VerdictReason,
    check_lemma_s_mono,
    check_optimal,
    check_optimal_classical,
    check_optimal_min_cost,
    check_optimal_upper,
    kkt_multipliers,
    oracle_grid,
    oracle_min_cost,
    oracle_subsets,
    oracle_upper,
    stationarity_residual,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "StrataFrame",
    "LowerProblem",
    "MinCostProblem",
    "ClassicalProblem",
    "UpperProblem",
    "Allocation",
    "TraceStep",
    "SolveTrace",
    "validate",
    "variance",
    "cost",
    "s_value",
    "candidate",
    "srswor_params",
    "lower_bounds_from_precision",
    "SolveOptions",
    "lrna",
    "rna",
    "neyman",
    "to_lower",
    "from_lower",
    "solve_min_cost",
    "SUBSET_CAP",
    "Verdict",
    "VerdictReason",
    "check_optimal",
    "check_optimal_upper",
    "check_optimal_min_cost",
    "check_optimal_classical",
    "kkt_multipliers",
    "stationarity_residual",
    "oracle_subsets",
    "oracle_upper",
    "oracle_min_cost",
    "oracle_grid",
    "check_lemma_s_mono",
    "__version__",
]
