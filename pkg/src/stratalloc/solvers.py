"""Allocation solvers.

``lrna`` handles the lower-bounded variance minimisation by recursive
take-set growth, ``rna`` the upper-bounded companion, ``neyman`` the
unbounded closed form, and ``solve_min_cost`` the cost minimisation via
the change of variable implemented by ``to_lower`` / ``from_lower``.

Both recursions run in label-sorted vector space.  The value a stratum is
compared against when it enters the take set is the exact float that would
be assigned to it if it stayed out, so "entered" and "pinned to the bound"
agree bitwise with the verifier's view of the same point.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Literal

import math

import numpy as np

from .core import (
    Allocation,
    ClassicalProblem,
    LowerProblem,
    MinCostProblem,
    SolveTrace,
    StrataFrame,
    TraceStep,
    UpperProblem,
    _kkt_of_mask,
    cost,
)
from .errors import NonPositiveInput

__all__ = [
    "SolveOptions",
    "lrna",
    "rna",
    "neyman",
    "to_lower",
    "from_lower",
    "solve_min_cost",
]


@dataclass(frozen=True)
class SolveOptions:
    """Knobs shared by the iterative solvers.

    tol:
        Relative slack for bound comparisons, applied as
        ``lhs <= rhs * (1 + tol)``.  The default 0 keeps comparisons exact;
        ties still enter the take set.
    trace:
        Record one :class:`TraceStep` per round.
    round_mode:
        ``"ceil"`` attaches ``ceil(values)`` to the result for reporting.
        Exact values stay authoritative.
    duals:
        Attach per-stratum multipliers to the result where defined.
    """

    tol: float = 0.0
    trace: bool = False
    round_mode: Literal["none", "ceil"] = "none"
    duals: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.tol) and self.tol >= 0.0):
            raise NonPositiveInput(f"tol must be a nonnegative real, got {self.tol!r}")
        if self.round_mode not in ("none", "ceil"):
            raise ValueError(f"unknown round_mode {self.round_mode!r}")


_DEFAULT = SolveOptions()


def _leq(lhs: np.ndarray, rhs: np.ndarray, tol: float) -> np.ndarray:
    if tol == 0.0:
        return lhs <= rhs
    return lhs <= rhs * (1.0 + tol)


def lrna(
    problem: LowerProblem, options: SolveOptions | None = None
) -> tuple[Allocation, SolveTrace]:
    """Optimum of a :class:`LowerProblem` by recursive take-set growth.

    Starting from the empty take set, every round computes ``s(L)`` and
    absorbs all strata whose proportional value ``(A_h/sqrt(c_h)) s(L)``
    does not exceed their bound.  The recursion stops when nothing new
    enters (the remaining strata keep their proportional values) or when
    the take set is full, which happens exactly when the budget equals the
    bound spend.  At most ``H + 1`` rounds occur and the recorded s values
    never increase.

    Returns the allocation and its trace (empty unless ``options.trace``).
    When the final take set is proper, ``dual_lambda = 1 / s(L*)^2``; the
    budget-tight full-set case has no distinguished multiplier and reports
    none (use :func:`stratalloc.verify.kkt_multipliers` for a certificate).
    """
    opts = options or _DEFAULT
    frame = problem.frame
    work = problem.work
    Vt = problem.Vt
    take = np.zeros(frame.size, dtype=bool)
    steps: list[TraceStep] = []
    s = 0.0
    t = work.m
    while True:
        if take.all():
            if opts.trace:
                steps.append(
                    TraceStep(frame.labels_of_mask(take), None, frozenset())
                )
            break
        s = work.s_of_mask(Vt, take)
        t = work.share * s
        entering = ~take & _leq(t, work.m, opts.tol)
        if opts.trace:
            steps.append(
                TraceStep(
                    frame.labels_of_mask(take),
                    s,
                    frame.labels_of_mask(entering),
                )
            )
        if not entering.any():
            break
        take = take | entering

    z_sorted = np.where(take, work.m, t)
    case_two = bool(take.all())
    lam: float | None = None
    mu = None
    if not case_two:
        lam = 1.0 / (s * s)
        if opts.duals:
            _, mu_sorted = _kkt_of_mask(work, Vt, take, frame._sorted_labels)
            mu = frame.scatter(mu_sorted)

    values = frame.scatter(z_sorted)
    alloc = Allocation(
        labels=frame.labels,
        values=values,
        take_set=frame.labels_of_mask(take),
        objective=work.objective(z_sorted),
        dual_lambda=lam,
        dual_mu=mu,
        rounded=np.ceil(values) if opts.round_mode == "ceil" else None,
    )
    return alloc, SolveTrace(tuple(steps))


def rna(
    problem: UpperProblem, options: SolveOptions | None = None
) -> tuple[Allocation, SolveTrace]:
    """Optimum of an :class:`UpperProblem` by recursive take-set growth.

    The mirror image of :func:`lrna`: every round distributes the budget
    left after pinning the take set proportionally to ``A_h`` and absorbs
    the strata whose share reaches their cap.  Trace steps record the
    proportionality factor as the step value; it never decreases.
    """
    opts = options or _DEFAULT
    frame = problem.frame
    work = problem.work
    n = problem.n
    take = np.zeros(frame.size, dtype=bool)
    steps: list[TraceStep] = []
    t = work.M
    while True:
        if take.all():
            if opts.trace:
                steps.append(
                    TraceStep(frame.labels_of_mask(take), None, frozenset())
                )
            break
        share = work.share_of_mask(n, take)
        t = work.A * share
        entering = ~take & _leq(work.M, t, opts.tol)
        if opts.trace:
            steps.append(
                TraceStep(
                    frame.labels_of_mask(take),
                    share,
                    frame.labels_of_mask(entering),
                )
            )
        if not entering.any():
            break
        take = take | entering

    x_sorted = np.where(take, work.M, t)
    values = frame.scatter(x_sorted)
    alloc = Allocation(
        labels=frame.labels,
        values=values,
        take_set=frame.labels_of_mask(take),
        objective=work.objective(x_sorted),
        rounded=np.ceil(values) if opts.round_mode == "ceil" else None,
    )
    return alloc, SolveTrace(tuple(steps))


def neyman(problem: ClassicalProblem) -> Allocation:
    """Closed-form unbounded optimum ``x_h = A_h * n / sum_i A_i``.

    Computed as ``A_h * (n / sum_i A_i)``, the same expression the
    upper-bounded recursion evaluates on its first round, so loose enough
    caps reproduce this allocation bit for bit.
    """
    frame = problem.frame
    factor = problem.n / frame.canonical_sum(frame.A)
    values = frame.A * factor
    objective = frame.canonical_sum(frame.A * frame.A / values)
    return Allocation(
        labels=frame.labels,
        values=values,
        take_set=frozenset(),
        objective=objective,
    )


def to_lower(problem: MinCostProblem) -> LowerProblem:
    """Change of variable ``z_h = A_h^2 / (c_h x_h)``.

    Upper bounds map to lower bounds ``m_h = A_h^2 / (c_h M_h)`` and the
    variance target maps to the budget ``Vt = V + A0``.  Cost order is
    reversed, so minimising variance in z space minimises cost in x space.
    """
    frame = problem.frame
    mapped = StrataFrame(
        labels=frame.labels,
        A=frame.A,
        c=frame.c,
        lower=problem.lower_image,
        upper=frame.upper,
        N=frame.N,
        S=frame.S,
    )
    return LowerProblem(mapped, problem.target_budget)


def from_lower(problem: MinCostProblem, z: Allocation) -> Allocation:
    """Map a z-space allocation back to sample sizes ``x_h = A_h^2 / (c_h z_h)``.

    Take-set strata land exactly on their cap ``M_h``; the rest are clamped
    to the cap to absorb one-ulp overshoot from the reciprocal map.  The
    objective is the total cost including the fixed term ``c0``.
    """
    frame = problem.frame
    if z.labels != frame.labels:
        raise ValueError("allocation labels do not match the problem frame")
    x = np.minimum((frame.A * frame.A) / (frame.c * z.values), frame.upper)
    if z.take_set:
        mask_input = frame.sorted_mask(z.take_set)[frame._inverse]
        x[mask_input] = frame.upper[mask_input]
    return Allocation(
        labels=frame.labels,
        values=x,
        take_set=z.take_set,
        objective=cost(frame, problem.c0, x),
        rounded=np.ceil(x) if z.rounded is not None else None,
    )


def solve_min_cost(
    problem: MinCostProblem, options: SolveOptions | None = None
) -> tuple[Allocation, SolveTrace]:
    """Minimise cost under a variance target: transform, solve, map back."""
    opts = options or _DEFAULT
    inner = dataclasses.replace(opts, round_mode="none")
    z, trace = lrna(to_lower(problem), inner)
    alloc = from_lower(problem, z)
    if opts.round_mode == "ceil":
        alloc = dataclasses.replace(alloc, rounded=np.ceil(alloc.values))
    return alloc, trace
