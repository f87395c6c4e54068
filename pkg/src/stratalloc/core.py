"""Domain model for optimum allocation in stratified sampling.

A survey design is a table of strata.  Stratum h carries a positive weight
``A_h`` (for sampling without replacement, ``A_h = N_h * S_h``), a positive
unit cost ``c_h``, and optional box bounds on its allocation.  Two dual
problem families are built on top of that table:

* minimise total variance ``sum_h A_h^2 / x_h - A0`` subject to a budget,
  with per-stratum lower bounds (``LowerProblem``) or upper bounds
  (``UpperProblem``, integer-free form with ``c_h = 1``), and
* minimise total cost subject to a variance target with upper bounds
  (``MinCostProblem``), solved by a change of variable that lands in the
  lower-bounded family.

All reductions over strata are computed in label-sorted order, so results
are bit-for-bit independent of the row order of the input table.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal, Sequence

import math

import numpy as np

from .errors import (
    DuplicateLabel,
    EmptyFrame,
    FullTakeSet,
    Infeasible,
    MissingBound,
    NegativeMultiplier,
    NegativeParameter,
    NonPositiveAllocation,
    NonPositiveInput,
    NonPositiveParameter,
    UnknownLabel,
    UpperBoundExceedsSize,
    ZeroA,
)

__all__ = [
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
]

BoundRequirement = Literal["none", "lower", "upper"]


def _required_column(values, name: str, size: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (size,):
        raise ValueError(f"column {name!r} must have shape ({size},), got {arr.shape}")
    return arr


def _optional_column(values, name: str, size: int) -> np.ndarray | None:
    if values is None:
        return None
    # None entries inside a sequence become NaN, the per-cell missing marker.
    return _required_column(values, name, size)


def _freeze(arr: np.ndarray | None) -> None:
    if arr is not None:
        arr.flags.writeable = False


@dataclass(frozen=True, eq=False)
class StrataFrame:
    """Immutable table of strata.

    Parameters
    ----------
    labels:
        Distinct stratum names, one per row.
    A:
        Positive stratum weights (standard deviation scaled by size).
    c:
        Positive unit costs.
    lower, upper:
        Optional per-stratum allocation bounds ``m`` and ``M``.  A ``None``
        column or a NaN cell means "not provided"; provided cells must be
        positive, and ``upper <= N`` wherever both are present.
    N, S:
        Optional population sizes (positive) and unit deviations
        (nonnegative), kept for designs derived from population tables.
    """

    labels: tuple[str, ...]
    A: np.ndarray
    c: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    N: np.ndarray | None = None
    S: np.ndarray | None = None

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        if len(labels) == 0:
            raise EmptyFrame()
        if not all(isinstance(lab, str) and lab for lab in labels):
            raise ValueError("labels must be non-empty strings")
        object.__setattr__(self, "labels", labels)

        size = len(labels)
        object.__setattr__(self, "A", _required_column(self.A, "A", size))
        object.__setattr__(self, "c", _required_column(self.c, "c", size))
        for name in ("lower", "upper", "N", "S"):
            object.__setattr__(
                self, name, _optional_column(getattr(self, name), name, size)
            )

        label_arr = np.array(labels)
        order = np.argsort(label_arr, kind="stable")
        sorted_labels = label_arr[order]
        dup = np.nonzero(sorted_labels[1:] == sorted_labels[:-1])[0]
        if dup.size:
            raise DuplicateLabel(str(sorted_labels[dup[0] + 1]))
        inverse = np.empty(size, dtype=np.intp)
        inverse[order] = np.arange(size, dtype=np.intp)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_inverse", inverse)
        object.__setattr__(self, "_sorted_labels", sorted_labels)

        self._check_values()
        for arr in (self.A, self.c, self.lower, self.upper, self.N, self.S):
            _freeze(arr)

    def _check_values(self) -> None:
        self._check_positive(self.A, "A")
        self._check_positive(self.c, "c")
        for arr, name in ((self.lower, "m"), (self.upper, "M"), (self.N, "N")):
            if arr is not None:
                self._check_positive(arr, name, allow_nan=True)
        if self.S is not None:
            provided = ~np.isnan(self.S)
            bad = provided & ~(np.isfinite(self.S) & (self.S >= 0.0))
            if bad.any():
                i = int(np.argmax(bad))
                raise NegativeParameter(self.labels[i], "S", float(self.S[i]))
        if self.upper is not None and self.N is not None:
            both = ~np.isnan(self.upper) & ~np.isnan(self.N)
            bad = both & (self.upper > self.N)
            if bad.any():
                raise UpperBoundExceedsSize(self.labels[int(np.argmax(bad))])

    def _check_positive(
        self, arr: np.ndarray, name: str, allow_nan: bool = False
    ) -> None:
        ok = np.isfinite(arr) & (arr > 0.0)
        if allow_nan:
            ok |= np.isnan(arr)
        if not ok.all():
            i = int(np.argmax(~ok))
            raise NonPositiveParameter(self.labels[i], name, float(arr[i]))

    @property
    def size(self) -> int:
        return len(self.labels)

    @cached_property
    def label_positions(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def canonical_sum(self, values: np.ndarray) -> float:
        """Sum a per-stratum vector in label-sorted order.

        Every scalar reduction in the package funnels through this, which
        makes objectives, budgets, and feasibility checks independent of
        how the input rows happened to be ordered.
        """
        return float(np.sum(np.asarray(values, dtype=float)[self._order]))

    def sorted_mask(self, subset: Iterable[str]) -> np.ndarray:
        """Boolean mask over label-sorted positions for a set of labels."""
        mask = np.zeros(self.size, dtype=bool)
        positions = self.label_positions
        inverse = self._inverse
        for lab in subset:
            try:
                pos = positions[lab]
            except KeyError:
                raise UnknownLabel(str(lab)) from None
            mask[inverse[pos]] = True
        return mask

    def labels_of_mask(self, mask: np.ndarray) -> frozenset[str]:
        return frozenset(self._sorted_labels[mask].tolist())

    def scatter(self, sorted_values: np.ndarray) -> np.ndarray:
        """Map a label-sorted vector back to input row order."""
        out = np.empty(self.size, dtype=float)
        out[self._order] = sorted_values
        return out


def validate(frame: StrataFrame, bounds: BoundRequirement = "none") -> None:
    """Re-check frame invariants, requiring a fully populated bound column.

    ``bounds="lower"`` demands every ``m`` cell, ``"upper"`` every ``M``
    cell.  Raises the matching error from :mod:`stratalloc.errors`.
    """
    frame._check_values()
    if bounds == "none":
        return
    if bounds == "lower":
        arr, name = frame.lower, "m"
    elif bounds == "upper":
        arr, name = frame.upper, "M"
    else:
        raise ValueError(f"unknown bound requirement {bounds!r}")
    if arr is None:
        raise MissingBound(frame.labels[0], name)
    missing = np.isnan(arr)
    if missing.any():
        raise MissingBound(frame.labels[int(np.argmax(missing))], name)


def _aligned_positive(frame: StrataFrame, x, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (frame.size,):
        raise ValueError(f"{what} must have shape ({frame.size},), got {arr.shape}")
    ok = np.isfinite(arr) & (arr > 0.0)
    if not ok.all():
        i = int(np.argmax(~ok))
        raise NonPositiveAllocation(frame.labels[i], float(arr[i]))
    return arr


def variance(frame: StrataFrame, A0: float, x) -> float:
    """Total variance ``sum_h A_h^2 / x_h - A0`` of an allocation."""
    arr = _aligned_positive(frame, x, "allocation")
    return frame.canonical_sum(frame.A * frame.A / arr) - float(A0)


def cost(frame: StrataFrame, c0: float, x) -> float:
    """Total cost ``c0 + sum_h c_h x_h`` of an allocation.

    Unlike :func:`variance` this is defined for any finite allocation,
    zero included.
    """
    arr = np.asarray(x, dtype=float)
    if arr.shape != (frame.size,):
        raise ValueError(
            f"allocation must have shape ({frame.size},), got {arr.shape}"
        )
    if not np.isfinite(arr).all():
        i = int(np.argmax(~np.isfinite(arr)))
        raise NonPositiveAllocation(frame.labels[i], float(arr[i]))
    return float(c0) + frame.canonical_sum(frame.c * arr)


# ---------------------------------------------------------------------------
# sorted workspaces shared by solvers, verifiers, and oracles


class _LowerWork:
    """Label-sorted views for the lower-bounded family.

    The exact floating-point expressions here are load-bearing: solver,
    verifier, and oracles all evaluate ``s`` and candidate points through
    this object, so agreement between them is bitwise, not approximate.
    """

    __slots__ = ("A", "c", "m", "rc", "asc", "share", "cm", "A2")

    def __init__(self, A: np.ndarray, c: np.ndarray, m: np.ndarray) -> None:
        self.A = A
        self.c = c
        self.m = m
        self.rc = np.sqrt(c)
        self.asc = A * self.rc  # A_h * sqrt(c_h)
        self.share = A / self.rc  # A_h / sqrt(c_h)
        self.cm = c * m
        self.A2 = A * A

    def s_of_mask(self, Vt: float, take: np.ndarray) -> float:
        """s(L) = (Vt - sum_{h in L} c_h m_h) / sum_{h not in L} A_h sqrt(c_h)."""
        spent = self.cm[take].sum()
        rest = self.asc[~take].sum()
        return float((Vt - spent) / rest)

    def candidate_of_mask(self, Vt: float, take: np.ndarray) -> np.ndarray:
        if take.all():
            return self.m.copy()
        s = self.s_of_mask(Vt, take)
        return np.where(take, self.m, self.share * s)

    def objective(self, z_sorted: np.ndarray) -> float:
        return float(np.sum(self.A2 / z_sorted))


class _UpperWork:
    """Label-sorted views for the upper-bounded, unit-cost family."""

    __slots__ = ("A", "M", "A2")

    def __init__(self, A: np.ndarray, M: np.ndarray) -> None:
        self.A = A
        self.M = M
        self.A2 = A * A

    def share_of_mask(self, n: float, take: np.ndarray) -> float:
        spent = self.M[take].sum()
        rest = self.A[~take].sum()
        return float((n - spent) / rest)

    def candidate_of_mask(self, n: float, take: np.ndarray) -> np.ndarray:
        if take.all():
            return self.M.copy()
        return np.where(take, self.M, self.A * self.share_of_mask(n, take))

    def objective(self, x_sorted: np.ndarray) -> float:
        return float(np.sum(self.A2 / x_sorted))


def _kkt_of_mask(
    work: _LowerWork, Vt: float, take: np.ndarray, sorted_labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Multipliers certifying a candidate point, in label-sorted order.

    Proper take set: ``lambda = 1 / s(L)^2`` and on the set
    ``mu_h = lambda c_h - A_h^2 / m_h^2`` (zero off it).  Full take set:
    the smallest valid ``lambda = max_h A_h^2 / (m_h^2 c_h)``.  At an exact
    boundary tie the real-arithmetic ``mu_h`` is zero; rounding can land a
    hair below, so negatives within 1e-12 of the term scale snap to zero
    and anything worse raises :class:`NegativeMultiplier`.
    """
    m2 = work.m * work.m
    grad = work.A2 / m2
    if take.all():
        lam = float(np.max(grad / work.c))
    else:
        s = work.s_of_mask(Vt, take)
        lam = 1.0 / (s * s)
    lam_c = lam * work.c
    mu = np.where(take, lam_c - grad, 0.0)
    neg = mu < 0.0
    if neg.any():
        scale = np.maximum(lam_c, grad)
        mu[neg & (mu >= -1e-12 * scale)] = 0.0
        still = mu < 0.0
        if still.any():
            i = int(np.argmax(still))
            raise NegativeMultiplier(str(sorted_labels[i]), float(mu[i]))
    return lam, mu


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True, eq=False)
class LowerProblem:
    """Minimise ``sum_h A_h^2 / z_h`` over ``z >= m`` with ``sum_h c_h z_h = Vt``.

    Feasible iff ``Vt >= sum_h c_h m_h``; equality pins ``z = m``.
    """

    frame: StrataFrame
    Vt: float

    def __post_init__(self) -> None:
        validate(self.frame, "lower")
        Vt = float(self.Vt)
        if not math.isfinite(Vt):
            raise NonPositiveInput(f"budget Vt must be finite, got {Vt!r}")
        object.__setattr__(self, "Vt", Vt)
        if Vt < self.spend_floor:
            raise Infeasible(
                f"budget Vt={Vt!r} is below the bound spend {self.spend_floor!r}"
            )

    @cached_property
    def work(self) -> _LowerWork:
        frame = self.frame
        order = frame._order
        return _LowerWork(frame.A[order], frame.c[order], frame.lower[order])

    @cached_property
    def spend_floor(self) -> float:
        """Canonical ``sum_h c_h m_h``, the budget consumed at ``z = m``."""
        return float(np.sum(self.work.cm))


@dataclass(frozen=True, eq=False)
class MinCostProblem:
    """Minimise ``c0 + sum_h c_h x_h`` s.t. variance ``= V`` and ``x <= M``.

    The substitution ``z_h = A_h^2 / (c_h x_h)`` turns this into a
    :class:`LowerProblem` with bounds ``m_h = A_h^2 / (c_h M_h)`` and budget
    ``Vt = V + A0``; see :func:`stratalloc.solvers.to_lower`.  ``c0`` only
    shifts reported costs.
    """

    frame: StrataFrame
    V: float
    A0: float = 0.0
    c0: float = 0.0

    def __post_init__(self) -> None:
        validate(self.frame, "upper")
        for name in ("V", "A0", "c0"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise NonPositiveInput(f"{name} must be finite, got {val!r}")
            object.__setattr__(self, name, val)
        if self.V < 0.0:
            raise NonPositiveInput(f"variance target V must be nonnegative, got {self.V!r}")
        # Feasibility is decided in the transformed space with the exact
        # floats the solver will see, so a feasible construction can never
        # turn infeasible after the change of variable.
        floor = self.frame.canonical_sum(self.frame.c * self.lower_image)
        if floor < self.A0:
            raise NonPositiveInput(
                "A0 exceeds the variance term at the fully bounded allocation"
            )
        if self.target_budget < floor:
            raise Infeasible(
                f"variance target V={self.V!r} is unreachable under the upper "
                f"bounds (needs V >= {floor - self.A0!r})"
            )

    @cached_property
    def lower_image(self) -> np.ndarray:
        """Transformed lower bounds ``m_h = A_h^2 / (c_h M_h)``, input order."""
        frame = self.frame
        return (frame.A * frame.A) / (frame.c * frame.upper)

    @property
    def target_budget(self) -> float:
        """Transformed budget ``Vt = V + A0``."""
        return self.V + self.A0


@dataclass(frozen=True, eq=False)
class ClassicalProblem:
    """Unbounded minimum-variance allocation of a fixed total ``n``."""

    frame: StrataFrame
    n: float

    def __post_init__(self) -> None:
        validate(self.frame, "none")
        n = float(self.n)
        if not (math.isfinite(n) and n > 0.0):
            raise NonPositiveInput(f"sample size n must be positive, got {n!r}")
        object.__setattr__(self, "n", n)


@dataclass(frozen=True, eq=False)
class UpperProblem:
    """Minimise variance over ``0 < x <= M`` with ``sum_h x_h = n``."""

    frame: StrataFrame
    n: float

    def __post_init__(self) -> None:
        validate(self.frame, "upper")
        n = float(self.n)
        if not math.isfinite(n) or n <= 0.0:
            raise Infeasible(f"sample size n must be positive, got {n!r}")
        object.__setattr__(self, "n", n)
        if n > self.capacity:
            raise Infeasible(
                f"sample size n={n!r} exceeds the total capacity {self.capacity!r}"
            )

    @cached_property
    def work(self) -> _UpperWork:
        frame = self.frame
        order = frame._order
        return _UpperWork(frame.A[order], frame.upper[order])

    @cached_property
    def capacity(self) -> float:
        """Canonical ``sum_h M_h``."""
        return float(np.sum(self.work.M))


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True, eq=False)
class Allocation:
    """A positive per-stratum allocation with its objective value.

    ``values`` is aligned with ``labels`` in input row order.  ``take_set``
    names the strata pinned to their bound.  ``dual_lambda`` and ``dual_mu``
    are present only when a solver was asked for certificates, ``rounded``
    only when post-hoc ceiling was requested.
    """

    labels: tuple[str, ...]
    values: np.ndarray
    take_set: frozenset[str]
    objective: float
    dual_lambda: float | None = None
    dual_mu: np.ndarray | None = None
    rounded: np.ndarray | None = None

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        values = np.array(self.values, dtype=float)
        if values.shape != (len(labels),):
            raise ValueError("values must align with labels")
        ok = np.isfinite(values) & (values > 0.0)
        if not ok.all():
            i = int(np.argmax(~ok))
            raise NonPositiveAllocation(labels[i], float(values[i]))
        _freeze(values)
        object.__setattr__(self, "values", values)
        take = frozenset(str(lab) for lab in self.take_set)
        if not take.issubset(labels):
            raise UnknownLabel(next(iter(take.difference(labels))))
        object.__setattr__(self, "take_set", take)
        object.__setattr__(self, "objective", float(self.objective))
        for name in ("dual_mu", "rounded"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                if arr.shape != (len(labels),):
                    raise ValueError(f"{name} must align with labels")
                _freeze(arr)
                object.__setattr__(self, name, arr)

    def value_map(self) -> dict[str, float]:
        return {lab: float(v) for lab, v in zip(self.labels, self.values)}


@dataclass(frozen=True)
class TraceStep:
    """One round of the recursion: the take set seen, the s value computed
    for it (``None`` once the take set is full), and the strata added."""

    take_set: frozenset[str]
    s_value: float | None
    added: frozenset[str]


@dataclass(frozen=True)
class SolveTrace:
    steps: tuple[TraceStep, ...] = ()

    @property
    def iterations(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __len__(self) -> int:
        return len(self.steps)


# ---------------------------------------------------------------------------
# point evaluations on lower problems


def s_value(problem: LowerProblem, L: Iterable[str]) -> float:
    """Evaluate ``s(L)`` for a proper subset ``L`` of the strata.

    Raises :class:`FullTakeSet` when ``L`` covers every stratum, where the
    ratio degenerates to 0/0.
    """
    mask = problem.frame.sorted_mask(L)
    if mask.all():
        raise FullTakeSet()
    return problem.work.s_of_mask(problem.Vt, mask)


def candidate(problem: LowerProblem, L: Iterable[str]) -> np.ndarray:
    """Candidate point ``z^L``: ``m_h`` on ``L``, ``(A_h/sqrt(c_h)) s(L)`` off it.

    For the full set the candidate is the bound vector itself.  Values are
    returned in input row order and satisfy ``sum_h c_h z_h = Vt`` exactly
    in real arithmetic whenever ``L`` is proper.
    """
    mask = problem.frame.sorted_mask(L)
    return problem.frame.scatter(problem.work.candidate_of_mask(problem.Vt, mask))


# ---------------------------------------------------------------------------
# population helpers


def _population_arrays(N, S, labels: Sequence[str] | None):
    N = np.asarray(N, dtype=float)
    S = np.asarray(S, dtype=float)
    if N.shape != S.shape or N.ndim != 1:
        raise ValueError("N and S must be one-dimensional and aligned")
    if labels is not None and len(labels) != N.shape[0]:
        raise ValueError("labels must align with N and S")

    def name(i: int) -> str:
        return labels[i] if labels is not None else str(i)

    if not (np.isfinite(N) & (N > 0.0)).all():
        i = int(np.argmax(~(np.isfinite(N) & (N > 0.0))))
        raise NonPositiveInput(f"stratum {name(i)!r}: N must be positive, got {N[i]!r}")
    if not (np.isfinite(S) & (S >= 0.0)).all():
        i = int(np.argmax(~(np.isfinite(S) & (S >= 0.0))))
        raise NonPositiveInput(
            f"stratum {name(i)!r}: S must be nonnegative, got {S[i]!r}"
        )
    return N, S, name


def srswor_params(N, S, labels: Sequence[str] | None = None):
    """Weights for sampling without replacement: ``A_h = N_h S_h``,
    ``A0 = sum_h N_h S_h^2``.

    Strata with ``S_h = 0`` carry no variance and must be removed before
    building a problem; they raise :class:`ZeroA`.
    """
    N, S, name = _population_arrays(N, S, labels)
    A = N * S
    zero = A == 0.0
    if zero.any():
        raise ZeroA(name(int(np.argmax(zero))))
    A0 = float(np.sum(N * S * S))
    return A, A0


def lower_bounds_from_precision(N, S, R, labels: Sequence[str] | None = None) -> np.ndarray:
    """Smallest allocations meeting per-stratum precision targets.

    For estimator variance cap ``R_h > 0`` under sampling without
    replacement the bound is ``m_h = N_h^2 S_h^2 / (R_h + N_h S_h^2)``.
    """
    N, S, name = _population_arrays(N, S, labels)
    R = np.asarray(R, dtype=float)
    if R.shape != N.shape:
        raise ValueError("R must align with N and S")
    bad = ~(np.isfinite(R) & (R > 0.0))
    if bad.any():
        i = int(np.argmax(bad))
        raise NonPositiveInput(
            f"stratum {name(i)!r}: precision cap R must be positive, got {R[i]!r}"
        )
    NS = N * S
    return (NS * NS) / (R + N * S * S)
