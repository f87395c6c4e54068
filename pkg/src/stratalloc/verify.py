"""Optimality certificates and brute-force oracles.

``check_optimal`` decides whether a point solves a lower-bounded problem by
reconstructing the take set it implies and testing the characterising
inequalities; it never trusts a solver.  The oracles re-derive optima the
slow way (subset enumeration, grid search) and exist so that fast-solver
results can be cross-examined by code that shares no logic with them
beyond the candidate-point formula itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from .core import (
    Allocation,
    ClassicalProblem,
    LowerProblem,
    MinCostProblem,
    UpperProblem,
    _kkt_of_mask,
)
from .errors import (
    Infeasible,
    InvalidPair,
    NonPositiveInput,
    TooLarge,
    UnsupportedDimension,
)
from .solvers import from_lower, neyman, to_lower

__all__ = [
    "SUBSET_CAP",
    "VerdictReason",
    "Verdict",
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
]

SUBSET_CAP = 20
_CHUNK = 1 << 16


class VerdictReason(str, Enum):
    OPTIMAL = "optimal"
    NOT_CANDIDATE_FORM = "not_candidate_form"
    TAKE_SET_CONDITION_FAILS = "take_set_condition_fails"
    OFF_SET_CONDITION_FAILS = "off_set_condition_fails"
    EQUALITY_RESIDUAL = "equality_residual"
    BOUND_VIOLATED = "bound_violated"
    CASE_II_BUDGET_MISMATCH = "case_ii_budget_mismatch"


@dataclass(frozen=True)
class Verdict:
    """Outcome of a certificate check.

    ``label`` points at the stratum that broke a per-stratum condition,
    ``value`` carries the offending quantity (residual, s value, or
    allocation), and ``case`` distinguishes the proper-take-set optimum
    ("I") from the budget-tight full-set optimum ("II") when accepted.
    """

    accepted: bool
    reason: VerdictReason
    label: str | None = None
    value: float | None = None
    case: str | None = None
    take_set: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.accepted != (self.reason is VerdictReason.OPTIMAL):
            raise ValueError("accepted must match reason")


def _aligned(problem, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (problem.frame.size,):
        raise ValueError(
            f"candidate must have shape ({problem.frame.size},), got {arr.shape}"
        )
    return arr


def _certify_mask(
    problem: LowerProblem, z_sorted: np.ndarray, take: np.ndarray, tol: float
) -> Verdict:
    """Test the characterising conditions for one specific take set."""
    frame = problem.frame
    work = problem.work
    labels = frame._sorted_labels
    m = work.m

    if take.all():
        gap = problem.Vt - problem.spend_floor
        if abs(gap) <= tol * problem.Vt:
            return Verdict(
                True,
                VerdictReason.OPTIMAL,
                case="II",
                take_set=frame.labels_of_mask(take),
            )
        return Verdict(
            False, VerdictReason.CASE_II_BUDGET_MISMATCH, value=float(gap)
        )

    # members must sit on their bound
    member_off = take & ~(np.abs(z_sorted - m) <= tol * m)
    if member_off.any():
        i = int(np.argmax(member_off))
        return Verdict(
            False,
            VerdictReason.NOT_CANDIDATE_FORM,
            label=str(labels[i]),
            value=float(z_sorted[i] - m[i]),
        )

    s = work.s_of_mask(problem.Vt, take)
    t = work.share * s
    off = ~take

    scale = np.maximum(np.abs(t), z_sorted)
    form_bad = off & ~(np.abs(z_sorted - t) <= tol * scale)
    if form_bad.any():
        i = int(np.argmax(form_bad))
        return Verdict(
            False,
            VerdictReason.NOT_CANDIDATE_FORM,
            label=str(labels[i]),
            value=float(z_sorted[i] - t[i]),
        )

    ratio = work.rc * m / work.A
    member_bad = take & ~(s <= ratio * (1.0 + tol))
    if member_bad.any():
        i = int(np.argmax(member_bad))
        return Verdict(
            False,
            VerdictReason.TAKE_SET_CONDITION_FAILS,
            label=str(labels[i]),
            value=float(s),
        )

    off_bad = off & ~(t > m * (1.0 - tol))
    if off_bad.any():
        i = int(np.argmax(off_bad))
        return Verdict(
            False,
            VerdictReason.OFF_SET_CONDITION_FAILS,
            label=str(labels[i]),
            value=float(t[i]),
        )

    return Verdict(
        True, VerdictReason.OPTIMAL, case="I", take_set=frame.labels_of_mask(take)
    )


def _prefix_scan(
    problem: LowerProblem, z_sorted: np.ndarray, tol: float
) -> Verdict | None:
    """Retry certification over take sets ordered by bound tightness.

    Boundary ties make the proximity-inferred take set ambiguous; the
    optimal set is always a prefix of the strata sorted by decreasing
    ``sqrt(c_h) m_h / A_h``, so scan those.  Gates are evaluated with a few
    ulps of extra slack and only prune; acceptance always comes from the
    full condition check.
    """
    work = problem.work
    size = z_sorted.shape[0]
    ratio = work.rc * work.m / work.A
    order = np.argsort(-ratio, kind="stable")
    ratio_o = ratio[order]
    cm_pref = np.concatenate(([0.0], np.cumsum(work.cm[order])))
    asc_suff = np.concatenate((np.cumsum(work.asc[order][::-1])[::-1], [0.0]))

    with np.errstate(divide="ignore", invalid="ignore"):
        s_all = (problem.Vt - cm_pref[:size]) / asc_suff[:size]
    pad = 1.0 + 1e-12
    member_ok = np.ones(size, dtype=bool)
    member_ok[1:] = s_all[1:] <= ratio_o[:-1] * (1.0 + tol) * pad
    off_ok = s_all > ratio_o * (1.0 - tol) / pad

    take = np.zeros(size, dtype=bool)
    for k in range(size + 1):
        if k > 0:
            take[order[k - 1]] = True
        if k < size and not (member_ok[k] and off_ok[k]):
            continue
        verdict = _certify_mask(problem, z_sorted, take, tol)
        if verdict.accepted:
            return verdict
    return None


def check_optimal(problem: LowerProblem, z, tol: float = 1e-9) -> Verdict:
    """Certify a point as the optimum of a lower-bounded problem.

    The take set is inferred from proximity to the bounds
    (``|z_h - m_h| <= tol * m_h``) and the characterising conditions are
    evaluated for it; if that fails and ties might be to blame, every
    bound-tightness prefix is retried before rejecting.  All comparisons
    use relative tolerance ``tol``.
    """
    frame = problem.frame
    work = problem.work
    z_in = _aligned(problem, z)
    z_sorted = z_in[frame._order]
    m = work.m

    viol = ~(z_sorted >= m * (1.0 - tol))
    if viol.any():
        i = int(np.argmax(viol))
        return Verdict(
            False,
            VerdictReason.BOUND_VIOLATED,
            label=str(frame._sorted_labels[i]),
            value=float(z_sorted[i]),
        )

    budget = float(np.sum(work.c * z_sorted))
    residual = budget - problem.Vt
    if not (abs(residual) <= tol * abs(problem.Vt)):
        return Verdict(
            False, VerdictReason.EQUALITY_RESIDUAL, value=float(residual)
        )

    prox = np.abs(z_sorted - m) <= tol * m
    verdict = _certify_mask(problem, z_sorted, prox, tol)
    if verdict.accepted:
        return verdict
    retry = _prefix_scan(problem, z_sorted, tol)
    if retry is not None:
        return retry
    return verdict


def kkt_multipliers(
    problem: LowerProblem, z, L: Iterable[str], tol: float = 1e-9
) -> tuple[float, np.ndarray]:
    """Multipliers for a candidate point with take set ``L``.

    ``z`` is assumed to be the candidate point of ``L``; the multipliers
    depend only on the set.  Returns ``(lambda, mu)`` with ``mu`` aligned
    to input row order, raising :class:`NegativeMultiplier` when the set
    cannot certify.  Stationarity of the returned pair at ``z`` can be
    measured with :func:`stationarity_residual`.
    """
    del z, tol
    frame = problem.frame
    take = frame.sorted_mask(L)
    lam, mu_sorted = _kkt_of_mask(problem.work, problem.Vt, take, frame._sorted_labels)
    return lam, frame.scatter(mu_sorted)


def stationarity_residual(
    problem: LowerProblem, z, lam: float, mu
) -> float:
    """Largest relative violation of ``-A_h^2/z_h^2 + lambda c_h - mu_h = 0``."""
    frame = problem.frame
    work = problem.work
    z_sorted = _aligned(problem, z)[frame._order]
    mu_sorted = _aligned(problem, mu)[frame._order]
    grad = work.A2 / (z_sorted * z_sorted)
    expr = -grad + lam * work.c - mu_sorted
    scale = np.maximum(np.maximum(grad, np.abs(lam) * work.c), 1e-300)
    return float(np.max(np.abs(expr) / scale))


# ---------------------------------------------------------------------------
# oracles


def _mask_chunks(size: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    total = 1 << size
    bits = np.arange(size, dtype=np.uint64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
        yield idx, ((idx[:, None] >> bits) & 1).astype(bool)


def _best_row(
    obj: np.ndarray, pop: np.ndarray, idx: np.ndarray
) -> tuple[float, int, int] | None:
    pick = int(np.lexsort((idx, -pop, obj))[0])
    if not np.isfinite(obj[pick]):
        return None
    return float(obj[pick]), -int(pop[pick]), int(idx[pick])


def _enumerate_lower(problem: LowerProblem) -> np.ndarray:
    """Feasible-candidate enumeration; returns the winning take mask."""
    size = problem.frame.size
    if size > SUBSET_CAP:
        raise TooLarge(size, SUBSET_CAP)
    work = problem.work
    Vt = problem.Vt
    best: tuple[float, int, int] | None = None
    for idx, masks in _mask_chunks(size):
        cm_in = np.where(masks, work.cm, 0.0).sum(axis=1)
        asc_out = np.where(masks, 0.0, work.asc).sum(axis=1)
        full = asc_out == 0.0
        s = np.zeros(idx.shape[0])
        np.divide(Vt - cm_in, asc_out, out=s, where=~full)
        Z = np.where(masks, work.m, work.share * s[:, None])
        feasible = (Z >= work.m).all(axis=1)
        feasible &= ~full | (cm_in == Vt)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            obj = (work.A2 / Z).sum(axis=1)
        obj[~feasible] = np.inf
        row = _best_row(obj, masks.sum(axis=1), idx)
        if row is not None and (best is None or row < best):
            best = row
    if best is None:
        raise Infeasible("no feasible candidate point exists")
    mask_int = best[2]
    return ((mask_int >> np.arange(size, dtype=np.uint64)) & 1).astype(bool)


def oracle_subsets(problem: LowerProblem) -> Allocation:
    """Exact optimum of a small lower-bounded problem by trying every
    take set.

    A take set is admissible when its candidate point is feasible; the
    full set only when the budget equals the bound spend exactly.  Ties on
    the objective go to the larger set.  Capped at ``SUBSET_CAP`` strata.
    """
    frame = problem.frame
    take = _enumerate_lower(problem)
    z_sorted = problem.work.candidate_of_mask(problem.Vt, take)
    return Allocation(
        labels=frame.labels,
        values=frame.scatter(z_sorted),
        take_set=frame.labels_of_mask(take),
        objective=problem.work.objective(z_sorted),
    )


def _enumerate_upper(problem: UpperProblem) -> np.ndarray:
    size = problem.frame.size
    if size > SUBSET_CAP:
        raise TooLarge(size, SUBSET_CAP)
    work = problem.work
    n = problem.n
    best: tuple[float, int, int] | None = None
    for idx, masks in _mask_chunks(size):
        spent = np.where(masks, work.M, 0.0).sum(axis=1)
        rest = np.where(masks, 0.0, work.A).sum(axis=1)
        full = rest == 0.0
        share = np.zeros(idx.shape[0])
        np.divide(n - spent, rest, out=share, where=~full)
        X = np.where(masks, work.M, work.A * share[:, None])
        feasible = (X <= work.M).all(axis=1)
        feasible &= np.where(full, spent == n, share > 0.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            obj = (work.A2 / X).sum(axis=1)
        obj[~feasible] = np.inf
        row = _best_row(obj, masks.sum(axis=1), idx)
        if row is not None and (best is None or row < best):
            best = row
    if best is None:
        raise Infeasible("no feasible candidate point exists")
    mask_int = best[2]
    return ((mask_int >> np.arange(size, dtype=np.uint64)) & 1).astype(bool)


def oracle_upper(problem: UpperProblem) -> Allocation:
    """Exact optimum of a small upper-bounded problem by enumeration."""
    frame = problem.frame
    take = _enumerate_upper(problem)
    x_sorted = problem.work.candidate_of_mask(problem.n, take)
    return Allocation(
        labels=frame.labels,
        values=frame.scatter(x_sorted),
        take_set=frame.labels_of_mask(take),
        objective=problem.work.objective(x_sorted),
    )


def oracle_min_cost(problem: MinCostProblem) -> Allocation:
    """Exact optimum of a small cost-minimisation problem.

    Enumerates take sets in the transformed space, maps each candidate
    back to sample sizes, and compares total costs directly, so it agrees
    with :func:`check_optimal` on the winner but measures it in the
    original units.
    """
    low = to_lower(problem)
    frame = problem.frame
    size = frame.size
    if size > SUBSET_CAP:
        raise TooLarge(size, SUBSET_CAP)
    work = low.work
    order = frame._order
    M_sorted = frame.upper[order]
    Vt = low.Vt
    best: tuple[float, int, int] | None = None
    for idx, masks in _mask_chunks(size):
        cm_in = np.where(masks, work.cm, 0.0).sum(axis=1)
        asc_out = np.where(masks, 0.0, work.asc).sum(axis=1)
        full = asc_out == 0.0
        s = np.zeros(idx.shape[0])
        np.divide(Vt - cm_in, asc_out, out=s, where=~full)
        Z = np.where(masks, work.m, work.share * s[:, None])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            X = np.where(masks, M_sorted, work.A2 / (work.c * Z))
        feasible = (Z > 0.0).all(axis=1) & (X <= M_sorted).all(axis=1)
        feasible &= ~full | (cm_in == Vt)
        spend = (work.c * X).sum(axis=1)
        spend[~feasible] = np.inf
        row = _best_row(spend, masks.sum(axis=1), idx)
        if row is not None and (best is None or row < best):
            best = row
    if best is None:
        raise Infeasible("no feasible candidate point exists")
    take = ((best[2] >> np.arange(size, dtype=np.uint64)) & 1).astype(bool)
    z_sorted = work.candidate_of_mask(Vt, take)
    z_alloc = Allocation(
        labels=frame.labels,
        values=frame.scatter(z_sorted),
        take_set=frame.labels_of_mask(take),
        objective=work.objective(z_sorted),
    )
    return from_lower(problem, z_alloc)


def check_optimal_upper(problem: UpperProblem, x, tol: float = 1e-9) -> Verdict:
    """Certify a point for the upper-bounded problem.

    The point must be feasible, spend the whole sample size, and have
    candidate form (capped strata at their bound, one proportional share
    for the rest).  Optimality is then settled against exhaustive
    enumeration by objective value, so when near-degenerate strata make
    several cap labelings indistinguishable any of them is accepted.
    """
    frame = problem.frame
    work = problem.work
    x_sorted = _aligned(problem, x)[frame._order]
    labels = frame._sorted_labels

    bad = ~(x_sorted > 0.0) | ~(x_sorted <= work.M * (1.0 + tol))
    if bad.any():
        i = int(np.argmax(bad))
        return Verdict(
            False,
            VerdictReason.BOUND_VIOLATED,
            label=str(labels[i]),
            value=float(x_sorted[i]),
        )
    residual = float(np.sum(x_sorted)) - problem.n
    if not (abs(residual) <= tol * problem.n):
        return Verdict(False, VerdictReason.EQUALITY_RESIDUAL, value=residual)

    take = np.abs(x_sorted - work.M) <= tol * work.M
    rest = float(np.sum(np.where(take, 0.0, work.A)))
    share = 0.0
    if rest > 0.0:
        spent = float(np.sum(np.where(take, work.M, 0.0)))
        share = (problem.n - spent) / rest
        proposed = np.where(take, work.M, work.A * share)
        scale = np.maximum(np.abs(x_sorted), np.abs(proposed))
        mismatch = ~take & ~(np.abs(x_sorted - proposed) <= tol * scale)
        if mismatch.any():
            i = int(np.argmax(mismatch))
            return Verdict(
                False,
                VerdictReason.NOT_CANDIDATE_FORM,
                label=str(labels[i]),
                value=float(x_sorted[i]),
            )

    best = oracle_upper(problem)
    objective = work.objective(x_sorted)
    if objective <= best.objective * (1.0 + tol):
        return Verdict(
            True, VerdictReason.OPTIMAL, take_set=frame.labels_of_mask(take)
        )
    # a materially worse candidate keeps some stratum capped that its
    # proportional share does not justify
    violating = take & (work.A * share < work.M * (1.0 - tol))
    if violating.any():
        i = int(np.argmax(violating))
        return Verdict(
            False,
            VerdictReason.TAKE_SET_CONDITION_FAILS,
            label=str(labels[i]),
            value=float(work.A[i] * share),
        )
    return Verdict(
        False,
        VerdictReason.TAKE_SET_CONDITION_FAILS,
        value=float(objective - best.objective),
    )


def check_optimal_min_cost(
    problem: MinCostProblem, x, tol: float = 1e-9
) -> Verdict:
    """Certify sample sizes for the cost problem through the transform."""
    frame = problem.frame
    x_in = _aligned(problem, x)
    x_sorted = x_in[frame._order]
    labels = frame._sorted_labels
    M_sorted = frame.upper[frame._order]
    bad = ~(x_sorted > 0.0) | ~(x_sorted <= M_sorted * (1.0 + tol))
    if bad.any():
        i = int(np.argmax(bad))
        return Verdict(
            False,
            VerdictReason.BOUND_VIOLATED,
            label=str(labels[i]),
            value=float(x_sorted[i]),
        )
    z = (frame.A * frame.A) / (frame.c * x_in)
    return check_optimal(to_lower(problem), z, tol)


def check_optimal_classical(
    problem: ClassicalProblem, x, tol: float = 1e-9
) -> Verdict:
    """Certify a point against the closed-form unbounded optimum."""
    frame = problem.frame
    x_in = _aligned(problem, x)
    labels = frame._sorted_labels
    x_sorted = x_in[frame._order]
    bad = ~(x_sorted > 0.0)
    if bad.any():
        i = int(np.argmax(bad))
        return Verdict(
            False,
            VerdictReason.BOUND_VIOLATED,
            label=str(labels[i]),
            value=float(x_sorted[i]),
        )
    best_sorted = neyman(problem).values[frame._order]
    scale = np.maximum(best_sorted, x_sorted)
    mismatch = ~(np.abs(x_sorted - best_sorted) <= tol * scale)
    if mismatch.any():
        i = int(np.argmax(mismatch))
        return Verdict(
            False,
            VerdictReason.NOT_CANDIDATE_FORM,
            label=str(labels[i]),
            value=float(x_sorted[i] - best_sorted[i]),
        )
    return Verdict(True, VerdictReason.OPTIMAL, take_set=frozenset())


def oracle_grid(problem: LowerProblem, resolution: int = 1_000_000) -> np.ndarray:
    """Grid-search optimum for two or three strata.

    The budget equality eliminates the last coordinate; the rest scan
    their feasible intervals on a uniform grid.  Returns values in input
    row order.  Accuracy is limited by the grid pitch, roughly
    ``(interval length) / (resolution - 1)`` per free coordinate.
    """
    size = problem.frame.size
    if size not in (2, 3):
        raise UnsupportedDimension(size)
    resolution = int(resolution)
    if resolution < 2:
        raise NonPositiveInput(f"resolution must be at least 2, got {resolution}")
    work = problem.work
    Vt = problem.Vt
    m = work.m
    c = work.c
    A2 = work.A2

    if size == 2:
        hi = (Vt - work.cm[1]) / c[0]
        z1 = np.linspace(m[0], hi, resolution)
        z2 = np.maximum((Vt - c[0] * z1) / c[1], m[1])
        obj = A2[0] / z1 + A2[1] / z2
        i = int(np.argmin(obj))
        return problem.frame.scatter(np.array([z1[i], z2[i]]))

    hi1 = (Vt - work.cm[1] - work.cm[2]) / c[0]
    z1_grid = np.linspace(m[0], hi1, resolution)
    best_obj = np.inf
    best = None
    for z1 in z1_grid:
        rem = Vt - c[0] * z1
        hi2 = (rem - work.cm[2]) / c[1]
        if hi2 < m[1]:
            continue
        z2 = np.linspace(m[1], hi2, resolution)
        z3 = np.maximum((rem - c[1] * z2) / c[2], m[2])
        obj = A2[0] / z1 + A2[1] / z2 + A2[2] / z3
        j = int(np.argmin(obj))
        if obj[j] < best_obj:
            best_obj = float(obj[j])
            best = np.array([z1, z2[j], z3[j]])
    if best is None:
        raise Infeasible("grid found no feasible point")
    return problem.frame.scatter(best)


def check_lemma_s_mono(
    problem: LowerProblem, A: Iterable[str], B: Iterable[str]
) -> bool:
    """Test the s-monotonicity equivalence on a nested pair of take sets.

    For ``A ⊆ B ⊊ H`` the claim is: ``s(A) >= s(B)`` exactly when
    ``s(A) * sum_{B∖A} A_h sqrt(c_h) <= sum_{B∖A} c_h m_h``.  Returns
    whether the two sides agree; raises :class:`InvalidPair` when the
    sets are not nested or ``B`` covers everything.
    """
    frame = problem.frame
    work = problem.work
    mask_a = frame.sorted_mask(A)
    mask_b = frame.sorted_mask(B)
    if (mask_a & ~mask_b).any():
        raise InvalidPair("first set must be contained in the second")
    if mask_b.all():
        raise InvalidPair("second set must be a proper subset of the strata")
    s_a = work.s_of_mask(problem.Vt, mask_a)
    s_b = work.s_of_mask(problem.Vt, mask_b)
    gained = mask_b & ~mask_a
    lhs = s_a >= s_b
    rhs = s_a * work.asc[gained].sum() <= work.cm[gained].sum()
    return bool(lhs) == bool(rhs)
