"""Shared fixtures, random instance generators, and the acceptance summary.

Tests marked ``@pytest.mark.acceptance(n, title)`` get one PASS/FAIL line
each in the terminal summary so the gate can be read at a glance.
"""

from __future__ import annotations

import numpy as np
import pytest

from stratalloc import LowerProblem, MinCostProblem, StrataFrame, UpperProblem

# one seed for the whole suite; printed in the summary for replay
SUITE_SEED = 20260819


def labels_for(size: int) -> tuple[str, ...]:
    return tuple(f"s{i:03d}" for i in range(size))


def log_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    # parameters spread over [1e-3, 1e3]
    return 10.0 ** rng.uniform(-3.0, 3.0, size)


def random_lower_problem(
    rng: np.random.Generator, size: int | None = None
) -> LowerProblem:
    """Budget strictly above the spend floor; boundary cases are built
    separately with exact arithmetic (see the case II tests)."""
    if size is None:
        size = int(rng.integers(1, 13))
    frame = StrataFrame(
        labels=labels_for(size),
        A=log_uniform(rng, size),
        c=log_uniform(rng, size),
        lower=log_uniform(rng, size),
    )
    floor = float(np.sum(frame.c * frame.lower))
    u = float(rng.uniform(0.0, 10.0))
    while u == 0.0:  # pragma: no cover - measure zero
        u = float(rng.uniform(0.0, 10.0))
    return LowerProblem(frame=frame, Vt=floor * (1.0 + u))


def random_upper_problem(
    rng: np.random.Generator, size: int | None = None
) -> UpperProblem:
    if size is None:
        size = int(rng.integers(1, 13))
    frame = StrataFrame(
        labels=labels_for(size),
        A=log_uniform(rng, size),
        upper=log_uniform(rng, size),
        c=np.ones(size),
    )
    n = float(np.sum(frame.upper)) * float(rng.uniform(0.05, 0.95))
    return UpperProblem(frame=frame, n=n)


def random_min_cost_problem(
    rng: np.random.Generator, size: int | None = None
) -> MinCostProblem:
    if size is None:
        size = int(rng.integers(1, 13))
    A = log_uniform(rng, size)
    M = log_uniform(rng, size)
    frame = StrataFrame(
        labels=labels_for(size),
        A=A,
        c=log_uniform(rng, size),
        upper=M,
    )
    floor_variance = float(np.sum(A * A / M))
    A0 = floor_variance * float(rng.uniform(0.0, 0.9))
    V = (floor_variance - A0) * (1.0 + float(rng.uniform(0.01, 10.0)))
    return MinCostProblem(
        frame=frame, V=V, A0=A0, c0=float(rng.uniform(0.0, 10.0))
    )


def dyadic_boundary_problem(
    rng: np.random.Generator, size: int | None = None
) -> LowerProblem:
    """An exact budget-equals-floor instance.

    Every parameter is a power of two with a small exponent: A = 2^a,
    c = 4^k (so sqrt(c) = 2^k is exact), m = 2^(j + a - k) which makes
    the bound ratio m * sqrt(c) / A equal to 2^j.  Then every c_h m_h,
    every partial sum, and the budget itself are exact floats, and the
    recursion absorbs at least the largest ratio class per round, so the
    exact-arithmetic case II behaviour carries over to floats verbatim.
    """
    if size is None:
        size = int(rng.integers(1, 13))
    j = rng.integers(-3, 4, size)
    a = rng.integers(-3, 4, size)
    k = rng.integers(-2, 3, size)
    frame = StrataFrame(
        labels=labels_for(size),
        A=2.0 ** a,
        c=4.0 ** k,
        lower=2.0 ** (j + a - k),
    )
    floor = float(np.sum(frame.c * frame.lower))
    return LowerProblem(frame=frame, Vt=floor)


# --- acceptance reporting ---------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when == "teardown":
        return
    marker_info = getattr(report, "_acceptance", None)
    if marker_info is None:
        return
    number, title = marker_info
    if report.failed:
        _ACCEPTANCE[number] = ("FAIL", title)
    elif report.skipped:
        _ACCEPTANCE[number] = ("SKIP", title)
    elif report.when == "call" and number not in _ACCEPTANCE:
        _ACCEPTANCE[number] = ("PASS", title)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        report._acceptance = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    terminalreporter.write_line(f"suite seed: {SUITE_SEED}")
    for number in sorted(_ACCEPTANCE):
        status, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} [{status}] {title}")
