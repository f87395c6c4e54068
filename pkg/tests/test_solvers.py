"""Solver behaviour: recursions, closed forms, and the cost transform."""

from __future__ import annotations

import numpy as np
import pytest

from stratalloc import (
    ClassicalProblem,
    LowerProblem,
    MinCostProblem,
    SolveOptions,
    StrataFrame,
    UpperProblem,
    from_lower,
    lrna,
    neyman,
    rna,
    solve_min_cost,
    to_lower,
    variance,
)
from stratalloc.errors import Infeasible, NonPositiveInput

from conftest import (
    random_lower_problem,
    random_min_cost_problem,
    random_upper_problem,
)


def lower_problem(A, c, m, Vt) -> LowerProblem:
    labels = tuple(chr(ord("a") + i) for i in range(len(A)))
    return LowerProblem(
        frame=StrataFrame(labels=labels, A=np.array(A, float), c=np.array(c, float), lower=np.array(m, float)),
        Vt=Vt,
    )


class TestLrna:
    def test_symmetric_interior(self):
        alloc, _ = lrna(lower_problem([1, 1], [1, 1], [1, 1], 4.0))
        assert alloc.values.tolist() == [2.0, 2.0]
        assert alloc.take_set == frozenset()
        assert alloc.dual_lambda == 0.25

    def test_boundary_tie_enters_take_set(self):
        alloc, trace = lrna(
            lower_problem([1, 1], [1, 1], [3, 1], 6.0),
            SolveOptions(trace=True),
        )
        assert alloc.values.tolist() == [3.0, 3.0]
        assert alloc.take_set == frozenset({"a"})
        steps = list(trace)
        assert steps[0].s_value == 3.0
        assert steps[0].added == frozenset({"a"})
        assert steps[1].s_value == 3.0
        assert steps[1].added == frozenset()

    def test_budget_equals_floor_reaches_full_set(self):
        alloc, trace = lrna(
            lower_problem([1, 1], [2, 1], [1, 2], 4.0),
            SolveOptions(trace=True),
        )
        assert alloc.values.tolist() == [1.0, 2.0]
        assert alloc.take_set == frozenset({"a", "b"})
        steps = list(trace)
        assert [step.added for step in steps] == [
            frozenset({"b"}),
            frozenset({"a"}),
            frozenset(),
        ]
        assert steps[-1].s_value is None

    def test_single_stratum(self):
        alloc, _ = lrna(lower_problem([2], [4], [1], 16.0))
        assert alloc.values.tolist() == [4.0]
        assert alloc.take_set == frozenset()

    def test_infeasible_budget_raises(self):
        with pytest.raises(Infeasible):
            lower_problem([1, 1], [1, 1], [3, 1], 3.0)

    def test_budget_spent_and_bounds_respected(self):
        rng = np.random.default_rng(101)
        for _ in range(300):
            problem = random_lower_problem(rng)
            alloc, _ = lrna(problem)
            frame = problem.frame
            spent = float(np.sum(frame.c * alloc.values))
            assert abs(spent - problem.Vt) <= 1e-10 * problem.Vt
            assert (alloc.values >= frame.lower).all()
            for i, lab in enumerate(frame.labels):
                if lab in alloc.take_set:
                    assert alloc.values[i] == frame.lower[i]

    def test_trace_shape(self):
        rng = np.random.default_rng(103)
        for _ in range(200):
            problem = random_lower_problem(rng)
            _, trace = lrna(problem, SolveOptions(trace=True))
            steps = list(trace)
            assert 1 <= len(steps) <= problem.frame.size + 1
            seen: set[str] = set()
            s_values = []
            for idx, step in enumerate(steps):
                assert step.take_set == frozenset(seen)
                assert not (step.added & frozenset(seen))
                if step.added == frozenset():
                    assert idx == len(steps) - 1
                if step.s_value is not None:
                    s_values.append(step.s_value)
                seen |= step.added
            assert all(a >= b for a, b in zip(s_values, s_values[1:]))

    def test_trace_off_by_default(self):
        _, trace = lrna(lower_problem([1, 1], [1, 1], [1, 1], 4.0))
        assert len(trace) == 0

    def test_duals_on_request(self):
        problem = lower_problem([1, 1], [1, 1], [3, 1], 6.0)
        bare, _ = lrna(problem)
        assert bare.dual_mu is None
        certified, _ = lrna(problem, SolveOptions(duals=True))
        assert certified.dual_lambda == pytest.approx(1.0 / 9.0)
        assert certified.dual_mu.tolist() == [0.0, 0.0]

    def test_full_take_set_has_no_inline_duals(self):
        problem = lower_problem([1, 1], [2, 1], [1, 2], 4.0)
        alloc, _ = lrna(problem, SolveOptions(duals=True))
        assert alloc.take_set == frozenset({"a", "b"})
        assert alloc.dual_lambda is None
        assert alloc.dual_mu is None

    def test_row_order_invariance(self):
        rng = np.random.default_rng(107)
        for _ in range(50):
            problem = random_lower_problem(rng)
            frame = problem.frame
            perm = rng.permutation(frame.size)
            shuffled = LowerProblem(
                frame=StrataFrame(
                    labels=tuple(frame.labels[i] for i in perm),
                    A=frame.A[perm],
                    c=frame.c[perm],
                    lower=frame.lower[perm],
                ),
                Vt=problem.Vt,
            )
            a, _ = lrna(problem)
            b, _ = lrna(shuffled)
            assert a.value_map() == b.value_map()
            assert a.objective == b.objective
            assert a.take_set == b.take_set

    def test_round_mode_ceil(self):
        alloc, _ = lrna(
            lower_problem([1, 1], [1, 1], [1, 1], 5.0),
            SolveOptions(round_mode="ceil"),
        )
        assert alloc.values.tolist() == [2.5, 2.5]
        assert alloc.rounded.tolist() == [3.0, 3.0]

    def test_near_neyman_shape_when_bounds_vanish(self):
        rng = np.random.default_rng(109)
        size = 8
        A = 10.0 ** rng.uniform(-1, 1, size)
        c = 10.0 ** rng.uniform(-1, 1, size)
        problem = LowerProblem(
            frame=StrataFrame(
                labels=tuple(f"s{i}" for i in range(size)),
                A=A,
                c=c,
                lower=np.full(size, 1e-12),
            ),
            Vt=100.0,
        )
        alloc, _ = lrna(problem)
        assert alloc.take_set == frozenset()
        share = A / np.sqrt(c)
        expected = share * (alloc.values[0] / share[0])
        assert np.allclose(alloc.values, expected, rtol=1e-12)

    def test_options_validation(self):
        with pytest.raises(NonPositiveInput):
            SolveOptions(tol=-1e-9)
        with pytest.raises(ValueError):
            SolveOptions(round_mode="floor")


class TestRna:
    def test_symmetric_within_bounds(self):
        problem = UpperProblem(
            frame=StrataFrame(labels=("a", "b"), A=[1.0, 1.0], c=[1.0, 1.0], upper=[5.0, 5.0]),
            n=4.0,
        )
        alloc, _ = rna(problem)
        assert alloc.values.tolist() == [2.0, 2.0]
        assert alloc.take_set == frozenset()

    def test_one_stratum_capped(self):
        problem = UpperProblem(
            frame=StrataFrame(labels=("a", "b"), A=[3.0, 1.0], c=[1.0, 1.0], upper=[2.0, 10.0]),
            n=4.0,
        )
        alloc, _ = rna(problem)
        assert alloc.values.tolist() == [2.0, 2.0]
        assert alloc.take_set == frozenset({"a"})

    def test_budget_equals_capacity(self):
        problem = UpperProblem(
            frame=StrataFrame(labels=("a", "b"), A=[1.0, 2.0], c=[1.0, 1.0], upper=[1.0, 3.0]),
            n=4.0,
        )
        alloc, _ = rna(problem)
        assert alloc.values.tolist() == [1.0, 3.0]
        assert alloc.take_set == frozenset({"a", "b"})

    def test_infeasible_sample_sizes(self):
        frame = StrataFrame(labels=("a",), A=[1.0], c=[1.0], upper=[2.0])
        with pytest.raises(Infeasible):
            UpperProblem(frame=frame, n=2.5)
        with pytest.raises(Infeasible):
            UpperProblem(frame=frame, n=0.0)

    def test_mirror_properties(self):
        rng = np.random.default_rng(211)
        for _ in range(300):
            problem = random_upper_problem(rng)
            alloc, trace = rna(problem, SolveOptions(trace=True))
            frame = problem.frame
            assert abs(float(np.sum(alloc.values)) - problem.n) <= 1e-9 * problem.n
            assert (alloc.values <= frame.upper).all()
            for i, lab in enumerate(frame.labels):
                if lab in alloc.take_set:
                    assert alloc.values[i] == frame.upper[i]
            shares = [s.s_value for s in trace if s.s_value is not None]
            assert all(a <= b for a, b in zip(shares, shares[1:]))
            assert len(trace) <= frame.size + 1


class TestNeyman:
    def test_symmetric(self):
        problem = ClassicalProblem(
            frame=StrataFrame(labels=("a", "b"), A=[1.0, 1.0], c=[1.0, 1.0]), n=10.0
        )
        assert neyman(problem).values.tolist() == [5.0, 5.0]

    def test_proportional_to_weight(self):
        problem = ClassicalProblem(
            frame=StrataFrame(labels=("a", "b"), A=[1.0, 3.0], c=[1.0, 1.0]), n=8.0
        )
        alloc = neyman(problem)
        assert alloc.values.tolist() == [2.0, 6.0]
        assert alloc.take_set == frozenset()

    def test_single_stratum_takes_all(self):
        problem = ClassicalProblem(
            frame=StrataFrame(labels=("a",), A=[2.0], c=[1.0]), n=7.0
        )
        assert neyman(problem).values.tolist() == [7.0]

    def test_rejects_nonpositive_total(self):
        frame = StrataFrame(labels=("a",), A=[2.0], c=[1.0])
        with pytest.raises(NonPositiveInput):
            ClassicalProblem(frame=frame, n=0.0)

    def test_rna_with_slack_caps_is_bitwise_neyman(self):
        rng = np.random.default_rng(223)
        for _ in range(100):
            size = int(rng.integers(1, 10))
            A = 10.0 ** rng.uniform(-2, 2, size)
            n = float(10.0 ** rng.uniform(0, 2))
            labels = tuple(f"s{i}" for i in range(size))
            free = neyman(
                ClassicalProblem(frame=StrataFrame(labels=labels, A=A, c=np.ones(size)), n=n)
            )
            capped, _ = rna(
                UpperProblem(
                    frame=StrataFrame(
                        labels=labels, A=A, c=np.ones(size), upper=np.full(size, 1e9 * n)
                    ),
                    n=n,
                )
            )
            assert capped.take_set == frozenset()
            assert free.values.tolist() == capped.values.tolist()


class TestCostTransform:
    def test_to_lower_symmetric(self):
        problem = MinCostProblem(
            frame=StrataFrame(labels=("a", "b"), A=[1.0, 1.0], c=[1.0, 1.0], upper=[1.0, 1.0]),
            V=4.0,
        )
        mapped = to_lower(problem)
        assert mapped.frame.lower.tolist() == [1.0, 1.0]
        assert mapped.Vt == 4.0

    def test_to_lower_mixed(self):
        problem = MinCostProblem(
            frame=StrataFrame(labels=("a", "b"), A=[2.0, 1.0], c=[1.0, 4.0], upper=[2.0, 1.0]),
            V=4.0,
            A0=1.0,
        )
        mapped = to_lower(problem)
        assert mapped.frame.lower.tolist() == [2.0, 0.25]
        assert mapped.Vt == 5.0

    def test_to_lower_boundary_identity(self):
        problem = MinCostProblem(
            frame=StrataFrame(labels=("a", "b"), A=[2.0, 1.0], c=[1.0, 4.0], upper=[2.0, 1.0]),
            V=2.0,
            A0=1.0,
        )
        mapped = to_lower(problem)
        assert mapped.Vt == mapped.spend_floor

    def test_from_lower_symmetric(self):
        problem = MinCostProblem(
            frame=StrataFrame(labels=("a", "b"), A=[1.0, 1.0], c=[1.0, 1.0], upper=[1.0, 1.0]),
            V=4.0,
        )
        z, _ = lrna(to_lower(problem))
        x = from_lower(problem, z)
        assert x.values.tolist() == [0.5, 0.5]
        assert variance(problem.frame, problem.A0, x.values) == 4.0

    def test_from_lower_take_set_lands_on_cap(self):
        rng = np.random.default_rng(307)
        for _ in range(200):
            problem = random_min_cost_problem(rng)
            z, _ = lrna(to_lower(problem))
            x = from_lower(problem, z)
            frame = problem.frame
            assert (x.values <= frame.upper).all()
            for i, lab in enumerate(frame.labels):
                if lab in x.take_set:
                    assert x.values[i] == frame.upper[i]

    def test_solve_min_cost_symmetric(self):
        problem = MinCostProblem(
            frame=StrataFrame(labels=("a", "b"), A=[1.0, 1.0], c=[1.0, 1.0], upper=[1.0, 1.0]),
            V=4.0,
        )
        alloc, _ = solve_min_cost(problem)
        assert alloc.values.tolist() == [0.5, 0.5]
        assert alloc.objective == 1.0

    def test_solve_min_cost_mixed(self):
        problem = MinCostProblem(
            frame=StrataFrame(labels=("a", "b"), A=[2.0, 1.0], c=[1.0, 4.0], upper=[2.0, 1.0]),
            V=4.0,
            A0=1.0,
        )
        alloc, _ = solve_min_cost(problem)
        assert alloc.values.tolist() == [1.6, 0.4]
        assert alloc.take_set == frozenset()
        assert alloc.objective == 3.2

    def test_solve_min_cost_trivial_boundary(self):
        problem = MinCostProblem(
            frame=StrataFrame(labels=("a", "b"), A=[2.0, 1.0], c=[1.0, 4.0], upper=[2.0, 1.0]),
            V=2.0,
            A0=1.0,
        )
        alloc, _ = solve_min_cost(problem)
        assert alloc.values.tolist() == [2.0, 1.0]
        assert alloc.take_set == frozenset({"a", "b"})

    def test_solve_min_cost_infeasible(self):
        frame = StrataFrame(labels=("a",), A=[2.0], c=[1.0], upper=[2.0])
        with pytest.raises(Infeasible):
            MinCostProblem(frame=frame, V=1.0)  # needs at least A^2/M = 2

    def test_overhead_reported_not_optimized(self):
        base = StrataFrame(labels=("a", "b"), A=[2.0, 1.0], c=[1.0, 4.0], upper=[2.0, 1.0])
        plain, _ = solve_min_cost(MinCostProblem(frame=base, V=4.0, A0=1.0))
        loaded, _ = solve_min_cost(MinCostProblem(frame=base, V=4.0, A0=1.0, c0=10.0))
        assert loaded.values.tolist() == plain.values.tolist()
        assert loaded.objective == plain.objective + 10.0

    def test_round_trip_variance(self):
        rng = np.random.default_rng(311)
        for _ in range(200):
            problem = random_min_cost_problem(rng)
            alloc, _ = solve_min_cost(problem)
            reached = variance(problem.frame, problem.A0, alloc.values)
            assert abs(reached - problem.V) <= 1e-9 * (problem.V + problem.A0)

    def test_ceil_rounds_up_and_respects_variance_target(self):
        rng = np.random.default_rng(313)
        for _ in range(100):
            problem = random_min_cost_problem(rng)
            alloc, _ = solve_min_cost(problem, SolveOptions(round_mode="ceil"))
            assert alloc.rounded is not None
            assert (alloc.rounded == np.ceil(alloc.values)).all()
            assert (alloc.rounded >= alloc.values).all()
            reached = variance(problem.frame, problem.A0, alloc.rounded)
            assert reached <= problem.V * (1.0 + 1e-12)
