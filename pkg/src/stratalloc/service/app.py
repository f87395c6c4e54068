"""HTTP facade over the solvers, verifiers, and oracles.

The service is stateless.  Optional report sections (duals, trace,
rounded values, comparison) are omitted from the JSON rather than sent as
null; within the trace, the terminal full-take-set step simply has no
``s_value`` key.  Domain errors map to HTTP 400 (invalid input) and 409
(infeasible problem) with an ``{"error": {"code", "message"}}`` body.
"""

from __future__ import annotations

import dataclasses
import re

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import tables
from ..core import (
    ClassicalProblem,
    LowerProblem,
    MinCostProblem,
    SolveTrace,
    StrataFrame,
    UpperProblem,
    variance,
)
from ..errors import AllocationError, Infeasible, ParseError
from ..solvers import SolveOptions, lrna, neyman, rna, solve_min_cost
from ..verify import (
    check_optimal,
    check_optimal_classical,
    check_optimal_min_cost,
    check_optimal_upper,
    oracle_grid,
    oracle_min_cost,
    oracle_subsets,
    oracle_upper,
)
from .schemas import (
    ComparisonOut,
    OracleReport,
    OracleRequest,
    ProblemOut,
    SolveReport,
    SolveRequest,
    StratumIn,
    TraceStepOut,
    VerdictReport,
    VerifyRequest,
)

_SNAKE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def _error_code(exc: Exception) -> str:
    return _SNAKE.sub("_", type(exc).__name__).lower()


def _rows(strata: list[StratumIn]) -> list[dict]:
    rows = []
    for item in strata:
        row: dict = {"stratum": item.stratum, "c": item.c}
        for name in ("A", "m", "M", "N", "S"):
            value = getattr(item, name)
            if value is not None:
                row[name] = value
        rows.append(row)
    return rows


def _build_problem(req) -> tuple[object, str, ProblemOut]:
    frame, derived_a0 = tables.build_frame(_rows(req.strata), req.from_srswor)
    kind = req.kind
    if kind == "lower":
        if req.vt is None:
            raise ParseError("kind 'lower' requires the scalar vt")
        problem = LowerProblem(frame, req.vt)
        params = {"vt": problem.Vt}
    elif kind == "mincost":
        if req.v is None:
            raise ParseError("kind 'mincost' requires the scalar v")
        a0 = derived_a0 if derived_a0 is not None else req.a0
        problem = MinCostProblem(frame, req.v, a0, req.c0)
        params = {"v": problem.V, "a0": problem.A0, "c0": problem.c0}
    elif kind == "classical":
        if req.n is None:
            raise ParseError("kind 'classical' requires the scalar n")
        problem = ClassicalProblem(frame, req.n)
        params = {"n": problem.n}
    elif kind == "upper":
        if req.n is None:
            raise ParseError("kind 'upper' requires the scalar n")
        problem = UpperProblem(frame, req.n)
        params = {"n": problem.n}
    else:  # pragma: no cover - schema restricts kinds
        raise ParseError(f"unknown kind {kind!r}")
    return problem, kind, ProblemOut(kind=kind, parameters=params)


def _value_map(frame: StrataFrame, values: np.ndarray) -> dict[str, float]:
    return {label: float(v) for label, v in zip(frame.labels, values)}


def _trace_out(trace: SolveTrace) -> list[TraceStepOut]:
    return [
        TraceStepOut(
            take_set=sorted(step.take_set),
            s_value=step.s_value,
            added=sorted(step.added),
        )
        for step in trace
    ]


def _aligned_values(frame: StrataFrame, values: dict[str, float]) -> np.ndarray:
    missing = [lab for lab in frame.labels if lab not in values]
    if missing:
        raise ParseError(f"candidate misses strata: {missing[:5]}")
    extra = sorted(set(values) - set(frame.labels))
    if extra:
        raise ParseError(f"candidate names unknown strata: {extra[:5]}")
    return np.array([values[lab] for lab in frame.labels], dtype=float)


def create_app() -> FastAPI:
    app = FastAPI(title="stratalloc", version="0.1.0")

    @app.exception_handler(Infeasible)
    async def _infeasible(request: Request, exc: Infeasible) -> JSONResponse:
        return JSONResponse(
            status_code=409,
            content={"error": {"code": "infeasible", "message": str(exc)}},
        )

    @app.exception_handler(AllocationError)
    async def _domain(request: Request, exc: AllocationError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={"error": {"code": _error_code(exc), "message": str(exc)}},
        )

    @app.exception_handler(RequestValidationError)
    async def _schema(request: Request, exc: RequestValidationError) -> JSONResponse:
        # The default handler echoes offending inputs, which may not be
        # JSON-encodable (NaN); report locations and messages only.
        detail = "; ".join(
            ".".join(str(part) for part in err.get("loc", ())) + ": " + err["msg"]
            for err in exc.errors()
        )
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "invalid_input", "message": detail}},
        )

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok"}

    @app.post(
        "/solve", response_model=SolveReport, response_model_exclude_none=True
    )
    async def solve(req: SolveRequest) -> SolveReport:
        problem, kind, echo = _build_problem(req)
        opts = SolveOptions(
            tol=req.options.tol,
            trace=req.options.trace,
            round_mode=req.options.round,
            duals=req.options.duals,
        )
        trace = SolveTrace(())
        extra_variance = None
        if kind == "lower":
            alloc, trace = lrna(problem, opts)
            objective_kind = "variance"
        elif kind == "mincost":
            alloc, trace = solve_min_cost(problem, opts)
            objective_kind = "cost"
            extra_variance = variance(problem.frame, problem.A0, alloc.values)
        elif kind == "classical":
            alloc = neyman(problem)
            objective_kind = "variance"
            if opts.round_mode == "ceil":
                alloc = dataclasses.replace(alloc, rounded=np.ceil(alloc.values))
        else:
            alloc, trace = rna(problem, opts)
            objective_kind = "variance"
        frame = problem.frame
        return SolveReport(
            problem=echo,
            values=_value_map(frame, alloc.values),
            take_set=sorted(alloc.take_set),
            objective=alloc.objective,
            objective_kind=objective_kind,
            variance=extra_variance,
            dual_lambda=alloc.dual_lambda,
            dual_mu=_value_map(frame, alloc.dual_mu)
            if alloc.dual_mu is not None
            else None,
            rounded=_value_map(frame, alloc.rounded)
            if alloc.rounded is not None
            else None,
            trace=_trace_out(trace) if req.options.trace else None,
        )

    @app.post(
        "/verify", response_model=VerdictReport, response_model_exclude_none=True
    )
    async def verify(req: VerifyRequest) -> VerdictReport:
        problem, kind, _ = _build_problem(req)
        x = _aligned_values(problem.frame, req.values)
        if kind == "lower":
            verdict = check_optimal(problem, x, req.tol)
        elif kind == "mincost":
            verdict = check_optimal_min_cost(problem, x, req.tol)
        elif kind == "classical":
            verdict = check_optimal_classical(problem, x, req.tol)
        else:
            verdict = check_optimal_upper(problem, x, req.tol)
        return VerdictReport(
            accepted=verdict.accepted,
            reason=verdict.reason.value,
            label=verdict.label,
            value=verdict.value,
            case=verdict.case,
            take_set=sorted(verdict.take_set)
            if verdict.take_set is not None
            else None,
        )

    @app.post(
        "/oracle", response_model=OracleReport, response_model_exclude_none=True
    )
    async def oracle(req: OracleRequest) -> OracleReport:
        problem, kind, echo = _build_problem(req)
        frame = problem.frame
        take_set = None
        objective = None
        if req.method == "grid":
            if kind != "lower":
                raise ParseError("grid search supports kind 'lower' only")
            values = oracle_grid(problem, req.resolution)
            objective = float(
                frame.canonical_sum(frame.A * frame.A / values)
            )
        else:
            if kind == "lower":
                best = oracle_subsets(problem)
            elif kind == "mincost":
                best = oracle_min_cost(problem)
            else:
                best = oracle_upper(problem)
            values = best.values
            take_set = sorted(best.take_set)
            objective = best.objective

        comparison = None
        if req.compare:
            if kind == "lower":
                solved, _ = lrna(problem)
            elif kind == "mincost":
                solved, _ = solve_min_cost(problem)
            else:
                solved, _ = rna(problem)
            deviation = np.abs(values - solved.values) / np.maximum(
                np.abs(values), np.abs(solved.values)
            )
            comparison = ComparisonOut(
                values=_value_map(frame, solved.values),
                max_rel_deviation=float(np.max(deviation)),
            )
        return OracleReport(
            problem=echo,
            method=req.method,
            values=_value_map(frame, values),
            take_set=take_set,
            objective=objective,
            comparison=comparison,
        )

    return app


app = create_app()
