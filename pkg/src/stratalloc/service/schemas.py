"""Request and response models for the HTTP service."""

from __future__ import annotations

import math
from typing import Annotated, Literal

from pydantic import AfterValidator, BaseModel, ConfigDict, Field


def _finite(value: float) -> float:
    if not math.isfinite(value):
        raise ValueError("must be a finite number")
    return value


FiniteFloat = Annotated[float, AfterValidator(_finite)]

SolveKind = Literal["mincost", "lower", "classical", "upper"]
OracleKind = Literal["lower", "mincost", "upper"]


class StratumIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stratum: str = Field(min_length=1)
    A: FiniteFloat | None = None
    c: FiniteFloat = 1.0
    m: FiniteFloat | None = None
    M: FiniteFloat | None = None
    N: FiniteFloat | None = None
    S: FiniteFloat | None = None


class OptionsIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tol: FiniteFloat = Field(default=0.0, ge=0.0)
    trace: bool = False
    round: Literal["none", "ceil"] = "none"
    duals: bool = False


class _ProblemRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    strata: list[StratumIn] = Field(min_length=1)
    v: FiniteFloat | None = None
    a0: FiniteFloat = 0.0
    c0: FiniteFloat = 0.0
    vt: FiniteFloat | None = None
    n: FiniteFloat | None = None
    from_srswor: bool = False


class SolveRequest(_ProblemRequest):
    kind: SolveKind
    options: OptionsIn = Field(default_factory=OptionsIn)


class VerifyRequest(_ProblemRequest):
    kind: SolveKind
    values: dict[str, FiniteFloat]
    tol: FiniteFloat = Field(default=1e-9, ge=0.0)


class OracleRequest(_ProblemRequest):
    kind: OracleKind
    method: Literal["subsets", "grid"] = "subsets"
    resolution: int = Field(default=1_000_000, ge=2)
    compare: bool = False


class ProblemOut(BaseModel):
    kind: str
    parameters: dict[str, float]


class TraceStepOut(BaseModel):
    take_set: list[str]
    s_value: float | None = None
    added: list[str]


class SolveReport(BaseModel):
    problem: ProblemOut
    values: dict[str, float]
    take_set: list[str]
    objective: float
    objective_kind: Literal["cost", "variance"]
    variance: float | None = None
    dual_lambda: float | None = None
    dual_mu: dict[str, float] | None = None
    rounded: dict[str, float] | None = None
    trace: list[TraceStepOut] | None = None


class VerdictReport(BaseModel):
    accepted: bool
    reason: str
    label: str | None = None
    value: float | None = None
    case: str | None = None
    take_set: list[str] | None = None


class ComparisonOut(BaseModel):
    values: dict[str, float]
    max_rel_deviation: float


class OracleReport(BaseModel):
    problem: ProblemOut
    method: str
    values: dict[str, float]
    take_set: list[str] | None = None
    objective: float | None = None
    comparison: ComparisonOut | None = None
