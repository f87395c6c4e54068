"""Parsing of strata tables and candidate allocations.

Two on-disk forms are accepted.  CSV: a header drawn from
``stratum,A,c,m,M,N,S`` (the stratum column is mandatory), UTF-8, "." as
the decimal mark, empty cells meaning "not provided".  JSON: an object
with a ``strata`` list of row objects using the same keys, plus optional
problem scalars (``v``, ``a0``, ``c0``, ``vt``, ``n``) at the top level.
Non-finite numbers are rejected everywhere.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from .core import StrataFrame, srswor_params
from .errors import ParseError

COLUMNS = ("stratum", "A", "c", "m", "M", "N", "S")
SCALARS = ("v", "a0", "c0", "vt", "n")

_TOKEN_CHARS = frozenset("0123456789+-.eE")


@dataclass
class TableData:
    rows: list[dict]
    scalars: dict[str, float] = field(default_factory=dict)


def _number(token: str, where: str) -> float:
    if not token or (set(token) - _TOKEN_CHARS):
        raise ParseError(f"{where}: not a number: {token!r}")
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{where}: not a number: {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"{where}: non-finite numbers are not allowed: {token!r}")
    return value


def parse_csv(text: str) -> TableData:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [cell.strip() for cell in next(reader)]
    except StopIteration:
        raise ParseError("empty table") from None
    unknown = set(header) - set(COLUMNS)
    if unknown:
        raise ParseError(f"unknown columns: {sorted(unknown)}")
    if "stratum" not in header:
        raise ParseError("header must include a 'stratum' column")
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header")
    rows: list[dict] = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells or all(not cell.strip() for cell in cells):
            continue
        if len(cells) != len(header):
            raise ParseError(
                f"line {lineno}: expected {len(header)} cells, got {len(cells)}"
            )
        row: dict = {}
        for name, cell in zip(header, cells):
            cell = cell.strip()
            if name == "stratum":
                if not cell:
                    raise ParseError(f"line {lineno}: empty stratum label")
                row["stratum"] = cell
            elif cell:
                row[name] = _number(cell, f"line {lineno}, column {name}")
        rows.append(row)
    if not rows:
        raise ParseError("table has no strata")
    return TableData(rows=rows)


def _reject_constant(name: str) -> float:
    raise ParseError(f"non-finite JSON value {name!r} is not allowed")


def _json_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ParseError(f"{where}: non-finite numbers are not allowed")
    return float(value)


def parse_json(text: str) -> TableData:
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    if "strata" not in doc:
        raise ParseError("missing 'strata' list")
    raw = doc["strata"]
    if not isinstance(raw, list) or not raw:
        raise ParseError("'strata' must be a non-empty list")
    rows: list[dict] = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ParseError(f"strata[{i}]: expected an object")
        unknown = set(entry) - set(COLUMNS)
        if unknown:
            raise ParseError(f"strata[{i}]: unknown keys: {sorted(unknown)}")
        label = entry.get("stratum")
        if not isinstance(label, str) or not label:
            raise ParseError(f"strata[{i}]: 'stratum' must be a non-empty string")
        row: dict = {"stratum": label}
        for name in COLUMNS[1:]:
            if name in entry:
                row[name] = _json_number(entry[name], f"strata[{i}].{name}")
        rows.append(row)
    scalars: dict[str, float] = {}
    for key, value in doc.items():
        if key == "strata":
            continue
        if key not in SCALARS:
            raise ParseError(f"unknown top-level key {key!r}")
        scalars[key] = _json_number(value, key)
    return TableData(rows=rows, scalars=scalars)


def parse_table(text: str, fmt: str) -> TableData:
    if fmt == "json":
        return parse_json(text)
    return parse_csv(text)


def build_frame(
    rows: list[dict], from_srswor: bool = False
) -> tuple[StrataFrame, float | None]:
    """Assemble a frame from parsed rows.

    With ``from_srswor`` the weights are derived from the population
    columns (``A_h = N_h S_h``) and the derived variance offset
    ``A0 = sum_h N_h S_h^2`` is returned alongside.
    """
    labels = [row["stratum"] for row in rows]

    def column(name: str) -> list | None:
        values = [row.get(name) for row in rows]
        if all(v is None for v in values):
            return None
        return values

    c_col = [row.get("c") for row in rows]
    c_col = [1.0 if v is None else v for v in c_col]
    lower = column("m")
    upper = column("M")
    N = column("N")
    S = column("S")

    derived_a0: float | None = None
    if from_srswor:
        if column("A") is not None:
            raise ParseError("an explicit A column conflicts with --from-srswor")
        for name, col in (("N", N), ("S", S)):
            if col is None or any(v is None for v in col):
                raise ParseError(f"--from-srswor needs {name} for every stratum")
        A, derived_a0 = srswor_params(N, S, labels)
    else:
        A = [row.get("A") for row in rows]
        for label, value in zip(labels, A):
            if value is None:
                raise ParseError(f"stratum {label!r}: A is required")

    frame = StrataFrame(
        labels=tuple(labels), A=A, c=c_col, lower=lower, upper=upper, N=N, S=S
    )
    return frame, derived_a0


def parse_values(text: str, fmt: str) -> dict[str, float]:
    """Parse a candidate allocation, either JSON (a ``values`` mapping or a
    bare label-to-number object) or CSV with columns ``stratum,value``."""
    if fmt == "json":
        try:
            doc = json.loads(text, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ParseError("candidate file must hold an object")
        mapping = doc.get("values", doc)
        if not isinstance(mapping, dict) or not mapping:
            raise ParseError("candidate 'values' must be a non-empty mapping")
        out: dict[str, float] = {}
        for key, value in mapping.items():
            if not isinstance(key, str):
                raise ParseError("candidate labels must be strings")
            out[key] = _json_number(value, f"values[{key!r}]")
        return out

    reader = csv.reader(io.StringIO(text))
    try:
        header = [cell.strip() for cell in next(reader)]
    except StopIteration:
        raise ParseError("empty candidate file") from None
    if set(header) != {"stratum", "value"} or len(header) != 2:
        raise ParseError("candidate CSV needs exactly the columns stratum,value")
    pos = {name: i for i, name in enumerate(header)}
    out = {}
    for lineno, cells in enumerate(reader, start=2):
        if not cells or all(not cell.strip() for cell in cells):
            continue
        if len(cells) != 2:
            raise ParseError(f"line {lineno}: expected 2 cells")
        label = cells[pos["stratum"]].strip()
        if not label:
            raise ParseError(f"line {lineno}: empty stratum label")
        if label in out:
            raise ParseError(f"line {lineno}: duplicate stratum {label!r}")
        out[label] = _number(cells[pos["value"]].strip(), f"line {lineno}")
    if not out:
        raise ParseError("candidate file has no rows")
    return out
