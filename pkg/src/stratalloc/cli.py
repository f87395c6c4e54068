"""Command line client for the allocation service.

Every command builds a JSON request from local files and flags, sends it
to the service, and prints the response body verbatim.  By default the
service runs in-process; ``--server URL`` targets a remote instance
started with ``stratalloc serve``.

Exit codes: 0 success, 1 infeasible problem, 2 invalid input,
3 candidate rejected by the verifier.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import ValidationError
from . import tables

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INVALID = 2
EXIT_REJECTED = 3

_SCALAR_FLAGS = ("v", "a0", "c0", "vt", "n")


def _finite(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _nonnegative(text: str) -> float:
    value = _finite(text)
    if value < 0.0:
        raise ValueError("must be nonnegative")
    return value


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stratalloc",
        description="Optimum sample allocation for stratified designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, kinds: list[str]) -> None:
        p.add_argument(
            "--input",
            action="append",
            required=True,
            metavar="PATH",
            help="strata table, .json or CSV",
        )
        p.add_argument("--kind", required=True, choices=kinds)
        p.add_argument("--v", type=_finite, help="variance target (mincost)")
        p.add_argument("--a0", type=_finite, help="variance offset (mincost)")
        p.add_argument("--c0", type=_finite, help="fixed cost (mincost)")
        p.add_argument("--vt", type=_finite, help="budget (lower)")
        p.add_argument("--n", type=_finite, help="total sample size")
        p.add_argument(
            "--from-srswor",
            action="store_true",
            help="derive A and a0 from the N and S columns",
        )
        p.add_argument("--server", metavar="URL", help="remote service base URL")

    solve = sub.add_parser("solve", help="compute an optimum allocation")
    add_common(solve, ["mincost", "lower", "classical", "upper"])
    solve.add_argument("--tol", type=_nonnegative, help="bound comparison slack")
    solve.add_argument("--trace", action="store_true", help="include the trace")
    solve.add_argument("--duals", action="store_true", help="include multipliers")
    solve.add_argument("--round", choices=["none", "ceil"], default="none")
    solve.add_argument("--jobs", type=int, default=1, help="parallel inputs")
    solve.add_argument("--output-dir", metavar="DIR")
    solve.set_defaults(func=cmd_solve)

    verify = sub.add_parser("verify", help="certify a candidate allocation")
    add_common(verify, ["mincost", "lower", "classical", "upper"])
    verify.add_argument("--candidate", required=True, metavar="PATH")
    verify.add_argument("--tol", type=_nonnegative, help="relative tolerance")
    verify.set_defaults(func=cmd_verify)

    oracle = sub.add_parser("oracle", help="solve slowly but independently")
    add_common(oracle, ["lower", "mincost", "upper"])
    oracle.add_argument("--method", choices=["subsets", "grid"], default="subsets")
    oracle.add_argument(
        "--resolution",
        type=int,
        default=1_000_000,
        help="grid points per free coordinate",
    )
    oracle.add_argument(
        "--compare",
        action="store_true",
        help="also run the solver and report the largest relative deviation",
    )
    oracle.set_defaults(func=cmd_oracle)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)
    return parser


def _fail(message: str) -> int:
    print(f"stratalloc: {message}", file=sys.stderr)
    return EXIT_INVALID


def _env_tol() -> float | None:
    raw = os.environ.get("STRATALLOC_TOL")
    if raw is None:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(f"STRATALLOC_TOL is not a number: {raw!r}") from None
    if not (math.isfinite(value) and value >= 0.0):
        raise ValidationError(f"STRATALLOC_TOL must be a nonnegative real: {raw!r}")
    return value


def _resolve_tol(flag: float | None, default: float) -> float:
    if flag is not None:
        return flag
    env = _env_tol()
    return default if env is None else env


def _read(path: str) -> tuple[str, str]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    fmt = "json" if p.suffix.lower() == ".json" else "csv"
    return text, fmt


def _make_client(server: str | None):
    import httpx

    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=60.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _payload(args, table: tables.TableData) -> dict:
    body: dict = {
        "kind": args.kind,
        "strata": table.rows,
        "from_srswor": args.from_srswor,
    }
    body.update(table.scalars)
    for name in _SCALAR_FLAGS:
        value = getattr(args, name)
        if value is not None:
            body[name] = value
    return body


def _post(client, path: str, body: dict) -> tuple[int, bytes, str]:
    response = client.post(path, json=body)
    if response.status_code == 200:
        return EXIT_OK, response.content, ""
    try:
        info = response.json()
        message = info["error"]["message"]
    except Exception:
        message = response.text
    code = EXIT_INFEASIBLE if response.status_code == 409 else EXIT_INVALID
    return code, b"", message


def _emit(content: bytes) -> None:
    sys.stdout.buffer.write(content + b"\n")
    sys.stdout.buffer.flush()


def cmd_solve(args) -> int:
    tol = _resolve_tol(args.tol, 0.0)
    inputs = args.input
    if args.jobs < 1:
        return _fail("--jobs must be at least 1")

    def run_one(path: str) -> tuple[str, int, bytes, str]:
        text, fmt = _read(path)
        table = tables.parse_table(text, fmt)
        body = _payload(args, table)
        body["options"] = {
            "tol": tol,
            "trace": args.trace,
            "round": args.round,
            "duals": args.duals,
        }
        with _make_client(args.server) as client:
            code, content, message = _post(client, "/solve", body)
        return path, code, content, message

    if len(inputs) == 1 and args.output_dir is None:
        path, code, content, message = run_one(inputs[0])
        if code == EXIT_OK:
            _emit(content)
            return EXIT_OK
        print(f"stratalloc: {path}: {message}", file=sys.stderr)
        return code

    # batch mode: one report file per input, nothing on stdout
    out_dir = Path(args.output_dir) if args.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for path, code, content, message in pool.map(run_one, inputs):
            if code != EXIT_OK:
                print(f"stratalloc: {path}: {message}", file=sys.stderr)
                worst = max(worst, code)
                continue
            source = Path(path)
            target_dir = out_dir if out_dir is not None else source.parent
            target = target_dir / (source.stem + ".report.json")
            target.write_bytes(content + b"\n")
            print(f"stratalloc: wrote {target}", file=sys.stderr)
    return worst


def _single_input(args) -> str:
    if len(args.input) != 1:
        raise ValidationError("this command takes exactly one --input")
    return args.input[0]


def cmd_verify(args) -> int:
    path = _single_input(args)
    text, fmt = _read(path)
    table = tables.parse_table(text, fmt)
    cand_text, cand_fmt = _read(args.candidate)
    values = tables.parse_values(cand_text, cand_fmt)
    body = _payload(args, table)
    body["values"] = values
    body["tol"] = _resolve_tol(args.tol, 1e-9)
    with _make_client(args.server) as client:
        code, content, message = _post(client, "/verify", body)
    if code != EXIT_OK:
        print(f"stratalloc: {path}: {message}", file=sys.stderr)
        return code
    _emit(content)
    import json

    accepted = json.loads(content)["accepted"]
    return EXIT_OK if accepted else EXIT_REJECTED


def cmd_oracle(args) -> int:
    path = _single_input(args)
    text, fmt = _read(path)
    table = tables.parse_table(text, fmt)
    body = _payload(args, table)
    body["method"] = args.method
    body["resolution"] = args.resolution
    body["compare"] = args.compare
    with _make_client(args.server) as client:
        code, content, message = _post(client, "/oracle", body)
    if code != EXIT_OK:
        print(f"stratalloc: {path}: {message}", file=sys.stderr)
        return code
    _emit(content)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
