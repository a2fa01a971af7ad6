"""Command-line front end: ``relfacts list | run | sweep``.

Numbers are printed with 12 significant digits. Errors go to standard error
as one JSON line ``{"error": {"code": ..., "message": ...}}`` and set the exit
status: 2 usage, 3 validation, 4 capacity, 5 numeric.
"""

from __future__ import annotations

import argparse
import contextlib
import contextvars
import csv
import io
import json
import math
import sys
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as config_mod
from . import scenarios
from .errors import RelfactsError, UsageError, ValidationError
from .scenarios import NamedScenario
from .settings import override

SIG_DIGITS = 12


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse's default exits with status 2 and prose
        raise UsageError(message)


def fmt_number(x):
    """Round to 12 significant digits; integers and non-numbers pass through."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        y = float(f"{x:.{SIG_DIGITS}g}")
        return 0.0 if y == 0 else y
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return fmt_number(obj)


def _cell(x) -> str:
    x = fmt_number(x)
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse_kv(items: Sequence[str] | None, what: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"{what} must look like key=value, got {item!r}")
        if key in out:
            raise UsageError(f"{what} {key!r} given twice")
        out[key] = value
    return out


def _tolerances(items) -> dict[str, float]:
    tols = {}
    for k, v in _parse_kv(items, "--tol").items():
        try:
            tols[k] = float(v)
        except ValueError:
            raise UsageError(f"--tol {k} expects a number, got {v!r}") from None
    return tols


def _build(args, overrides: dict) -> NamedScenario:
    if args.config:
        if args.name:
            raise UsageError("give a scenario name or --config, not both")
        if overrides:
            raise UsageError("--param applies to built-in scenarios only")
        return config_mod.load(args.config)
    if not args.name:
        raise UsageError("missing scenario name (see `relfacts list`)")
    entry = scenarios.get(args.name)
    overrides = dict(overrides)
    if "seed" in {p.name for p in entry.params} and "seed" not in overrides:
        overrides["seed"] = args.seed
    return entry.build(overrides)


def _write(text: str, output: str | None, stdout) -> None:
    if output is None or output == "-":
        stdout.write(text)
        return
    try:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ValidationError(f"cannot write {output!r}: {exc.strerror}") from None


def _csv_tables(reports: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for k, rec in enumerate(reports):
        if k:
            buf.write("\n")
        w.writerow(list(rec))
        w.writerow([_cell(v) for v in rec.values()])
    return buf.getvalue()


def cmd_list(args, stdout, stderr) -> int:
    if args.json:
        doc = {
            "scenarios": [
                {
                    "name": e.name,
                    "description": e.description,
                    "parameters": [
                        {
                            "name": p.name,
                            "type": p.kind.__name__,
                            "default": fmt_number(p.default),
                            "description": p.description,
                        }
                        for p in e.params
                    ],
                }
                for e in scenarios.CATALOG.values()
            ]
        }
        stdout.write(json.dumps(doc, indent=2) + "\n")
        return 0
    lines = []
    for e in scenarios.CATALOG.values():
        lines.append(f"{e.name}: {e.description}")
        for p in e.params:
            lines.append(f"    {p.name} ({p.kind.__name__}, default {fmt_number(p.default)}): {p.description}")
    stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_run(args, stdout, stderr) -> int:
    overrides = _parse_kv(args.param, "--param")
    with override(**_tolerances(args.tol)):
        named = _build(args, overrides)
        if args.emit_config:
            _write(config_mod.dumps(named), args.output, stdout)
            return 0
        reports = [_clean(r) for r in named.run()]
    if args.format == "json":
        doc = {
            "scenario": named.name,
            "parameters": _clean(named.parameters),
            "seed": args.seed,
            "reports": reports,
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        text = _csv_tables(reports)
    _write(text, args.output, stdout)
    return 0


def parse_axis(spec: str, kind: type) -> tuple[str, list]:
    """``name=a..b`` (integers), ``name=a..b,count`` or ``name=v1,v2,...``."""
    name, sep, body = spec.partition("=")
    if not sep or not name:
        raise UsageError(f"--axis must look like name=values, got {spec!r}")
    body = body.strip()
    if not body:
        raise UsageError(f"axis {name!r} is empty")
    try:
        if ".." in body:
            lo_s, rest = body.split("..", 1)
            hi_s, _, count_s = rest.partition(",")
            if count_s:
                lo, hi, count = float(lo_s), float(hi_s), int(count_s)
                if count < 1:
                    raise UsageError(f"axis {name!r} is empty")
                values = [lo] if count == 1 else [float(x) for x in np.linspace(lo, hi, count)]
                if kind is int:
                    if any(v != int(v) for v in values):
                        raise UsageError(f"axis {name!r} takes integers")
                    values = [int(v) for v in values]
            else:
                if kind is not int:
                    raise UsageError(f"axis {name!r} is real-valued; give a count as a..b,count")
                lo, hi = int(lo_s), int(hi_s)
                values = list(range(lo, hi + 1))
        else:
            values = [kind(x) for x in body.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse axis {spec!r}") from None
    if not values:
        raise UsageError(f"axis {name!r} is empty")
    return name, values


def _sweep_row(entry, axis: str, value, overrides: dict) -> list[dict]:
    named = entry.build({**overrides, axis: value})
    return [_clean(r) for r in named.run()]


def _flatten(axis: str, value, reports: list[dict]) -> dict:
    row = {axis: fmt_number(value)}
    for rec in reports:
        for k, v in rec.items():
            if k in ("name", "kind"):
                continue
            row[f"{rec['name']}.{k}"] = v
    return row


def cmd_sweep(args, stdout, stderr) -> int:
    entry = scenarios.get(args.name)
    overrides = _parse_kv(args.param, "--param")
    axis, _ = args.axis.partition("=")[::2]
    kind = entry.param(axis).kind
    axis, values = parse_axis(args.axis, kind)
    if axis in overrides:
        raise UsageError(f"parameter {axis!r} is both swept and fixed")
    if "seed" in {p.name for p in entry.params} and "seed" not in overrides and axis != "seed":
        overrides["seed"] = args.seed
    for k, v in overrides.items():
        entry.coerce(k, v)
    workers = max(1, args.workers)

    def compute(value):
        try:
            return _flatten(axis, value, _sweep_row(entry, axis, value, overrides)), None
        except RelfactsError as exc:
            if args.strict:
                raise
            return {axis: fmt_number(value)}, exc

    with override(**_tolerances(args.tol)):
        if args.format == "csv" and (args.output in (None, "-")):
            return _stream_csv(values, compute, axis, workers, not args.strict, stdout, stderr)
        with _pool(workers) as mapper:
            results = list(mapper(compute, values))
    rows = []
    for row, exc in results:
        if exc is not None:
            _error_line(exc, stderr)
            row["error"] = {"code": exc.code, "message": str(exc)}
        rows.append(row)
    if args.format == "json":
        doc = {
            "scenario": entry.name,
            "axis": axis,
            "parameters": _clean({k: entry.coerce(k, v) for k, v in overrides.items()}),
            "seed": args.seed,
            "rows": rows,
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        _csv_rows(rows, _columns(rows, axis), buf, True, not args.strict)
        text = buf.getvalue()
    _write(text, args.output, stdout)
    return 0


@contextlib.contextmanager
def _pool(workers: int) -> Iterator:
    if workers <= 1:
        yield map
        return
    # worker threads start with an empty context; carry the tolerance override over
    ctx = contextvars.copy_context()

    def run_in_ctx(fn, x):
        return ctx.copy().run(fn, x)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield lambda fn, xs: pool.map(run_in_ctx, [fn] * len(xs), xs)


def _columns(rows: list[dict], axis: str) -> list[str]:
    cols = [axis]
    for row in rows:
        for k in row:
            if k not in cols and k != "error":
                cols.append(k)
    return cols


def _csv_rows(rows: list[dict], columns: list[str], out, header: bool, with_error: bool) -> None:
    w = csv.writer(out, lineterminator="\n")
    if header:
        w.writerow(columns + (["error"] if with_error else []))
    for row in rows:
        cells = [_cell(row.get(c)) for c in columns]
        if with_error:
            err = row.get("error")
            cells.append("" if err is None else f"{err['code']}: {err['message']}")
        w.writerow(cells)


def _stream_csv(values, compute, axis: str, workers: int, with_error: bool, stdout, stderr) -> int:
    """Emit each row once it and all earlier rows are done.

    Rows that fail before the first success are held back until the report
    columns are known.
    """
    columns = None
    pending: list[dict] = []
    with _pool(workers) as mapper:
        for row, exc in mapper(compute, values):
            if exc is not None:
                _error_line(exc, stderr)
                row = {**row, "error": {"code": exc.code, "message": str(exc)}}
            if columns is None:
                pending.append(row)
                if exc is not None:
                    continue
                columns = _columns(pending, axis)
                _csv_rows(pending, columns, stdout, True, with_error)
            else:
                _csv_rows([row], columns, stdout, False, with_error)
            stdout.flush()
    if columns is None:
        _csv_rows(pending, [axis], stdout, True, with_error)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relfacts", description="Relative-fact probabilities, stability audits and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_list = sub.add_parser("list", help="list built-in scenarios and their parameters")
    p_list.add_argument("--json", action="store_true", help="machine-readable schema")

    def common(p):
        p.add_argument("--param", action="append", metavar="KEY=VALUE", help="parameter override")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--output", metavar="PATH", help="write here instead of standard output")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized parameters (default 0)")
        p.add_argument("--tol", action="append", metavar="NAME=VALUE", help="tolerance override")

    p_run = sub.add_parser("run", help="run a scenario's report plan")
    p_run.add_argument("name", nargs="?", help="built-in scenario name")
    p_run.add_argument("--config", metavar="FILE", help="scenario file (JSON)")
    p_run.add_argument("--emit-config", action="store_true", help="print the scenario as a scenario file")
    common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario over a parameter axis")
    p_sweep.add_argument("name", help="built-in scenario name")
    p_sweep.add_argument("--axis", required=True, metavar="NAME=SPEC", help="a..b, a..b,count or v1,v2,...")
    p_sweep.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                         help="abort on the first failing axis value")
    p_sweep.add_argument("--workers", type=int, default=1)
    common(p_sweep)
    return parser


def _error_line(exc: RelfactsError, stream) -> None:
    stream.write(json.dumps({"error": {"code": exc.code, "message": str(exc)}}) + "\n")


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
        handler = {"list": cmd_list, "run": cmd_run, "sweep": cmd_sweep}[args.command]
        return handler(args, stdout, stderr)
    except RelfactsError as exc:
        _error_line(exc, stderr)
        return exc.exit_status
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
