"""Command-line entry point: run, enumerate, audit, replay and list scenarios.

Exit codes: 0 clean, 1 internal error, 2 invalid input (config, grid or
trace), 3 invariant violations or a replay mismatch, 4 grid too large.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence, TextIO

from .errors import GridTooLarge, InvalidScenario, TraceFormatError
from .sim import audit as _audit
from .sim import config as _config
from .sim import grid as _grid
from .sim.engine import canonical_json, run

OK, INTERNAL, INVALID, VIOLATION, TOO_LARGE = 0, 1, 2, 3, 4

REPORT_KEYS = (
    "scenario", "alternative", "outcome", "phase", "channel", "channel_closed",
    "fiat", "fiat_delta", "verdicts", "deviations", "ticks", "events", "violations",
)


def resolve_scenario(ref: str) -> dict:
    """A scenario from a file path, or from the shipped library by name."""
    p = Path(ref)
    if p.exists():
        return _config.load(p)
    stem = p.stem if p.suffix == ".json" else p.name
    if stem in _config.library_names() and len(p.parts) <= 2:
        return _config.library(stem)
    raise InvalidScenario(f"{ref}: no such file or library scenario")


def structured_report(report: dict) -> dict:
    """The report restricted to its stable, documented keys."""
    return {k: report[k] for k in REPORT_KEYS}


def _pairs(d: dict, signed: bool = False) -> str:
    fmt = "{}={:+d}" if signed else "{}={}"
    return " ".join(fmt.format(k, v) for k, v in sorted(d.items()))


def print_report(report: dict, out: TextIO) -> None:
    rows: list[tuple[str, str]] = [
        ("scenario", report["scenario"]),
        ("alternative", report["alternative"] or "-"),
        ("outcome", report["outcome"] or "-"),
        ("channel", _pairs(report["channel"]) + (" (closed)" if report["channel_closed"] else " (open)")),
        ("fiat", _pairs(report["fiat"])),
        ("fiat delta", _pairs(report["fiat_delta"], signed=True)),
    ]
    if report["verdicts"]:
        for n, v in enumerate(report["verdicts"]):
            who = ",".join(v["culprits"]) or "no culprit"
            paid = "; ".join(f"{d} pays {b} {a}" for d, b, _, a in v["remedies"])
            rows.append((f"verdict {n + 1}", f"{who}: {v['rationale']}" + (f" ({paid})" if paid else "")))
    else:
        rows.append(("verdicts", "none"))
    dev = {b: ",".join(w) for b, w in report["deviations"].items() if w}
    rows.append(("deviations", _pairs(dev) if dev else "none"))
    rows.append(("events", f"{report['events']} over {report['ticks']} ticks"))
    rows.append(("violations", str(len(report["violations"]))))
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}", file=out)
    _print_violations(report["violations"], out)


def _print_violations(violations: list[dict], out: TextIO) -> None:
    for v in violations:
        print(f"  [{v['index']}] {v['invariant']}: {v['detail']}", file=out)


def _emit_json(obj: Any, out: TextIO) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True), file=out)


# ---------------------------------------------------------------- verbs


def cmd_run(args: argparse.Namespace, out: TextIO) -> int:
    cfg = resolve_scenario(args.scenario)
    result = run(cfg, args.seed)
    if args.trace_out:
        Path(args.trace_out).write_text(result.trace_text())
    if args.format == "structured":
        _emit_json(structured_report(result.report), out)
    else:
        print_report(result.report, out)
    return VIOLATION if result.report["violations"] else OK


def cmd_enumerate(args: argparse.Namespace, out: TextIO) -> int:
    base = resolve_scenario(args.scenario)
    grid = _grid.load_grid(args.grid)
    by = args.by or ("alternative" if "alternative" in grid["dimensions"] else None)
    result = _grid.enumerate_faults(base, grid, args.seed)
    summary = result.summary()
    if args.format == "structured":
        _emit_json(
            {
                "summary": summary,
                "histogram": result.histogram(by),
                "violations": [{"cell": c, **v} for c, v in result.violations],
                "misclassified": [
                    {"cell": c.cell, "deviators": c.deviators, "culprits": c.culprits}
                    for c in result.misclassified
                ],
            },
            out,
        )
    else:
        print(f"cells {summary['cells']}  violations {summary['violations']}  "
              f"misclassified {summary['misclassified']}", file=out)
        hist = result.histogram(by)
        outcomes = sorted({o for row in hist.values() for o in row})
        label = by or ""
        width = max([len(label)] + [len(k) for k in hist])
        print(f"{label:<{width}}  " + "  ".join(f"{o:>{max(len(o), 4)}}" for o in outcomes), file=out)
        for key, row in hist.items():
            print(f"{key:<{width}}  " + "  ".join(f"{row.get(o, 0):>{max(len(o), 4)}}" for o in outcomes),
                  file=out)
        for cell, v in result.violations:
            print(f"  {canonical_json(cell)} {v['invariant']}: {v['detail']}", file=out)
        for c in result.misclassified:
            print(f"  {canonical_json(c.cell)} deviated={c.deviators} blamed={c.culprits}", file=out)
    return VIOLATION if summary["violations"] or summary["misclassified"] else OK


def _read_trace(path: str) -> tuple[dict, list[dict]]:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as e:
        raise TraceFormatError(f"cannot read {path}: {e}") from None
    return _audit.parse_trace(text)


def cmd_audit(args: argparse.Namespace, out: TextIO) -> int:
    header, records = _read_trace(args.trace)
    violations = _audit.audit_trace(header, records)
    if args.format == "structured":
        _emit_json({"records": len(records), "violations": violations,
                    "by_invariant": _audit.summarize(violations)}, out)
    else:
        print(f"{len(records)} records, {len(violations)} violations", file=out)
        _print_violations(violations, out)
    return VIOLATION if violations else OK


def cmd_replay(args: argparse.Namespace, out: TextIO) -> int:
    """Re-execute the scenario embedded in a trace and compare byte for byte."""
    text = Path(args.trace).read_text() if Path(args.trace).exists() else None
    if text is None:
        raise TraceFormatError(f"cannot read {args.trace}")
    header, _ = _audit.parse_trace(text)
    try:
        cfg = _config.normalize(header["scenario"])
    except (InvalidScenario, TypeError) as e:
        raise TraceFormatError(f"trace header carries an invalid scenario: {e}") from None
    fresh = run(cfg, header["seed"]).trace_text()
    old_lines, new_lines = text.splitlines(), fresh.splitlines()
    if fresh == text:
        print(f"identical: {len(new_lines) - 1} records", file=out)
        return OK
    first = next(
        (n for n, (a, b) in enumerate(zip(old_lines, new_lines)) if a != b),
        min(len(old_lines), len(new_lines)),
    )
    what = "header" if first == 0 else f"record {first - 1}"
    print(f"diverges at {what} ({len(old_lines)} lines stored, {len(new_lines)} replayed)", file=out)
    return VIOLATION


def cmd_list(args: argparse.Namespace, out: TextIO) -> int:
    names = _config.library_names()
    width = max(len(n) for n in names)
    for n in names:
        cfg = _config.library(n)
        print(f"{n:<{width}}  {cfg['description']}", file=out)
    if args.grids:
        for name, g in sorted(_grid.PRESETS.items()):
            print(f"grid {name}: {_grid.grid_size(g)} cells over {', '.join(g['dimensions'])}", file=out)
    return OK


# ---------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridpay", description=__doc__.splitlines()[0])
    verbs = parser.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=("table", "structured"), default="table")

    p = verbs.add_parser("run", help="run one scenario and audit its trace")
    p.add_argument("scenario", help="scenario file, or the name of a shipped scenario")
    p.add_argument("--trace-out", metavar="PATH")
    p.add_argument("--seed", type=int, help="key-generation seed; never changes the outcome")
    common(p)
    p.set_defaults(func=cmd_run)

    p = verbs.add_parser("enumerate", help="run a fault grid over a base scenario")
    p.add_argument("scenario")
    p.add_argument("--grid", default="banks", help="preset name, grid file or inline JSON")
    p.add_argument("--by", choices=sorted(_grid.DIMENSIONS), help="split the outcome histogram")
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_enumerate)

    p = verbs.add_parser("audit", help="check a stored trace against every invariant")
    p.add_argument("trace")
    common(p)
    p.set_defaults(func=cmd_audit)

    p = verbs.add_parser("replay", help="re-run a stored trace's scenario and compare bytes")
    p.add_argument("trace")
    p.set_defaults(func=cmd_replay)

    p = verbs.add_parser("list", help="list shipped scenarios")
    p.add_argument("--grids", action="store_true", help="also list grid presets")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return OK if e.code == 0 else INVALID
    try:
        return args.func(args, out)
    except (InvalidScenario, TraceFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return INVALID
    except GridTooLarge as e:
        print(f"error: {e}", file=sys.stderr)
        return TOO_LARGE
    except Exception as e:  # noqa: BLE001 - last-resort boundary of the CLI
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return INTERNAL


if __name__ == "__main__":
    sys.exit(main())
