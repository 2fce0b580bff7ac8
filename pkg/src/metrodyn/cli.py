"""
Command-line interface.

Exit codes: 0 ok, 1 condition or domain failure, 2 input error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import io
import sys
from typing import Sequence

import numpy as np

from metrodyn.analysis import (
    analytic_headway,
    classify_convergence,
    empirical_headway,
)
from metrodyn.control import GammaSchedule, PolicyKind, parse_gamma_token
from metrodyn.dynamics import (
    ACTIVE_NAMES,
    DepartureTrace,
    DegenerateMarkingError,
    flag_names,
    simulate,
    uniform_marking,
    value_iteration_headway,
)
from metrodyn.line import ConfigError, derive_bounds, validate_conditions
from metrodyn.scenario import Scenario, ScenarioError, load
from metrodyn.svg import headway_bars_svg, time_space_svg

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3

TRACE_HEADER = "k,j,d,a,w,r,g,h,s,active,saturated"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load(path: str) -> Scenario:
    try:
        return load(path)
    except ScenarioError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INPUT) from None
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}", EXIT_INPUT) from None


def _bounds(scen: Scenario):
    try:
        return derive_bounds(scen.line)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_FAIL) from None


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from None


def trace_csv(trace: DepartureTrace) -> str:
    """One row per (k, j), rows ordered by k then by update-order position of j."""
    buf = io.StringIO()
    buf.write(TRACE_HEADER + "\n")
    h = trace.h
    for k in range(1, trace.K + 1):
        for j in trace.order:
            sat = "|".join(flag_names(int(trace.flags[k, j]))) or "none"
            vals = (trace.d[k, j], trace.a[k, j], trace.w[k, j], trace.r[k, j], trace.g[k, j], h[k, j], trace.s[k, j])
            buf.write(f"{k},{j}," + ",".join(f"{v:.6f}" for v in vals) + f",{ACTIVE_NAMES[int(trace.active[k, j])]},{sat}\n")
    return buf.getvalue()


def cmd_validate(path: str, out=None) -> int:
    out = sys.stdout if out is None else out
    scen = _load(path)
    bounds = _bounds(scen)
    marking = scen.marking()
    gmax = scen.schedule().maximum(scen.line.platforms) if scen.policy.uses_gamma else 0.0
    report = validate_conditions(scen.line, bounds, marking, gmax)
    for line in report.lines():
        print(line, file=out)
    return EXIT_OK if report.ok else EXIT_FAIL


def run_report(scen: Scenario, trace: DepartureTrace) -> str:
    bounds = derive_bounds(scen.line)
    marking = scen.marking()
    lines = [f"policy: {scen.policy.value}", f"schedule: {scen.schedule().label}", f"K: {trace.K}"]
    gmax = scen.schedule().maximum(scen.line.platforms) if scen.policy.uses_gamma else 0.0
    lines += validate_conditions(scen.line, bounds, marking, gmax).lines()
    rep = empirical_headway(trace, scen.resolved_burn_in())
    ana = analytic_headway(scen.line, bounds, marking.m)
    rep.h_analytic, rep.dominant_term, rep.terms = ana.h_analytic, ana.dominant_term, ana.terms
    lines += rep.lines()
    lines.append(f"classification: {classify_convergence(trace)}")
    return "\n".join(lines) + "\n"


def cmd_simulate(path: str, out_csv=None, svg=None, svg_headways=None, report=None, K=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    scen = _load(path)
    bounds = _bounds(scen)
    marking = scen.marking()
    steps = scen.K if K is None else K
    try:
        trace = simulate(scen.line, marking, scen.policy, scen.schedule(), steps, scen.params(), bounds)
    except DegenerateMarkingError as exc:
        raise CliError(str(exc), EXIT_FAIL) from None
    if steps != scen.K:
        scen.K = steps
        scen.burn_in = None
    text = run_report(scen, trace)
    if out_csv:
        _write(out_csv, trace_csv(trace))
    if svg:
        _write(svg, time_space_svg(trace, marking.b))
    if svg_headways:
        _write(svg_headways, headway_bars_svg(trace.d[-1] - trace.d[-2]))
    if report:
        _write(report, text)
    else:
        stdout.write(text)
    return EXIT_OK


def parse_m_range(text: str, n: int) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"bad --m-range {text!r}", EXIT_INPUT) from None


def sweep_csv(scen: Scenario, ms: Sequence[int], K: int = 10_000) -> str:
    bounds = derive_bounds(scen.line)
    n = scen.n
    bad = [m for m in ms if not 0 < m < n]
    if bad:
        raise CliError(f"train counts {bad} outside 1..{n - 1}", EXIT_FAIL)
    rows = ["m,h_analytic,dominant_term,h_empirical,residual"]
    for m in ms:
        ana = analytic_headway(scen.line, bounds, m)
        vi = value_iteration_headway(scen.line, uniform_marking(scen.line, m, bounds), PolicyKind.MAXPLUS_DEMAND, None, K)
        rows.append(
            f"{m},{ana.h_analytic:.6f},{ana.dominant_term.value},{vi.h:.6f},{abs(ana.h_analytic - vi.h):.6f}"
        )
    return "\n".join(rows) + "\n"


def cmd_sweep(path: str, m_range: str | None = None, out=None, K: int = 10_000, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    scen = _load(path)
    _bounds(scen)
    ms = parse_m_range(m_range, scen.n) if m_range else list(range(1, scen.n))
    text = sweep_csv(scen, ms, K)
    if out:
        _write(out, text)
    else:
        stdout.write(text)
    return EXIT_OK


def compare_csv(scen: Scenario, tokens: Sequence[str]) -> str:
    bounds = derive_bounds(scen.line)
    marking = scen.marking()
    schedules = []
    for tok in tokens:
        try:
            schedules.append((tok.strip(), parse_gamma_token(tok, scen.K)))
        except ConfigError as exc:
            raise CliError(str(exc), EXIT_INPUT) from None
    rows = ["gamma_label,final_spread,final_variance,classification,h_empirical"]
    for label, sched in schedules:
        try:
            trace = simulate(scen.line, marking, PolicyKind.VARIANCE_MIN, sched, scen.K, None, bounds)
        except DegenerateMarkingError as exc:
            raise CliError(str(exc), EXIT_FAIL) from None
        rep = empirical_headway(trace, scen.resolved_burn_in())
        cls = classify_convergence(trace)
        rows.append(f"{label},{rep.spread:.6f},{rep.variance:.6f},{cls},{rep.h_empirical:.6f}")
    return "\n".join(rows) + "\n"


def cmd_compare(path: str, gammas: str = "0,0.1,fade:0.5", out=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    scen = _load(path)
    _bounds(scen)
    text = compare_csv(scen, [t for t in gammas.split(",") if t.strip()])
    if out:
        _write(out, text)
    else:
        stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metrodyn", description="Metro loop-line train dynamics with dwell and run control.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the initial-headway, run-margin and train-count conditions")
    p.add_argument("scenario")

    p = sub.add_parser("simulate", help="run the explicit engine and write a trace, figures and a report")
    p.add_argument("scenario")
    p.add_argument("--out", help="trace CSV path")
    p.add_argument("--svg", help="time-space diagram SVG path")
    p.add_argument("--svg-headways", help="last-headway bar chart SVG path")
    p.add_argument("--report", help="report path (default: stdout)")
    p.add_argument("-K", type=int, help="override the number of departure counts")

    p = sub.add_parser("sweep", help="analytic and value-iteration headway for each train count")
    p.add_argument("scenario")
    p.add_argument("--m-range", help="e.g. 1..3 or 1,3 (default 1..n-1)")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("-K", type=int, default=10_000, help="value-iteration horizon")

    p = sub.add_parser("compare", help="compare gamma schedules on the same marking")
    p.add_argument("scenario")
    p.add_argument("--gammas", default="0,0.1,fade:0.5", help="comma-separated: 0.1 (static) or fade:0.5")
    p.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.scenario)
        if args.command == "simulate":
            if args.K is not None and args.K < 1:
                raise CliError("-K must be at least 1", EXIT_INPUT)
            return cmd_simulate(args.scenario, args.out, args.svg, args.svg_headways, args.report, args.K)
        if args.command == "sweep":
            return cmd_sweep(args.scenario, args.m_range, args.out, args.K)
        return cmd_compare(args.scenario, args.gammas, args.out)
    except CliError as exc:
        print(f"metrodyn: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
