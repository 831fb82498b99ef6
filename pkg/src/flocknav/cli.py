"""Command-line entry point: run scenarios, render snapshots, validate configs.

Exit codes: 0 success, 2 validation failure, 3 run completed but some solve
ended infeasible_tolerance, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .render import render_snapshots
from .scenario import ValidationError, config_digest, parse_scenario
from .sim import run
from .traceio import TraceFormatError, read_trace, write_metrics, write_trace

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DEGRADED = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flocknav",
                                     description="Distributed MPC flock-navigation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario")
    run_p.add_argument("--scenario", required=True, help="scenario YAML file")
    run_p.add_argument("--steps", type=int, default=None, help="override run.steps")
    run_p.add_argument("--seed", type=int, default=None, help="override run.seed")
    run_p.add_argument("--ablate", default=None,
                       choices=["none", "static-q", "cs-align", "flat-hierarchy", "horizon-1"],
                       help="override run.ablation")
    run_p.add_argument("--trace", default=None, help="trace output file")
    run_p.add_argument("--metrics", default=None, help="metrics output file")

    render_p = sub.add_parser("render", help="render trace snapshots to SVG")
    render_p.add_argument("--trace", required=True)
    render_p.add_argument("--scenario", required=True)
    render_p.add_argument("--times", required=True, help="comma-separated step indices")
    render_p.add_argument("--out", required=True)

    validate_p = sub.add_parser("validate", help="check a scenario file")
    validate_p.add_argument("--scenario", required=True)
    return parser


def _cmd_run(args) -> int:
    config = parse_scenario(args.scenario, ablation_override=args.ablate)
    if args.steps is not None:
        if args.steps < 0:
            raise ValidationError("--steps: must be nonnegative")
        config = replace(config, steps=args.steps)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    records, summary = run(config)
    if args.trace:
        write_trace(records, config_digest(config), args.trace)
    if args.metrics:
        write_metrics(summary, args.metrics)
    degraded = any(r.status == "infeasible_tolerance" for r in records)
    print(f"ran {config.steps} steps, {len(config.agents)} agents; "
          f"arrived={summary['arrived']}"
          + (" [degraded solves]" if degraded else ""))
    return EXIT_DEGRADED if degraded else EXIT_OK


def _cmd_render(args) -> int:
    config = parse_scenario(args.scenario)
    trace = read_trace(args.trace)
    try:
        times = [int(token) for token in args.times.split(",") if token.strip()]
    except ValueError:
        raise ValidationError("--times: expected comma-separated integers") from None
    try:
        render_snapshots(trace.records, config, times, args.out)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = parse_scenario(args.scenario)
    print(f"ok: {len(config.agents)} agents, {len(config.environment.obstacles)} obstacles, "
          f"digest {config_digest(config)[:12]}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "render": _cmd_render, "validate": _cmd_validate}
    try:
        return handlers[args.command](args)
    except (ValidationError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
