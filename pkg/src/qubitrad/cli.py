"""Command-line interface: ``qubitrad validate|run|report|compare|two-step-replay``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core_data import DataError
from .scenario import ScenarioError, resolve_scenario_path, validate_scenario
from .sources import SourceError
from .twostep import StarvationError


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned value")
    return v


def _positive(text):
    v = int(float(text))
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_run_flags(p):
    p.add_argument("--seed", type=_seed, help="override the scenario seed")
    p.add_argument("--workers", type=_positive, help="worker threads (results do not depend on this)")
    p.add_argument("--events", type=_positive, help="events per source (two-step: n2, with n1 scaled alike)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--quiet", action="store_true", help="no progress messages")


def build_parser():
    ap = argparse.ArgumentParser(prog="qubitrad", description="Radiation interaction rates in a qubit chip.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario: geometry, data files, normalization")
    p.add_argument("scenario", help="scenario file or bundled scenario name")

    p = sub.add_parser("run", help="run every source of a scenario and write reports")
    p.add_argument("scenario")
    _add_run_flags(p)
    p.add_argument("--event-log", action="store_true", help="write the deposit of every depositing event")

    p = sub.add_parser("report", help="print the rate tables of a finished run")
    p.add_argument("summary", help="output directory or summary.json")
    p.add_argument("--out", help="write the report to this file")

    p = sub.add_parser("compare", help="suppression factors A/B between two runs")
    p.add_argument("summary_a")
    p.add_argument("summary_b")
    p.add_argument("--include-syst", action="store_true", help="add systematic uncertainties to the factors")
    p.add_argument("--out", help="write the table to this file")

    p = sub.add_parser("two-step-replay", help="second pass only, from a stored crossings file")
    p.add_argument("crossings", help="crossings_<source>.txt written by a run")
    p.add_argument("scenario", help="scenario providing geometry, threshold and binning")
    p.add_argument("--label", default="gamma", help="source label for the outputs")
    p.add_argument("--mode", choices=("marginal", "joint"), default="marginal")
    p.add_argument("--position-law", choices=("projected", "uniform"), default="projected")
    _add_run_flags(p)
    return ap


def cmd_validate(args):
    try:
        path = resolve_scenario_path(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    diags = validate_scenario(path)
    for d in diags:
        print(f"{path}: {d}")
    if not diags:
        print(f"{path}: ok")
    return 1 if diags else 0


def cmd_run(args):
    from .runner import report_text, run_scenario

    path = resolve_scenario_path(args.scenario)
    diags = validate_scenario(path)
    if diags:
        for d in diags:
            print(f"{path}: {d}", file=sys.stderr)
        return 1
    summary = run_scenario(path, seed=args.seed, workers=args.workers, events=args.events, out=args.out,
                           event_log=args.event_log, quiet=args.quiet)
    print(report_text(summary), end="")
    return 0


def cmd_report(args):
    from .runner import load_summary, report_text

    text = report_text(load_summary(args.summary))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_compare(args):
    from .runner import LabelMismatch, compare_summaries, compare_text, load_summary

    a, b = load_summary(args.summary_a), load_summary(args.summary_b)
    try:
        rows = compare_summaries(a, b, args.include_syst)
    except LabelMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = compare_text(rows, a["scenario"], b["scenario"])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_replay(args):
    from .runner import report_text, replay_from_file

    if args.events is None:
        print("error: --events (n2) is required", file=sys.stderr)
        return 2
    summary = replay_from_file(args.crossings, resolve_scenario_path(args.scenario), label=args.label,
                               events=args.events, seed=args.seed, workers=args.workers, out=args.out,
                               mode=args.mode, position_law=args.position_law, quiet=args.quiet)
    print(report_text(summary), end="")
    return 0


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "report": cmd_report, "compare": cmd_compare,
            "two-step-replay": cmd_replay}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, DataError, SourceError, StarvationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
