"""Command-line entry point: validate, simulate, explain, export-graph and fmt."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from btw.config import EXIT_INVALID, EXIT_OK, EXIT_STOPPED, EXIT_USAGE, settings
from btw.dsl import format_spec, lower, parse
from btw.engine import (
    init_instance,
    load_checkpoint,
    load_scenario,
    run,
    save_checkpoint,
    summarize,
    write_trace,
)
from btw.engine.scenario import Scenario
from btw.errors import (
    BtwError,
    BudgetExhausted,
    CheckpointError,
    Diagnostic,
    ModelInvalid,
    ScenarioError,
    StuckState,
    UnknownCode,
)
from btw.export import render_dot
from btw.validator import explain, validate

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to the usage exit code."""


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror or e}") from e
    except UnicodeDecodeError as e:
        raise UsageError(f"cannot read {path}: not UTF-8 text ({e.reason} at byte {e.start})") from e


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e.strerror or e}") from e


def _print_diagnostics(diagnostics: list[Diagnostic], fmt: str) -> None:
    for d in diagnostics:
        print(d.to_json() if fmt == "json" else d.to_text(color=settings.color))


def load_model(path: Path, fmt: str = "text"):
    """Parse and lower a spec file. Returns (registry, model) or None after printing diagnostics."""
    parsed = parse(_read(path), str(path))
    if isinstance(parsed, list):
        _print_diagnostics(parsed, fmt)
        return None
    lowered = lower(parsed)
    if isinstance(lowered, list):
        _print_diagnostics(lowered, fmt)
        return None
    return lowered


# --- commands ---

def cmd_validate(args: argparse.Namespace) -> int:
    loaded = load_model(args.spec, args.format)
    if loaded is None:
        return EXIT_INVALID
    registry, model = loaded
    diagnostics = validate(model, registry, args.strict_allocation or None)
    _print_diagnostics(diagnostics, args.format)
    errors = sum(d.is_error for d in diagnostics)
    if args.format == "text":
        print(f"{args.spec}: {errors} error(s), {len(diagnostics) - errors} warning(s)")
    return EXIT_INVALID if errors else EXIT_OK


def _print_summary(summary: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(summary, sort_keys=True))
        return
    print(f"final state: {summary['final_state']}")
    print(f"terminated: {'yes' if summary['terminated'] else 'no'}")
    print(f"steps: {summary['steps']}  clock: {summary['clock']}")
    for kind, count in summary["trace"].items():
        print(f"  {kind}: {count}")
    for entity, count in summary["executions"].items():
        print(f"  ran {entity}: {count}")


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.resume is not None:
        state = load_checkpoint(args.resume)
    else:
        loaded = load_model(args.spec, args.format)
        if loaded is None:
            return EXIT_INVALID
        registry, model = loaded
        scenario = load_scenario(args.scenario) if args.scenario else Scenario()
        try:
            state = init_instance(model, registry, scenario, args.seed)
        except ModelInvalid as e:
            _print_diagnostics(e.diagnostics, args.format)
            return EXIT_INVALID

    code = EXIT_OK
    try:
        state, trace = run(state, args.max_steps)
    except (StuckState, BudgetExhausted) as e:
        print(f"simulation stopped: {e}", file=sys.stderr)
        state, trace = e.state, e.trace
        code = EXIT_STOPPED

    if args.trace is not None:
        try:
            write_trace(trace, args.trace)
        except OSError as e:
            raise UsageError(f"cannot write {args.trace}: {e.strerror or e}") from e
    if args.checkpoint is not None:
        save_checkpoint(state, args.checkpoint)
    _print_summary(summarize(state), args.format)
    return code


def cmd_explain(args: argparse.Namespace) -> int:
    try:
        print(explain(args.code.upper()))
    except UnknownCode as e:
        raise UsageError(str(e)) from e
    return EXIT_OK


def cmd_export_graph(args: argparse.Namespace) -> int:
    loaded = load_model(args.spec)
    if loaded is None:
        return EXIT_INVALID
    _, model = loaded
    dot = render_dot(model)
    if args.out is None:
        sys.stdout.write(dot)
    else:
        _write(args.out, dot)
    return EXIT_OK


def cmd_fmt(args: argparse.Namespace) -> int:
    parsed = parse(_read(args.spec), str(args.spec))
    if isinstance(parsed, list):
        _print_diagnostics(parsed, "text")
        return EXIT_INVALID
    text = format_spec(parsed)
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write(args.out, text)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "explain": cmd_explain,
    "export-graph": cmd_export_graph,
    "fmt": cmd_fmt,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="btw", description="Business-transaction workflow kernel")
    sub = parser.add_subparsers(dest="command", required=True)

    def output_format(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("validate", help="check a spec against the well-formedness rules")
    p.add_argument("spec", type=Path)
    output_format(p)
    p.add_argument("--strict-allocation", action="store_true", help="actors must sit in the exact unit")

    p = sub.add_parser("simulate", help="run a spec against a scenario")
    p.add_argument("spec", type=Path, nargs="?")
    p.add_argument("--scenario", type=Path)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--trace", type=Path, help="write the trace as JSON lines")
    p.add_argument("--checkpoint", type=Path, help="save the final engine state")
    p.add_argument("--resume", type=Path, help="continue from a saved engine state")
    p.add_argument("--strict-allocation", action="store_true")
    output_format(p)

    p = sub.add_parser("explain", help="describe a validator code")
    p.add_argument("code")

    p = sub.add_parser("export-graph", help="render the model as Graphviz DOT")
    p.add_argument("spec", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("fmt", help="print a spec in canonical form")
    p.add_argument("spec", type=Path)
    p.add_argument("--out", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage, which would read as a stopped simulation
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    if args.command == "simulate":
        if args.spec is None and args.resume is None:
            print("simulate needs a spec or --resume", file=sys.stderr)
            return EXIT_USAGE
        if args.max_steps is not None and args.max_steps <= 0:
            print("--max-steps must be positive", file=sys.stderr)
            return EXIT_USAGE

    strict = settings.strict_allocation
    if getattr(args, "strict_allocation", False):
        settings.strict_allocation = True
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ScenarioError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except BtwError as e:
        logger.exception(f"{args.command} failed")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STOPPED
    finally:
        settings.strict_allocation = strict


if __name__ == "__main__":
    sys.exit(main())
