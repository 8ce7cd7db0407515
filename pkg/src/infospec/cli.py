"""Command-line entry point.

Exit codes: 0 ok, 1 config error, 2 invariant/assertion finding,
3 runtime or I/O failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import parse_config
from .errors import ConfigError, InfoSpecError, InvariantViolationError
from .models import validate_model
from .runner import alternating_example_config, mixed_example_config, run_and_emit

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FINDING = 2
EXIT_RUNTIME = 3


def _add_common(parser):
    parser.add_argument("--config", type=Path, help="experiment config (JSON)")
    parser.add_argument("--out", type=Path, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override (unsigned 64-bit)")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for grid stages")
    parser.add_argument("--no-plot", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infospec",
        description="Information-spectrum toolkit: spectra, coding bounds, "
                    "transmissibility and separation checks.",
    )
    parser.add_argument("--version", action="version", version=f"infospec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("validate", help="validate config and models"))
    _add_common(sub.add_parser("spectrum", help="entropy/information spectra over the n-grid"))
    _add_common(sub.add_parser("simulate", help="random-codebook threshold-decoder simulation"))

    bound = sub.add_parser("bound", help="evaluate a coding bound")
    bound.add_argument("which", choices=["feinstein", "converse"])
    _add_common(bound)

    check = sub.add_parser("check", help="transmissibility / separation conditions")
    check.add_argument("which", choices=["direct", "converse", "domination",
                                         "separation", "epsilon"])
    _add_common(check)

    example = sub.add_parser("example", help="run a canned worked example")
    example.add_argument("which", choices=["alternating", "mixed"])
    example.add_argument("--n-grid", default=None,
                         help="grid as 'a..b' or comma list (default per example)")
    example.add_argument("--samples", type=int, default=100_000)
    _add_common(example)

    return parser


def _parse_grid(text):
    if text is None:
        return None
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t]


def _load_config(args):
    if args.config is None:
        raise ConfigError([("/", "a --config file is required for this command")])
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_RUNTIME)
    config = parse_config(text)
    if args.no_plot:
        config.raw["plots"] = False
    return config


def _stage_for(args) -> list:
    if args.command == "validate":
        return ["validate"]
    if args.command == "spectrum":
        return ["spectrum"]
    if args.command == "simulate":
        return ["simulate"]
    if args.command == "bound":
        return [f"bound:{args.which}"]
    if args.command == "check":
        return [f"check:{args.which}"]
    raise ValueError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "example":
            grid = _parse_grid(args.n_grid)
            if args.which == "alternating":
                config = alternating_example_config(
                    grid or [1, 2, 3, 4, 5, 6], plots_on=not args.no_plot,
                    samples=args.samples, seed=args.seed or 0,
                )
            else:
                config = mixed_example_config(
                    grid or [64, 256, 1024], samples=args.samples,
                    seed=args.seed if args.seed is not None else 0,
                    plots_on=not args.no_plot,
                )
            out = args.out or Path(config.output_dir)
            manifest = run_and_emit(config, out, seed=args.seed, jobs=args.jobs)
            print(json.dumps({"out": str(out), "files": len(manifest["files"])}))
            return EXIT_OK

        config = _load_config(args)
        stages = _stage_for(args)
        if args.command == "validate":
            source, channel, coupling = config.build_models()
            for model in (source, channel, coupling):
                diag = validate_model(model)
                status = "ok" if diag.ok else "FLAGS: " + "; ".join(diag.flags)
                print(f"{diag.role}: kind={diag.kind} {status}")
            if args.out is not None:
                run_and_emit(config, args.out, stages=stages, seed=args.seed, jobs=args.jobs)
            return EXIT_OK
        out = args.out or Path(config.output_dir)
        manifest = run_and_emit(config, out, stages=stages, seed=args.seed, jobs=args.jobs)
        print(json.dumps({"out": str(out), "files": len(manifest["files"])}))
        return EXIT_OK
    except ConfigError as exc:
        for pointer, message in exc.violations:
            print(f"config error at {pointer}: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolationError as exc:
        print(f"invariant finding: {exc}", file=sys.stderr)
        return EXIT_FINDING
    except InfoSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
