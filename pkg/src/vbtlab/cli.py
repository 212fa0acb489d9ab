"""Command-line entry point.

Subcommands: collect, train, eval, abtest, serve, reproduce.
Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, ContractError, DatasetFormatError, MixError, TrainingDiverged
from .pipeline import (
    apply_override,
    default_experiment_config,
    load_config,
    run_datasets,
    run_evals,
    run_experiment,
    run_trainings,
    small_experiment_config,
)

USAGE_ERROR, RUNTIME_ERROR = 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(USAGE_ERROR)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="experiment config JSON")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field by dotted path (repeatable)")
    p.add_argument("--output", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the experiment base seed")
    p.add_argument("--parallel", type=int, default=1, metavar="N",
                   help="run independent trainings in N worker processes")


def build_parser() -> _Parser:
    parser = _Parser(prog="vbtlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("collect", "collect the configured datasets"),
        ("train", "train the configured models (requires datasets)"),
        ("eval", "run the configured evaluations (requires datasets and models)"),
        ("abtest", "run only the abtest evaluations"),
        ("reproduce", "run the full pipeline and write the criteria summary"),
    ):
        p = sub.add_parser(name, help=desc)
        _add_common(p)
        if name == "reproduce":
            p.add_argument("--small", action="store_true",
                           help="use the minutes-scale smoke config instead of the full grid")
    serve = sub.add_parser("serve", help="start the teleoperation session server")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--output", type=Path, default=Path("teleop-data"),
                       help="directory for recorded session datasets")
    return parser


def _resolve_config(args) -> dict:
    if args.config is not None:
        cfg = load_config(args.config)
    elif getattr(args, "small", False):
        cfg = small_experiment_config()
    else:
        cfg = default_experiment_config()
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(cfg, key, value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        from .service import serve

        serve(host=args.host, port=args.port, datasets_dir=args.output)
        return 0

    try:
        cfg = _resolve_config(args)
    except (ConfigError, DatasetFormatError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return USAGE_ERROR

    output = args.output or Path(cfg.get("output_dir", "vbtlab-out"))
    try:
        if args.command == "collect":
            run_datasets(cfg, Path(output))
        elif args.command == "train":
            datasets, _ = run_datasets(cfg, Path(output))
            run_trainings(cfg, datasets, Path(output), parallel=args.parallel)
        elif args.command in ("eval", "abtest"):
            if args.command == "abtest":
                cfg = dict(cfg)
                cfg["evals"] = [e for e in cfg.get("evals", []) if e["kind"] == "abtest"]
            datasets, _ = run_datasets(cfg, Path(output))
            models, _ = run_trainings(cfg, datasets, Path(output), parallel=args.parallel)
            run_evals(cfg, datasets, models, Path(output))
        elif args.command == "reproduce":
            from .criteria import evaluate_criteria, write_summary

            result = run_experiment(cfg, Path(output), parallel=args.parallel)
            criteria = evaluate_criteria(result)
            write_summary(criteria, Path(output))
            for c in criteria:
                print(c.line())
            if not all(c.passed for c in criteria):
                return RUNTIME_ERROR
    except (ConfigError, DatasetFormatError, MixError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except (ContractError, TrainingDiverged, OSError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return RUNTIME_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
