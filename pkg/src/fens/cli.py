"""
Command-line entry point: `fens <command> [flags]`.

Every command prints exactly one JSON envelope on stdout; logs and usage
text go to stderr. Exit codes: 0 ok/partial, 1 runtime failure, 2 usage or
config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

from fens import __version__
from fens.core import envelope
from fens.core.actions.models import ActionContext
from fens.core.actions.runner import run_action
from fens.core.errors import UsageError
from fens.core.logs import configure_logging
from fens.core.safe_exec import describe_exception, safe_execute
from fens.ensemble.voting import VOTING
from fens.zoo.model import STRATEGIES
from fens.zoo.spec import FAMILIES

import fens.commands  # noqa: F401  (registers actions)
from fens.commands.settings import build_config, leaf_flags, load_config_file, resolve_home

LEAF_PREFIX = "leaf:"
SHORTCUTS = ("seed", "epochs", "jobs", "out", "data")
NEEDS_DATA = ("tune", "train", "eval", "run")


class _Parser(argparse.ArgumentParser):
    """
    Raises UsageError instead of exiting so main() can still emit an envelope.
    """

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message, usage=self.format_usage())


def _logging_flags() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    parent.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    parent.add_argument("-q", "--quiet", action="count", default=argparse.SUPPRESS)
    return parent


def _pipeline_flags() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    parent.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file; flags override it")
    parent.add_argument("--data", action="append", default=argparse.SUPPRESS,
                        help="dataset source: CSV file, image folder or 'synth' (repeatable)")
    parent.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="sets seed and train.seed")
    parent.add_argument("--epochs", type=int, default=argparse.SUPPRESS, help="sets train.epochs")
    parent.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker-pool width")
    parent.add_argument("--out", default=argparse.SUPPRESS, help="output root (else FENS_HOME, ./fens-out)")
    group = parent.add_argument_group("config keys")
    for flag, path, default in leaf_flags():
        if path in SHORTCUTS:
            continue
        group.add_argument(flag, dest=LEAF_PREFIX + path, default=argparse.SUPPRESS, metavar="VALUE",
                           help=f"default: {json.dumps(default)}")
    return parent


def build_parser() -> _Parser:
    logging_flags, pipeline_flags = _logging_flags(), _pipeline_flags()
    both = [logging_flags, pipeline_flags]

    parser = _Parser(prog="fens", description="ConvNet ensembles: train, tune, vote, benchmark, report.")
    parser.add_argument("--version", action="version", version=f"fens {__version__}")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    commands.required = True

    dataset = commands.add_parser("dataset", help="synthesise or inspect a dataset")
    dataset_commands = dataset.add_subparsers(dest="dataset_command", parser_class=_Parser, metavar="ACTION")
    dataset_commands.required = True
    synth = dataset_commands.add_parser("synth", parents=[logging_flags], help="render synthetic glyphs to CSV")
    synth.add_argument("--classes", type=int, default=28)
    synth.add_argument("--per-class", type=int, default=50)
    synth.add_argument("--height", type=int, default=32)
    synth.add_argument("--width", type=int, default=32)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--name", default="synth")
    synth.add_argument("--out", default=None, help="output directory (default <home>/datasets)")
    inspect = dataset_commands.add_parser("inspect", parents=[logging_flags], help="describe a dataset")
    inspect.add_argument("source")
    inspect.add_argument("--height", type=int, default=32)
    inspect.add_argument("--width", type=int, default=32)

    for name, text in (("tune", "Hyperband for one family and strategy"),
                       ("train", "k-fold training and test evaluation for one entry")):
        sub = commands.add_parser(name, parents=both, help=text)
        sub.add_argument("--family", required=True, choices=FAMILIES)
        sub.add_argument("--strategy", required=True, choices=STRATEGIES)

    evaluate = commands.add_parser("eval", parents=both, help="score a checkpoint on a dataset")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--matrix", default=None, help="where to write the probability matrix")

    ensemble = commands.add_parser("ensemble", parents=both, help="evaluate combinations over trained members")
    ensemble.add_argument("--dataset", default=None, help="only this dataset directory")

    bench = commands.add_parser("bench", parents=both, help="latency and memory benchmarks")
    bench.add_argument("--checkpoint", dest="checkpoints", action="append", default=None)
    bench.add_argument("--voting", choices=VOTING, default="soft")
    bench.add_argument("--format", choices=("csv", "markdown"), default="csv")
    bench.add_argument("--report", default=None, help="report file (default <home>/bench/bench.csv)")

    report = commands.add_parser("report", parents=both, help="comparison tables from a run directory")
    report.add_argument("run_dir", nargs="?", default=None)

    commands.add_parser("run", parents=both, help="the full pipeline over datasets x families x strategies")
    for sub in commands.choices.values():
        sub.set_defaults(usage=sub.format_usage())
    return parser


def _params(args: argparse.Namespace, skip: Sequence[str]) -> Dict[str, Any]:
    return {
        k: v for k, v in vars(args).items()
        if not k.startswith(LEAF_PREFIX) and k not in skip
    }


def _prepare(argv: Optional[List[str]]) -> Tuple[str, Dict[str, Any], ActionContext]:
    """
    Parse argv and return (operation, params, ctx). Raises UsageError/ConfigError.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(getattr(args, "verbose", 0) - getattr(args, "quiet", 0))

    if args.command == "dataset":
        operation = f"dataset.{args.dataset_command}"
        params = _params(args, ("command", "dataset_command", "usage", "verbose", "quiet"))
        return operation, params, ActionContext(home=resolve_home())

    leaves = {k[len(LEAF_PREFIX):]: v for k, v in vars(args).items() if k.startswith(LEAF_PREFIX)}
    shortcuts = {k: getattr(args, k) for k in SHORTCUTS if hasattr(args, k)}
    config = build_config(load_config_file(getattr(args, "config", None)), leaves, shortcuts)
    if args.command in NEEDS_DATA and not config.dataset.sources:
        raise UsageError("a dataset is required: pass --data or set dataset.sources", usage=args.usage)

    params = _params(args, ("command", "usage", "verbose", "quiet", "config", *SHORTCUTS))
    params["config"] = config
    ctx = ActionContext(home=resolve_home(None, config.out), jobs=config.jobs, extras={"config": config.to_dict()})
    return args.command, params, ctx


def _emit(result: Dict[str, Any]) -> int:
    sys.stdout.write(json.dumps(result, sort_keys=True, default=str) + "\n")
    sys.stdout.flush()
    return envelope.exit_code(result)


def main(argv: Optional[List[str]] = None) -> int:
    operation = "cli"
    try:
        operation, params, ctx = _prepare(argv)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"fens: error: {exc.message}\n")
        return _emit(envelope.build_envelope(operation=operation, status="error", error=exc.as_error()))
    except Exception as exc:  # noqa: BLE001
        return _emit(envelope.build_envelope(operation=operation, status="error", error=describe_exception(exc)))

    return _emit(safe_execute(operation, lambda: run_action(operation, params, ctx)))


if __name__ == "__main__":
    sys.exit(main())
