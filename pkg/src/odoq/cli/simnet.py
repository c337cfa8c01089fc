"""odoq-simnet: run a scenario spec on the simulated network and print its report."""

import argparse
import logging
import sys
from pathlib import Path

from odoq.cli._common import add_logging_argument, setup_logging
from odoq.simnet import FormatError, ScenarioSpec, SimError, list_scenarios, run_spec

__all__ = ["build_parser", "main"]

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odoq-simnet",
        description="Run a scenario spec file on the deterministic network "
        "simulator. Exits 1 if any assertion fails.",
    )
    parser.add_argument(
        "spec_file", nargs="?", type=Path, help="scenario spec (`key = value` lines)"
    )
    parser.add_argument(
        "--list", action="store_true", help="list the registered scenarios and exit"
    )
    parser.add_argument(
        "--no-transcripts",
        action="store_true",
        help="leave per-node transcripts out of the report",
    )
    add_logging_argument(parser)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    if args.list:
        for entry in list_scenarios():
            print(f"{entry.name}\t{entry.description}")
        return 0
    if args.spec_file is None:
        parser.error("a spec file is required unless --list is given")

    try:
        spec = ScenarioSpec.from_text(args.spec_file.read_text())
        report = run_spec(spec)
    except OSError as err:
        print(f"odoq-simnet: {err}", file=sys.stderr)
        return 1
    except (FormatError, SimError, ValueError) as err:
        print(f"odoq-simnet: {args.spec_file}: {err}", file=sys.stderr)
        return 1

    print(report.to_text(with_transcripts=not args.no_transcripts), end="")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
