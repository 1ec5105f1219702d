"""Command-line entry point: ``neuroproxy <command> ...``.

Set ``NEUROPROXY_LOG`` to ``error``, ``info`` or ``debug`` to control log output
(default ``error``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .codecs import CodecError, CodecParams, CodingScheme, capacity_rows, decode, encode
from .declarative import ObjectiveError
from .harness import ScenarioConfig, ScenarioError, bundled_scenario, run_scenario
from .snn import SpikeEvent

logger = logging.getLogger("neuroproxy")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging() -> None:
    name = os.environ.get("NEUROPROXY_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(name, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def resolve_scenario(name: str) -> Path:
    """A scenario argument is either a file path or the name of a bundled scenario."""
    path = Path(name)
    if path.exists():
        return path
    return bundled_scenario(name)


def _codec_params(args: argparse.Namespace) -> CodecParams:
    return CodecParams(args.N, args.t, args.dt, args.phases, args.base)


def cmd_run(args: argparse.Namespace) -> int:
    config = ScenarioConfig.load(resolve_scenario(args.scenario))
    report = run_scenario(config, seed=args.seed)
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
        v = report.validation
        summary = f"{config.name}: seed {report.data['seed']}"
        if v is not None:
            summary += f", {v.successes}/{v.trials} trials succeeded, verdict {v.verdict}"
        print(summary)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    config = ScenarioConfig.load(resolve_scenario(args.scenario))
    report = run_scenario(config, seed=args.seed).validation
    if report is None:
        print("scenario has no trial dataset", file=sys.stderr)
        return 2
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0 if report.passed else 1


def cmd_capacity_table(args: argparse.Namespace) -> int:
    rows = capacity_rows(_codec_params(args))
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    events = encode(args.scheme, args.symbol, _codec_params(args), t0=args.t0)
    json.dump([list(e) for e in events], sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    text = Path(args.events).read_text(encoding="utf-8") if args.events != "-" else sys.stdin.read()
    try:
        events = [SpikeEvent(int(a), int(t)) for a, t in json.loads(text)]
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CodecError(f"events must be a JSON list of [address, timestamp_ns] pairs ({exc})") from None
    print(decode(args.scheme, events, _codec_params(args), t0=args.t0))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .serve import run

    run(args.config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuroproxy", description="Neuromorphic system proxy toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and emit its JSON report")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--report", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="run a scenario's trials; exit 0 iff the verdict is pass")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_validate)

    def codec_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--N", type=int, default=10, help="neurons")
        p.add_argument("--t", type=float, default=10.0, help="coding window in ms")
        p.add_argument("--dt", type=float, default=1.0, help="timing resolution in ms")
        p.add_argument("--phases", type=int, default=3, help="phase offsets for synchrony coding")
        p.add_argument("--base", type=int, default=0, help="first neuron address")

    p = sub.add_parser("capacity-table", help="print code capacities as CSV")
    codec_args(p)
    p.set_defaults(func=cmd_capacity_table)

    schemes = [s.value for s in CodingScheme]
    p = sub.add_parser("encode", help="encode a symbol as JSON [address, timestamp_ns] pairs")
    p.add_argument("--scheme", choices=schemes, required=True)
    p.add_argument("--symbol", type=int, required=True)
    p.add_argument("--t0", type=int, default=0, help="window start in ns")
    codec_args(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode JSON [address, timestamp_ns] pairs to a symbol")
    p.add_argument("--scheme", choices=schemes, required=True)
    p.add_argument("--events", default="-", help="JSON file, or - for stdin")
    p.add_argument("--t0", type=int, default=0)
    codec_args(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("serve", help="serve a proxy over TCP")
    p.add_argument("config", help="proxy JSON config")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ObjectiveError, CodecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
