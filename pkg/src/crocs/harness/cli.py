"""Command-line entry point: ``crocs <command> [--config FILE] [--seed N] [--trials N] [--out PATH]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..sync import ConfigError, load_config
from . import experiments as ex

COMMANDS = {
    "beacon-match": ex.cmd_beacon_match,
    "ber-temporal": ex.cmd_ber_temporal,
    "ber-energy": ex.cmd_ber_energy,
    "sync-error": ex.cmd_sync_error,
    "sweep": ex.cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crocs", description="Seeded RSSI clock-sync experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", help="CSV output path (stdout when omitted)")
        p.add_argument("--workers", type=int, help="parallel processes over grid cells")
    return parser


def series_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + "_series" + (p.suffix or ".csv"))


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config) if args.config else {}
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        spec = ex.ExperimentSpec.from_config(
            args.command, data, seed=args.seed, trials=args.trials, out=args.out, workers=args.workers,
        )
        result = COMMANDS[args.command](spec)
    except (ConfigError, OSError) as exc:
        print(f"crocs {args.command}: error: {exc}", file=sys.stderr)
        return 2
    table, series = result if isinstance(result, tuple) else (result, None)
    if spec.out:
        table.to_csv(spec.out)
        if series is not None:
            series_path(spec.out).write_text(series)
        print(table.summary())
    else:
        sys.stdout.write(table.to_csv())
        print(table.summary(), file=sys.stderr)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
