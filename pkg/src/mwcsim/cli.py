"""Command-line entry point: ``simulate <config> [--out CSV] [--workers N] [--master-seed S]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from mwcsim.experiment import (AGG_COLUMNS, ConfigError, _stderr_progress, aggregate,
                               format_rows, parse_config, run_experiment, write_atomic)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Sweep SNR for MWC-Best-User-Link and MW-Max-Link and write a CSV table.",
    )
    p.add_argument("config", help="experiment file (key = value lines)")
    p.add_argument("--out", help="CSV output path (default: <config stem>.csv next to the config)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--master-seed", type=int, default=0,
                   help="seed every run seed is derived from (unsigned 64-bit)")
    p.add_argument("--aggregate", metavar="CSV", help="also write per-point means over seeds")
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_time column (makes output non-reproducible)")
    p.add_argument("-q", "--quiet", action="store_true", help="no progress output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("simulate: --workers must be at least 1", file=sys.stderr)
        return 2
    if not 0 <= args.master_seed < 2**64:
        print("simulate: --master-seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        exp = parse_config(args.config)
    except ConfigError as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(args.config).with_suffix(".csv")
    progress = None if args.quiet else _stderr_progress
    rows, failures = run_experiment(exp, args.master_seed, args.workers, args.timing, progress)
    for cfg, msg in failures:
        print(f"simulate: run failed (protocol={cfg.protocol} snr={cfg.snr_db} LoL={cfg.LoL} "
              f"beta={cfg.csi.beta} seed={cfg.seed}): {msg}", file=sys.stderr)
    write_atomic(out, format_rows(rows))
    if args.aggregate:
        write_atomic(args.aggregate, format_rows(aggregate(rows), AGG_COLUMNS))
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
