"""Command-line entry point: ``maisac run ...``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .experiments import PROFILES, SCHEMES, SWEEP_AXES, emit, summarize, sweep, write_traces
from .scenario import ConfigError, load_config


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def _schemes(text: str) -> list[str]:
    out = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in out if s not in SCHEMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {bad}; choose from {', '.join(SCHEMES)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maisac", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scheme comparison or parameter sweep")
    r.add_argument("--config", help="JSON or YAML file with scenario overrides")
    r.add_argument("--sweep", default="none", choices=("none",) + SWEEP_AXES)
    r.add_argument("--values", type=_floats, default=None,
                   help="sweep values, comma or space separated")
    r.add_argument("--schemes", type=_schemes, default=list(SCHEMES),
                   help="comma separated subset of " + ",".join(SCHEMES))
    r.add_argument("--seeds", type=int, default=None, help="number of channel realizations")
    r.add_argument("--profile", choices=sorted(PROFILES), default=None,
                   help="search-size preset; overrides the matching config keys")
    r.add_argument("--out", default=None, help="output file (stdout when omitted)")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--trace-dir", default=None, help="directory for per-cell iteration traces")
    r.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: MAISAC_WORKERS or 1)")
    return p


def run(args: argparse.Namespace) -> int:
    overrides = {}
    seeds = args.seeds
    if args.profile is not None:
        prof = dict(PROFILES[args.profile])
        n = prof.pop("seeds")
        overrides.update(prof)
        seeds = n if seeds is None else seeds
    seeds = 1 if seeds is None else seeds
    if seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    cfg = load_config(args.config, **overrides)
    if args.sweep != "none" and not args.values:
        raise ConfigError("--values is required with --sweep")
    records = sweep(cfg, args.sweep, args.values or [], seeds, args.schemes, args.workers)
    text = emit(records, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.trace_dir:
        write_traces(records, args.trace_dir)
    for row in summarize(records):
        print(f"{row['sweep']}={row['value']!r} {row['scheme']:>7}: "
              f"{row['mean']:.4f} +- {row['std']:.4f} bits (n={row['n']})", file=sys.stderr)
    failed = [r for r in records if not r.ok]
    if failed:
        print(f"{len(failed)} of {len(records)} cells failed:", file=sys.stderr)
        for r in failed:
            print(f"  {r.scheme} {r.sweep}={r.value!r} seed={r.seed}: {r.status}", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
