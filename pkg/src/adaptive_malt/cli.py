"""Command line front end: ``adaptive-malt {run,sweep,bench} --config FILE``.

Exit codes: 0 success, 1 configuration error, 2 sampler abort (a diagnostic
snapshot is written to ``abort.json`` in the output directory).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import run_bench, run_experiment, run_sweep
from .sampler import SamplerAbort

COMMANDS = {"run": run_experiment, "sweep": run_sweep, "bench": run_bench}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptive-malt",
        description="Adaptive MALT experiments: single runs, (tau, gamma) sweeps, benchmarks.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to a TOML experiment config")
    parser.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "sweep" and cfg.sweep is None:
            raise ConfigError("command 'sweep' needs a [sweep] section")
        if args.command == "bench" and cfg.bench is None:
            raise ConfigError("command 'bench' needs a [bench] section")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    out = Path(args.out if args.out is not None else cfg.output.dir)
    try:
        COMMANDS[args.command](cfg, out, quiet=args.quiet)
    except SamplerAbort as err:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "abort.json", "w") as fh:
            json.dump(err.snapshot, fh, default=str)
        print(f"run aborted: {err} (snapshot in {out / 'abort.json'})", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
