"""Command line entry point ``memsde``.

    memsde <simulate|kb|couple|girsanov|tails|lyapunov-audit> [--config FILE] [--seed N] [--out DIR] [--csv]
    memsde spde <gl|nse> [--config FILE] [--nu X] [--n0 N] [--cutoff K] [--dt X] [--horizon T]
                         [--experiment sync|psi|factor|probe] [--seed N] [--out DIR]

Exit codes: 0 all tasks passed, 1 invalid configuration, 2 runtime failure,
3 an acceptance check failed.
"""
from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigError, MemSDEError
from .config import EXPERIMENTS, load_config, parse_config
from .experiments import run_experiment

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memsde", description="Experiments on SDEs with memory-dependent drift.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML experiment configuration")
        sp.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
        sp.add_argument("--out", help="output root directory")
        sp.add_argument("--csv", action="store_true", help="also write trajectories as CSV")

    for name in EXPERIMENTS:
        if name == "spde":
            continue
        common(sub.add_parser(name))
    sp = sub.add_parser("spde", help="Galerkin SPDE experiments")
    sp.add_argument("equation", choices=("gl", "nse"))
    common(sp)
    sp.add_argument("--nu", type=float)
    sp.add_argument("--n0", type=int)
    sp.add_argument("--cutoff", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--experiment", choices=("sync", "psi", "factor", "probe"))
    return p


def _config_from_args(args):
    if args.config:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError("experiment", f"config is for {cfg.experiment!r}, command is {args.command!r}")
        data = cfg.to_dict()
    else:
        data = {"experiment": args.command}
    if args.seed is not None:
        data["seeds"] = [args.seed]
    if args.out is not None:
        data["out"] = args.out
    if args.command == "spde":
        spde = dict(data.get("spde") or {})
        spde["equation"] = args.equation
        for k in ("nu", "n0", "cutoff", "dt", "horizon", "experiment"):
            v = getattr(args, k)
            if v is not None:
                spde[k] = v
        data["spde"] = spde
    return parse_config(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ConfigError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    try:
        man = run_experiment(cfg, csv=args.csv)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except (MemSDEError, FloatingPointError, OSError) as e:
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    for t in man.tasks:
        line = f"{t['status']:>12}  {t['name']}"
        if t["summary"]:
            line += "  " + json.dumps(t["summary"], sort_keys=True, default=str)
        if t["message"]:
            line += f"  ({t['message']})"
        print(line)
    print(f"run directory: {man.run_dir}")
    return man.exit_code


if __name__ == "__main__":
    sys.exit(main())
