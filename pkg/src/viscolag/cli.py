"""Command-line entry point: ``python -m viscolag <command> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, ViscoError
from .experiments import (ExperimentConfig, cmd_drift, cmd_oracle, cmd_run, cmd_straighten,
                          cmd_sweep, load_config)

log = logging.getLogger("viscolag")

COMMANDS = ("run", "sweep", "compare-linear", "straighten", "drift", "oracle", "report")


def build_parser():
    ap = argparse.ArgumentParser(prog="viscolag", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "report":
            p.add_argument("out_dir", help="directory of a finished run")
            continue
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--out-dir")
        p.add_argument("--kappa", type=float, nargs="+",
                       help="elasticity; several values define a sweep")
        p.add_argument("--grid", type=int, help="points per axis")
        p.add_argument("--t-final", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--order", type=int, choices=(1, 2))
        p.add_argument("--seed", type=int)
        p.add_argument("--parallel", type=int, help="sweep worker count")
        p.add_argument("--fault", action="store_true", help=argparse.SUPPRESS)
    return ap


def apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    rep = dataclasses.replace
    if args.out_dir is not None:
        cfg = rep(cfg, out_dir=args.out_dir)
    if args.kappa:
        if args.command == "sweep":
            cfg = rep(cfg, kappas=list(args.kappa))
        else:
            cfg = rep(cfg, params=rep(cfg.params, kappa=args.kappa[0]))
    if args.grid is not None:
        cfg = rep(cfg, grid=rep(cfg.grid, n=args.grid))
    if args.t_final is not None:
        cfg = rep(cfg, t_final=args.t_final, sample_interval=min(cfg.sample_interval, args.t_final))
    try:
        if args.dt is not None:
            cfg = rep(cfg, scheme=rep(cfg.scheme, dt=args.dt))
        if args.order is not None:
            cfg = rep(cfg, scheme=rep(cfg.scheme, order=args.order))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.seed is not None:
        cfg = rep(cfg, initial=rep(cfg.initial, seed=args.seed))
    if args.parallel is not None:
        cfg = rep(cfg, parallel=args.parallel)
    if args.fault:
        cfg = rep(cfg, fault=True)
    experiment = args.command
    if experiment == "sweep" and not cfg.kappas:
        cfg = rep(cfg, kappas=[cfg.params.kappa])
    return rep(cfg, experiment=experiment).validate()


def _report(out_dir):
    out = Path(out_dir)
    man = out / "manifest.json"
    if not man.exists():
        raise ConfigError(f"no manifest in {out}")
    result = {"manifest": json.loads(man.read_text())}
    for name in ("summary.json", "sweep.json", "drift.json", "oracle.json"):
        p = out / name
        if p.exists():
            result[name[:-5]] = json.loads(p.read_text())
    return result


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            result = _report(args.out_dir)
        else:
            cfg = load_config(args.config) if args.config else ExperimentConfig()
            cfg = apply_overrides(cfg, args)
            handlers = {
                "run": cmd_run,
                "sweep": cmd_sweep,
                "compare-linear": lambda c: cmd_run(c, compare_linear=True, tag="compare_linear"),
                "straighten": cmd_straighten,
                "drift": cmd_drift,
                "oracle": cmd_oracle,
            }
            result = handlers[args.command](cfg)
    except ViscoError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    json.dump(result, sys.stdout, indent=2, sort_keys=True, default=float)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
