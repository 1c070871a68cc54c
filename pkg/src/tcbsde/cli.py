"""Command-line entry point: ``tcbsde run | list | sweep``.

Exit codes: 0 when every verdict passes, 1 when any fails, 2 for
configuration or structural errors.  The default output directory comes from
``--out``, then the ``TCBSDE_OUT`` environment variable, then
``./tcbsde-out``.
"""

from __future__ import annotations

import argparse
import sys

from .errors import TcbsdeError
from .harness import ExperimentConfig, list_scenarios, run_scenario, seed_sweep


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcbsde", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run one scenario and write its report bundle")
    _common_flags(runp)

    sub.add_parser("list", help="print the scenario catalog")

    sweepp = sub.add_parser("sweep", help="run one scenario across seeds and aggregate")
    _common_flags(sweepp)
    sweepp.add_argument("--seeds", type=str, default=None,
                        help="comma-separated seed list (default: seed..seed+9)")
    return p


def _common_flags(p) -> None:
    p.add_argument("--scenario", type=str, default=None, help="registered scenario id")
    p.add_argument("--config", type=str, default=None, help="experiment config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--tol", type=float, default=None, help="tolerance override")


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        if args.scenario:
            cfg.scenario = args.scenario
    else:
        if not args.scenario:
            from .errors import ConfigError

            raise ConfigError("name a scenario via --scenario or --config")
        cfg = ExperimentConfig(scenario=args.scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.paths is not None:
        cfg.paths = args.paths
    if args.out is not None:
        cfg.out = args.out
    if args.tol is not None:
        cfg.tol = args.tol
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for spec in list_scenarios():
                print(f"{spec.name:32s} [{spec.module:10s}] {spec.description}")
                print(f"{'':32s} anchor: {spec.anchor}")
            return 0
        cfg = _config_from_args(args)
        if args.command == "run":
            bundle = run_scenario(cfg)
            for v in bundle.verdicts:
                print(v.line())
            print(f"bundle written to {cfg.resolved_out() / bundle.scenario}")
            return 0 if bundle.all_passed else 1
        if args.command == "sweep":
            if args.seeds:
                seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            else:
                base = cfg.seed
                seeds = list(range(base, base + 10))
            bundle = seed_sweep(cfg, seeds)
            for v in bundle.verdicts:
                print(v.line())
            print(f"bundle written to {cfg.resolved_out() / bundle.scenario}")
            return 0 if bundle.all_passed else 1
        raise AssertionError("unreachable")
    except TcbsdeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
