#!/usr/bin/env python3
"""Seed sweep of the transformed-noise variance check.

Runs the variance scenario across seeds, prints the aggregate pass rates and
the dispersion-vs-reported-SE table, and writes the aggregated bundle.

Usage:
    python scripts/noise_variance_sweep.py [--seeds 0,1,...,9] [--paths P] [--out DIR]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tcbsde.harness import ExperimentConfig, seed_sweep  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default=",".join(str(s) for s in range(10)))
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--out", default="tcbsde-out")
    args = ap.parse_args()

    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    cfg = ExperimentConfig(scenario="brownian-variance", paths=args.paths, out=args.out)
    bundle = seed_sweep(cfg, seeds)
    for v in bundle.verdicts:
        print(v.line())
    print(f"bundle written to {Path(args.out) / bundle.scenario}")
    return 0 if bundle.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
