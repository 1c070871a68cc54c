#!/usr/bin/env python3
"""Run every registered scenario at its defaults and write the report bundles.

Usage:
    python scripts/run_all_scenarios.py [--out DIR] [--seed N]

Exits 0 only if every verdict of every scenario passes.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tcbsde.harness import ExperimentConfig, list_scenarios, run_scenario  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tcbsde-out")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    failures = 0
    for spec in list_scenarios():
        cfg = ExperimentConfig(scenario=spec.name, seed=args.seed, out=args.out)
        bundle = run_scenario(cfg)
        status = "ok" if bundle.all_passed else "FAILED"
        runtime = bundle.metadata.get("runtime_seconds", "?")
        print(f"{spec.name:32s} {status:7s} ({runtime}s)")
        for v in bundle.verdicts:
            if not v.passed:
                print(f"    {v.line()}")
        failures += 0 if bundle.all_passed else 1
    print(f"\n{len(list_scenarios()) - failures}/{len(list_scenarios())} scenarios passed; "
          f"bundles under {args.out}/")
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
