#!/usr/bin/env python3
"""Run the full prediction-vs-oracle validation on the bundled fixtures."""

import argparse
import sys
from pathlib import Path

from metachain.cli import main as cli_main

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicas", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    worst = 0
    for fixture in ("ring3.json", "funnel5.json"):
        print(f"== validating {fixture}", file=sys.stderr)
        code = cli_main(
            [
                "validate",
                "--input",
                str(FIXTURES / fixture),
                "--replicas",
                str(args.replicas),
                "--seed",
                str(args.seed),
            ]
        )
        worst = max(worst, code)
    raise SystemExit(worst)


if __name__ == "__main__":
    main()
