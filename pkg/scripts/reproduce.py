#!/usr/bin/env python3
"""Regenerate every artifact and metric from scratch in ./workspace.

Runs gen -> ingest -> embed -> trends -> eval with pinned seeds, then points
at the emitted reports. Pass --seed / --workspace to vary.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from temporal_memory import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", default="workspace")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    code = cli.main(["--workspace", args.workspace, "all", "--seed", str(args.seed)])
    if code != 0:
        return code
    ws = Path(args.workspace)
    print("\nartifacts:")
    for rel in ("data/events.jsonl", "data/vectors.tmv",
                "results/clusters_weekly.csv", "results/trends_summary.csv",
                "results/eval_report.json", "results/eval_report.md"):
        print(f"  {ws / rel}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
