"""Closed-form solver versus brute-force search for K = 2, 3, 4."""

import argparse
import json
from pathlib import Path

from otapc import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--out", type=Path, default=Path("out/oracle"))
    args = ap.parse_args()
    worst = 0
    for k in (2, 3, 4):
        out = args.out / f"k{k}"
        worst = max(worst, cli.main(["oracle-check", "--k", str(k), "--trials", str(args.trials), "--out", str(out)]))
        summary = json.loads((out / "oracle_summary.json").read_text())
        print(f"K={k}: {len(summary['failures'])} failures, max relative gap {summary['max_rel_gap']:.2e}")
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
