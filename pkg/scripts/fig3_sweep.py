"""Optimal powers versus beta on the six-device example; writes one CSV per SNR and prints l* changes."""

import argparse
import csv
import math
from pathlib import Path

from otapc import cli
from otapc.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=None)
    ap.add_argument("--out", type=Path, default=Path("out/fig3"))
    args = ap.parse_args()
    cfg = load_config(args.config, "sweep-beta")
    code = cli.main(["sweep-beta", "--out", str(args.out)] + (["--config", str(args.config)] if args.config else []))
    for snr in cfg.snr_db:
        with open(args.out / f"sweep_beta_{snr:g}dB.csv") as fh:
            rows = list(csv.DictReader(fh))
        print(f"{snr:g} dB: l* changes")
        prev = None
        for row in rows:
            if row["l_star"] != prev:
                beta = float(row["beta"])
                print(f"  beta {'inf' if math.isinf(beta) else f'{beta:.4g}':>8}  l* = {row['l_star']}")
                prev = row["l_star"]
    return code


if __name__ == "__main__":
    raise SystemExit(main())
