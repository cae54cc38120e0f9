"""True alpha and beta over error-free training under both partitions, smoothed over windows."""

import argparse
import json
from pathlib import Path

from otapc import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=None)
    ap.add_argument("--out", type=Path, default=Path("out/fig2"))
    args = ap.parse_args()
    code = cli.main(["fig2-stats", "--out", str(args.out)] + (["--config", str(args.config)] if args.config else []))
    summary = json.loads((args.out / "fig2_summary.json").read_text())
    for part in ("iid", "noniid"):
        a = ", ".join(f"{v:.3f}" for v in summary[part]["alpha_window_means"])
        b = ", ".join(f"{v:.1f}" for v in summary[part]["beta_window_means"])
        print(f"{part:7s} alpha: {a}\n{'':7s} beta:  {b}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
