"""Final test accuracy per scheme (median and quartiles over seeds) in three channel/partition settings."""

import argparse
import time

import numpy as np

from otapc.config import TrainConfig
from otapc.fl_sim import final_accuracies

SETTINGS = (("10 dB non-IID", 10.0, "noniid"), ("10 dB IID", 10.0, "iid"), ("5 dB non-IID", 5.0, "noniid"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    for label, snr, part in SETTINGS:
        t0 = time.perf_counter()
        acc = final_accuracies(TrainConfig(snr_db=snr, partition=part), range(args.seeds))
        print(f"{label} ({time.perf_counter() - t0:.0f} s)")
        for scheme, v in acc.items():
            q25, q50, q75 = np.quantile(v, [0.25, 0.5, 0.75])
            print(f"  {scheme:20s} median {q50:.4f}  IQR [{q25:.4f}, {q75:.4f}]")


if __name__ == "__main__":
    main()
