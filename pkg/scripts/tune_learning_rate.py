"""Pick the learning rate on the error-free baseline only, so no scheme's aggregation error enters the choice."""

import argparse

import numpy as np

from otapc.config import TrainConfig
from otapc.fl_sim import final_accuracies

GRID = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    scores = {}
    for lr in GRID:
        acc = final_accuracies(TrainConfig(learning_rate=lr, schemes=("error_free",)), range(args.seeds))["error_free"]
        scores[lr] = acc.mean()
        print(f"lr {lr:5g}: mean {acc.mean():.4f}  median {np.median(acc):.4f}")
    print("best:", max(scores, key=scores.get))


if __name__ == "__main__":
    main()
