"""How the one-step SMCV estimate behaves under exact averaging of K device gradients.

With the recovered gradient equal to the exact device average,
E|g_bar|^2 = sum m^2 + sum sigma^2 / K, so the estimate concentrates near
beta (1 - 1/K) / (1 + beta / K), which is below K - 1 for every beta.
"""

import argparse

import numpy as np

from otapc.stats import GradientMoments, estimate_alpha, estimate_beta, sample_gradients


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--dimension", type=int, default=1000)
    ap.add_argument("--trials", type=int, default=100)
    args = ap.parse_args()
    k, d = args.k, args.dimension
    print(f"{'beta':>8} {'median beta_hat':>16} {'predicted':>10} {'median rel err':>15}")
    for beta in (0.1, 0.5, 1.0, 4.0, 20.0, 100.0):
        mom = GradientMoments(np.full(d, 0.05), np.full(d, 0.05**2 * beta))
        est = []
        for s in range(args.trials):
            g = sample_gradients(mom, k, s)
            est.append(estimate_beta(estimate_alpha(np.linalg.norm(g, axis=1)), g.mean(axis=0)))
        est = np.array(est)
        pred = beta * (1 - 1 / k) / (1 + beta / k)
        print(f"{beta:8g} {np.median(est):16.3f} {pred:10.3f} {np.median(np.abs(est / beta - 1)):15.1%}")


if __name__ == "__main__":
    main()
