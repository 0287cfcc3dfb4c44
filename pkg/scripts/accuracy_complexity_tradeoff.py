#!/usr/bin/env python3
"""Trace the accuracy-complexity tradeoff: predicted total MSE as m grows.

With the total sample budget N fixed, splitting over more machines shortens
the per-machine fit but inflates the second-order error.  This script prints
the predicted error curve E(m) for an OLS task in both regimes, plus the
largest machine counts meeting absolute and relative error targets.

Run:  python scripts/accuracy_complexity_tradeoff.py [N] [p] [sigma2]
"""

import sys

import numpy as np

from splitavg import (
    FixedPRegime,
    HighDimRegime,
    LossSpec,
    NoiseDist,
    PlannerProblem,
    choose_m,
    ols_gammas,
    predicted_error,
)


def main() -> int:
    N = int(float(sys.argv[1])) if len(sys.argv) > 1 else 10 ** 6
    p = int(sys.argv[2]) if len(sys.argv) > 2 else 100
    sigma2 = float(sys.argv[3]) if len(sys.argv) > 3 else 10.0

    fixed = PlannerProblem(mode="fixed_N", size=N, constraint="absolute", eps=1.0,
                           regime=FixedPRegime(ols_gammas(None, sigma2, p)))
    high = PlannerProblem(mode="fixed_N", size=N, constraint="absolute", eps=1.0,
                          regime=HighDimRegime(loss=LossSpec.squared(),
                                               noise=NoiseDist.gaussian(sigma2), p=p))
    print(f"N = {N}, p = {p}, sigma2 = {sigma2}")
    print(f"{'m':>8} {'E_second_order':>16} {'E_high_dim':>16} {'kappa':>8}")
    for m in np.unique(np.geomspace(1, 0.5 * N / p, 12).astype(int)):
        e_fixed = predicted_error(fixed, m)
        e_high = predicted_error(high, m)
        print(f"{m:>8d} {e_fixed:>16.6e} {e_high:>16.6e} {p * m / N:>8.4f}")

    base = predicted_error(fixed, 1)
    for eps, label in [(2 * base, "2x the single-machine error"),
                       (10 * base, "10x the single-machine error")]:
        prob = PlannerProblem(mode="fixed_N", size=N, constraint="absolute",
                              eps=eps, regime=fixed.regime)
        res = choose_m(prob)
        print(f"max m with total MSE <= {label}: {res.m} "
              f"(achieved {res.achieved_error:.3e})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
