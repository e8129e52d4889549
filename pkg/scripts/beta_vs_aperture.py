"""Survival exponent on half-lines and on planar cones of several apertures.

Half-lines should give beta = alpha / 2; for cones the fitted exponent is
printed with its 95% interval so the dependence on the aperture can be read off.
"""
import argparse
import math

from stablecone import Cone, HalfLine, MCConfig, SeedSpec, StableParams, beta_fit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=50000)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()
    mc = MCConfig(args.paths, seed=SeedSpec(args.seed))

    print(f"{'domain':>14} {'alpha':>6} {'beta':>7} {'ci_lo':>7} {'ci_hi':>7}")
    for alpha in (0.5, 1.0, 1.5):
        fit = beta_fit(HalfLine(), StableParams(1, alpha), [1.0], mc=mc)
        print(f"{'halfline':>14} {alpha:6.2f} {fit.beta:7.3f} {fit.ci[0]:7.3f} {fit.ci[1]:7.3f}")
    for k in (1, 2, 3):
        theta = k * math.pi / 4
        fit = beta_fit(Cone(theta, 2), StableParams(2, 1.0), [0.0, 1.0], mc=mc)
        label = f"cone {k}pi/4"
        print(f"{label:>14} {1.0:6.2f} {fit.beta:7.3f} {fit.ci[0]:7.3f} {fit.ci[1]:7.3f}")


if __name__ == "__main__":
    main()
