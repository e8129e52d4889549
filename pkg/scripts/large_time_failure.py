"""Heat kernel factorization on a bounded interval versus a cone as t grows.

On the interval the ratio p^D / (P_x P_y p) grows roughly like exp(lambda1 t);
on the cone it stays in a bounded band.
"""
import argparse
import math

from stablecone import Ball, Cone, MCConfig, SeedSpec, StableParams, get_profile, lambda1_fit
from stablecone.verify import factorization_trend

TIMES = [1.0, 2.0, 4.0, 8.0]


def show(label, trend):
    print(label)
    for t, r, se in zip(trend.ts, trend.ratio, trend.ratio_se):
        print(f"  t = {t:4g}  ratio = {r:11.5g} +- {se:.2g}")
    print(f"  growth rate {trend.growth_rate:.3f} +- {trend.growth_rate_se:.3f}, increasing: {trend.increasing}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    mc = MCConfig(args.paths, h=5e-3, residual=1.0, seed=SeedSpec(args.seed))
    interval = Ball(1.0, (0.0,))
    show("interval (-1, 1), alpha = 1", factorization_trend(interval, get_profile(1, 1.0), [0.0], [0.3], TIMES, mc))
    lam = lambda1_fit(interval, StableParams(1, 1.0), [[0.0], [0.3], [-0.5]], [1, 2, 3, 4, 5, 6],
                      MCConfig(2 * args.paths, h=5e-3, seed=SeedSpec(args.seed + 1)))
    print(f"  decay rate of survival: {lam.rate:.3f} +- {lam.std_error:.3f}")

    cone = Cone(math.pi / 4, 2)
    show("cone of aperture pi/4, alpha = 1",
         factorization_trend(cone, get_profile(2, 1.0), [0.0, 1.0], [0.3, 1.2], TIMES, mc.refined()))


if __name__ == "__main__":
    main()
