"""Monte Carlo Green function of the unit disc against the closed-form ball Green function."""
import argparse

import numpy as np

from stablecone import Ball, MCConfig, SeedSpec, get_profile, green_function
from stablecone.estimators import ball_green


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    prof, disc = get_profile(2, 1.0), Ball(1.0, (0.0, 0.0))
    pairs = [([0.2, 0.1], [-0.3, 0.2]), ([0.0, 0.0], [0.5, 0.0]), ([0.6, -0.2], [0.1, 0.7])]
    print(f"{'x':>14} {'y':>14} {'mc':>9} {'se':>9} {'exact':>9} {'rel_err':>8}")
    for x, y in pairs:
        x, y = np.asarray(x), np.asarray(y)
        g = green_function(disc, prof, x, y, MCConfig(args.paths, h=1e-4, rel_step=0.01, seed=SeedSpec(args.seed)))
        exact = ball_green(2, 1.0, 1.0, x, y)
        print(f"{str(x):>14} {str(y):>14} {g.value:9.5f} {g.std_error:9.5f} {exact:9.5f}"
              f" {g.value / exact - 1:8.3f}")


if __name__ == "__main__":
    main()
