"""Ratio band of the killed kernel against the cone shape, with one refinement step."""
import argparse
import math

import numpy as np

from stablecone import Cone, ConeExponent, MCConfig, SeedSpec, StableParams, get_profile
from stablecone.verify import band_change, beta_fit, cone_kernel_report


def sample_points(rng, theta, n):
    ang = rng.uniform(-0.85 * theta, 0.85 * theta, n)
    rad = np.exp(rng.uniform(math.log(0.1), math.log(2.0), n))
    return np.stack([rad * np.sin(ang), rad * np.cos(ang)], axis=-1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--pairs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    params, theta = StableParams(2, 1.0), math.pi / 4
    fit = beta_fit(Cone(theta, 2), params, [0.0, 1.0], mc=MCConfig(50000, seed=SeedSpec(args.seed + 1)))
    exp = ConeExponent(theta, params, fit.beta)
    rng = np.random.default_rng(args.seed)
    pairs = list(zip(sample_points(rng, theta, args.pairs), sample_points(rng, theta, args.pairs)))
    mc = MCConfig(args.paths, h=5e-3, seed=SeedSpec(args.seed))

    prof = get_profile(2, 1.0)
    coarse = cone_kernel_report(exp, prof, pairs, [0.5, 1.0, 2.0], mc)
    fine = cone_kernel_report(exp, prof, pairs, [0.5, 1.0, 2.0], mc.refined())
    print(f"beta = {fit.beta:.3f} +- {fit.std_error:.3f} on the cone of aperture pi/4")
    for name, rep in (("coarse", coarse), ("refined", fine)):
        b = rep.band
        print(f"{name:>8}: min {b['min']:.4g}  q05 {b['q05']:.4g}  q95 {b['q95']:.4g}  max {b['max']:.4g}"
              f"  excluded {rep.excluded}/{len(rep.nodes) + rep.excluded}")
    print(f"relative change of the 5-95% band edges: {band_change(coarse, fine):.3f}")


if __name__ == "__main__":
    main()
