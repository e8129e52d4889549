"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line.

Monte Carlo budgets are fixed together with the seeds, so every run is
reproducible. The summary of all criteria appears at the end of the pytest
output under "acceptance criteria".
"""
import math
import subprocess
import sys

import numpy as np
import pytest

from stablecone.bounds import (
    ConeExponent,
    green_shape_cone,
    heat_shape_c11,
    heat_shape_cone,
    survival_shape_c11,
    survival_shape_cone,
)
from stablecone.estimators import (
    MCConfig,
    ball_green,
    chapman_kolmogorov_residual,
    green_function,
    killed_kernel_many,
    lambda1_fit,
)
from stablecone.geometry import Ball, Cone, HalfLine, HalfSpace
from stablecone.kernel import (
    StableParams,
    bound_free,
    cauchy_kernel,
    get_profile,
    heat_kernel_radial,
    levy_tail_mass,
)
from stablecone.sampler import SeedSpec, sample_stable_increment
from stablecone.verify import (
    band_change,
    beta_fit,
    comparability_report,
    cone_kernel_report,
    cone_survival_report,
    factorization_trend,
)

ALPHAS = (0.5, 1.0, 1.5)
QUARTER = math.pi / 4


def cone_points(rng, n, theta, r_lo=0.1, r_hi=2.0, frac=0.85):
    """Points of the planar cone, polar angle within ``frac * theta``, log-uniform radius."""
    ang = rng.uniform(-frac * theta, frac * theta, n)
    rad = np.exp(rng.uniform(math.log(r_lo), math.log(r_hi), n))
    return np.stack([rad * np.sin(ang), rad * np.cos(ang)], axis=-1)


@pytest.fixture(scope="module")
def beta_quarter():
    """Fitted exponent of the quarter-aperture planar cone, alpha = 1."""
    return beta_fit(Cone(QUARTER, 2), StableParams(2, 1.0), [0.0, 1.0], mc=MCConfig(100_000, seed=SeedSpec(12)))


def test_01_cauchy_oracle(record):
    r = np.concatenate([[0.0], np.geomspace(1e-4, 50.0, 3000)])
    worst = 0.0
    for d in (1, 2, 3):
        prof = get_profile(d, 1.0)
        worst = max(worst, float(np.max(np.abs(prof.p1(r) / cauchy_kernel(d, 1.0, r) - 1.0))))
    record(1, "free kernel vs Cauchy closed form", worst < 1e-6, f"max relative error {worst:.2e} (< 1e-6)")


def test_02_normalization(record):
    errs = {(d, a): abs(get_profile(d, a).mass() - 1.0) for d in (1, 2) for a in ALPHAS}
    worst = max(errs.values())
    record(2, "normalization of p_1", worst < 1e-6, f"max |mass - 1| = {worst:.2e} over d in {{1,2}}, alpha in {ALPHAS}")


def test_03_free_bounds_band(record):
    r = np.concatenate([[0.0], np.geomspace(1e-3, 60.0, 600)])
    changes, bands = [], []
    for d in (1, 2):
        for a in ALPHAS:
            p = StableParams(d, a)
            x = np.zeros((len(r), d))
            x[:, 0] = r
            ref = bound_free(p, 1.0, x)
            coarse = get_profile(d, a, 64.0, 257).p1(r) / ref
            fine = get_profile(d, a).p1(r) / ref
            bands.append((coarse.min(), coarse.max()))
            changes.append(max(abs(fine.min() / coarse.min() - 1), abs(fine.max() / coarse.max() - 1)))
    finite = all(0 < lo <= hi < np.inf for lo, hi in bands)
    worst = max(changes)
    lo = min(b[0] for b in bands)
    hi = max(b[1] for b in bands)
    record(
        3, "free-kernel sharp bounds band", finite and worst < 0.10,
        f"ratio band within [{lo:.3f}, {hi:.3f}], refinement change {worst:.1e} (< 10%)",
    )


def test_04_sampler_law(record):
    n, h = 1_000_000, 0.7
    worst_cf, worst_jump = 0.0, 0.0
    for d in (1, 2):
        for a in ALPHAS:
            p = StableParams(d, a)
            rng = SeedSpec(404, 0, (d, int(10 * a))).generator()
            dirs = rng.standard_normal((5, d))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            xi = dirs * np.array([0.2, 0.5, 1.0, 2.0, 3.0])[:, None]
            x = sample_stable_increment(p, h, rng, n)
            c = np.cos(x @ xi.T)
            z = np.abs(c.mean(axis=0) - np.exp(-h * np.linalg.norm(xi, axis=1) ** a)) / (c.std(axis=0, ddof=1) / math.sqrt(n))
            worst_cf = max(worst_cf, float(z.max()))
            # jumps above r within a short step: count ~ Poisson(n h' nu(|y| > r))
            hs, radius = 1e-4, 1.0
            big = np.linalg.norm(sample_stable_increment(p, hs, rng, 4 * n), axis=1) > radius
            expect = 4 * n * hs * levy_tail_mass(p, radius)
            worst_jump = max(worst_jump, abs(big.sum() - expect) / math.sqrt(expect))
    ok = worst_cf < 4 and worst_jump < 3
    record(4, "sampler law", ok, f"max CF z = {worst_cf:.2f} (< 4), max jump-count z = {worst_jump:.2f} (< 3)")


def _kernel_nodes():
    """50 random (domain, t, x, y) nodes over a half-line, an interval, a disc and a cone."""
    rng = np.random.default_rng(505)
    nodes = []
    for _ in range(12):
        nodes.append((HalfLine(), StableParams(1, 1.5), rng.uniform(0.3, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)))
    for _ in range(12):
        nodes.append((Ball(1.0, (0.0,)), StableParams(1, 0.5), rng.uniform(0.2, 1.0), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)))
    for _ in range(13):
        ang = rng.uniform(0, 2 * math.pi, 2)
        rad = 0.8 * np.sqrt(rng.uniform(size=2))
        pts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        nodes.append((Ball(1.0, (0.0, 0.0)), StableParams(2, 1.0), rng.uniform(0.2, 1.0), pts[0], pts[1]))
    for _ in range(13):
        pts = cone_points(rng, 2, QUARTER, 0.3, 2.0)
        nodes.append((Cone(QUARTER, 2), StableParams(2, 1.0), rng.uniform(0.3, 2.0), pts[0], pts[1]))
    return nodes


def test_05_sandwich_and_symmetry(record):
    sandwich_bad, sym_bad, worst_sym = 0, 0, 0.0
    for i, (dom, p, t, x, y) in enumerate(_kernel_nodes()):
        prof = get_profile(p.d, p.alpha)
        mc = MCConfig(6000, h=t / 250, seed=SeedSpec(55, 0, (i,)))
        xy = killed_kernel_many(dom, prof, x, [t], [y], mc, mc.seed.spawn(0))[0, 0]
        yx = killed_kernel_many(dom, prof, y, [t], [x], mc, mc.seed.spawn(1))[0, 0]
        free = float(heat_kernel_radial(prof, t, np.array([np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(y))]))[0])
        if xy.value < -3 * xy.std_error or xy.value > free + 3 * xy.std_error:
            sandwich_bad += 1
        z = xy.joint_z(yx)
        worst_sym = max(worst_sym, z)
        sym_bad += z > 3
    record(
        5, "killed-kernel sandwich and symmetry", sandwich_bad == 0 and sym_bad == 0,
        f"50 nodes: sandwich violations {sandwich_bad}, symmetry beyond 3 joint sigma {sym_bad} (max z {worst_sym:.2f})",
    )


def test_06_chapman_kolmogorov(record):
    cases = [
        (HalfLine(), StableParams(1, 1.0), 0.5, 0.5, 1.0, 1.5),
        (HalfLine(), StableParams(1, 1.5), 0.4, 0.8, 0.6, 1.2),
        (Ball(1.0, (0.0,)), StableParams(1, 1.0), 0.3, 0.3, 0.0, 0.4),
        (Ball(1.0, (0.0,)), StableParams(1, 0.5), 0.2, 0.4, -0.3, 0.5),
    ]
    zs = []
    for i, (dom, p, s, t, x, y) in enumerate(cases):
        res = chapman_kolmogorov_residual(dom, get_profile(1, p.alpha), s, t, x, y, MCConfig(20000, h=2e-3, seed=SeedSpec(66, 0, (i,))))
        zs.append(res.z)
    record(6, "Chapman-Kolmogorov residual", max(zs) < 3, "z = " + ", ".join(f"{z:.2f}" for z in zs) + " (< 3)")


def test_07_half_space_exponent(record):
    fits = []
    for a in ALPHAS:
        f = beta_fit(HalfLine(), StableParams(1, a), [1.0], mc=MCConfig(100_000, seed=SeedSpec(77, 0, (int(10 * a),))))
        fits.append((f"halfline a={a}", f.beta, a / 2))
    f = beta_fit(HalfSpace(2), StableParams(2, 1.0), [0.0, 1.0], mc=MCConfig(100_000, seed=SeedSpec(77, 1)))
    fits.append(("halfspace d=2 a=1", f.beta, 0.5))
    ok = all(abs(b - target) <= 0.05 for _, b, target in fits)
    record(7, "half-space exponent", ok, "; ".join(f"{name}: {b:.3f} vs {t}" for name, b, t in fits))


def test_08_cone_kernel_band(record, beta_quarter, cauchy2):
    rng = np.random.default_rng(808)
    pairs = list(zip(cone_points(rng, 20, QUARTER), cone_points(rng, 20, QUARTER)))
    exp = ConeExponent(QUARTER, StableParams(2, 1.0), beta_quarter.beta)
    mc = MCConfig(20000, h=5e-3, seed=SeedSpec(88))
    coarse = cone_kernel_report(exp, cauchy2, pairs, [0.5, 1.0, 2.0], mc)
    fine = cone_kernel_report(exp, cauchy2, pairs, [0.5, 1.0, 2.0], mc.refined())
    change = band_change(coarse, fine)
    finite = 0 < coarse.band["min"] and coarse.band["max"] < np.inf
    record(
        8, "heat kernel band on the cone", finite and change < 0.20 and coarse.excluded <= 12,
        f"beta={beta_quarter.beta:.3f}, band [{coarse.band['min']:.3f}, {coarse.band['max']:.3f}], "
        f"5-95% edges move {change:.1%} (< 20%), min/max move {band_change(coarse, fine, ('min', 'max')):.1%}, "
        f"excluded {coarse.excluded}/60",
    )


def test_09_cone_survival_band(record, beta_quarter):
    rng = np.random.default_rng(909)
    pts = list(cone_points(rng, 20, QUARTER))
    exp = ConeExponent(QUARTER, StableParams(2, 1.0), beta_quarter.beta)
    mc = MCConfig(20000, h=5e-3, seed=SeedSpec(99))
    coarse = cone_survival_report(exp, pts, [0.5, 1.0, 2.0], mc)
    fine = cone_survival_report(exp, pts, [0.5, 1.0, 2.0], mc.refined())
    change = band_change(coarse, fine)
    # exact reduction to the C^{1,1} shape
    bitwise = True
    for d in (1, 2, 3):
        for a in ALPHAS:
            p = StableParams(d, a)
            hs = ConeExponent.half_space(p)
            dom = HalfLine() if d == 1 else HalfSpace(d)
            xs = np.random.default_rng(d).normal(size=(200, d))
            ys = np.random.default_rng(d + 10).normal(size=(200, d))
            for t in (0.3, 1.0, 7.0):
                bitwise &= np.array_equal(survival_shape_cone(hs, t, xs), survival_shape_c11(dom, p, t, xs))
                bitwise &= np.array_equal(heat_shape_cone(hs, t, xs, ys), heat_shape_c11(dom, p, t, xs, ys))
    record(
        9, "survival band on the cone", change < 0.20 and coarse.band["min"] > 0 and bitwise,
        f"band [{coarse.band['min']:.3f}, {coarse.band['max']:.3f}], 5-95% edges move {change:.1%} (< 20%), "
        f"half-space reduction bitwise: {bitwise}",
    )


def test_10_green_function(record, beta_quarter, cauchy2):
    rng = np.random.default_rng(1010)
    disc = Ball(1.0, (0.0, 0.0))
    errs = []
    for i in range(10):
        while True:
            x, y = rng.uniform(-0.75, 0.75, (2, 2))
            if np.linalg.norm(x) < 0.75 and np.linalg.norm(y) < 0.75 and np.linalg.norm(x - y) > 0.2:
                break
        g = green_function(disc, cauchy2, x, y, MCConfig(20000, h=5e-5, rel_step=0.005, seed=SeedSpec(1010, 0, (i,))))
        errs.append(abs(g.value / ball_green(2, 1.0, 1.0, x, y) - 1))
    exp = ConeExponent(QUARTER, StableParams(2, 1.0), beta_quarter.beta)
    cone = exp.cone
    pts_x, pts_y = cone_points(rng, 8, QUARTER, 0.3, 1.5), cone_points(rng, 8, QUARTER, 0.3, 1.5)
    grid = [{"i": i} for i in range(8)]
    mc = MCConfig(10000, h=1e-4, rel_step=0.01, seed=SeedSpec(1011))

    def lhs_for(mc):
        def lhs(node):
            i = node["i"]
            g = green_function(cone, cauchy2, pts_x[i], pts_y[i], MCConfig(mc.n_paths, mc.h, mc.seed.spawn(i), rel_step=mc.rel_step), cone_exponent=exp)
            return g.value, g.std_error
        return lhs

    rhs = lambda node: green_shape_cone(exp, pts_x[node["i"]], pts_y[node["i"]])  # noqa: E731
    coarse = comparability_report("eGf", lhs_for(mc), rhs, grid)
    fine = comparability_report("eGf", lhs_for(mc.refined()), rhs, grid)
    change = band_change(coarse, fine, ("min", "max"))
    worst = max(errs)
    record(
        10, "Green function", worst < 0.05 and change < 0.20,
        f"disc oracle max relative error {worst:.1%} (< 5%); cone band [{coarse.band['min']:.3f}, "
        f"{coarse.band['max']:.3f}], refinement move {change:.1%} (< 20%)",
    )


def test_11_scaling(record, cauchy2):
    rng = np.random.default_rng(1111)
    exp = ConeExponent(QUARTER, StableParams(2, 1.0), 0.9)
    cone = exp.cone
    worst = 0.0
    count = 0
    while count < 100:
        t = float(np.exp(rng.uniform(-3, 3)))
        x, y = rng.normal(size=(2, 2)) * 2
        lhs = heat_shape_cone(exp, t, x, y)
        rhs = t ** (-2.0) * heat_shape_cone(exp, 1.0, x / t, y / t)
        if lhs == 0 and rhs == 0:
            continue
        # rounding in the signed distance is amplified by |x| / delta(x) near the boundary
        cond = 1 + np.linalg.norm(x) / cone.delta(x) + np.linalg.norm(y) / cone.delta(y)
        worst = max(worst, abs(lhs / rhs - 1) / (np.finfo(float).eps * cond))
        count += 1
    zs = []
    x, y = np.array([0.1, 0.9]), np.array([-0.2, 0.6])
    for j, t in enumerate((0.5, 2.0, 4.0)):
        a = killed_kernel_many(cone, cauchy2, x, [t], [y], MCConfig(40000, h=t / 400, seed=SeedSpec(1112, 0, (j, 0))))[0, 0]
        b = killed_kernel_many(cone, cauchy2, x / t, [1.0], [y / t], MCConfig(40000, h=1 / 400, seed=SeedSpec(1112, 0, (j, 1))))[0, 0]
        zs.append(abs(a.value - t ** (-2.0) * b.value) / math.hypot(a.std_error, t ** (-2.0) * b.std_error))
    ok = worst < 64 and max(zs) < 3
    record(
        11, "scaling identities", ok,
        f"shape: max deviation {worst:.1f} conditioned ulps (< 64) over 100 triples; estimator z = " + ", ".join(f"{z:.2f}" for z in zs),
    )


def test_12_large_time_failure(record, cauchy1, cauchy2):
    interval = Ball(1.0, (0.0,))
    p = StableParams(1, 1.0)
    ts = [1.0, 2.0, 4.0, 8.0]
    trend = factorization_trend(interval, cauchy1, [0.0], [0.3], ts, MCConfig(400_000, h=5e-3, residual=1.0, seed=SeedSpec(1212)))
    lam = lambda1_fit(interval, p, [[0.0], [0.3], [-0.5]], [1, 2, 3, 4, 5, 6], MCConfig(200_000, h=5e-3, seed=SeedSpec(1213)))
    rel = abs(trend.growth_rate / lam.rate - 1)
    cone = Cone(QUARTER, 2)
    ctrl = factorization_trend(cone, cauchy2, [0.0, 1.0], [0.3, 1.2], ts, MCConfig(50_000, h=5e-3, residual=1.0, seed=SeedSpec(1214)))
    r, se = np.array(ctrl.ratio), np.array(ctrl.ratio_se)
    spread = r.max() / r.min()
    # no growth across the last doubling and a bounded spread
    flat = r[-1] <= r[-2] + 3 * math.hypot(se[-1], se[-2])
    ok = trend.increasing and rel < 0.30 and flat and spread < 4.0
    record(
        12, "large-time factorisation failure", ok,
        f"interval ratios {', '.join(f'{v:.3g}' for v in trend.ratio)} (increasing beyond CI: {trend.increasing}); "
        f"growth rate {trend.growth_rate:.3f} vs lambda1 {lam.rate:.3f} ({rel:.1%}, < 30%); "
        f"cone ratios {', '.join(f'{v:.3g}' for v in ctrl.ratio)} (spread {spread:.2f} < 4, flat at the end: {flat})",
    )


def test_13_determinism(record, tmp_path):
    config = tmp_path / "exp.cfg"
    config.write_text(
        "command = pkill\n[model]\nalpha = 1.0, d = 2\ndomain = cone:0.7853981634\n"
        "[grid]\nt = 0.5 1\nx = 0, 1; 0.3, 1.2\ny = 0, 0.6\n[mc]\nn_paths = 5000\nh = 0.01\n"
    )
    outputs = []
    for k, (fmt, workers) in enumerate([("csv", 1), ("csv", 1), ("csv", 2), ("json", 1), ("json", 1)]):
        out = tmp_path / f"run{k}"
        cmd = [sys.executable, "-m", "stablecone.cli", "--config", str(config), "--seed", "42",
               "--workers", str(workers), "--format", fmt, "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)
        outputs.append((out / f"pkill.{fmt}").read_bytes())
    same = outputs[0] == outputs[1] == outputs[2] and outputs[3] == outputs[4]
    record(13, "determinism", same, "identical config and seed give byte-identical csv and json (workers 1 and 2)")
