"""Comparability bands, exponent fits, doubling and the large-time check.

A comparability statement ``lhs ~ rhs`` holds when ``lhs / rhs`` stays in a
band ``[1/c, c]``. With unknown ``c`` the measurable content is that the band
is finite and does not drift when the Monte Carlo resolution is refined.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bounds import ConeExponent, heat_shape_cone, survival_shape_cone
from .estimators import MCConfig, _points, kernel_contributions, simulate_for_kernel
from .geometry import Domain
from .kernel import RadialProfile, StableParams, heat_kernel_radial
from .sampler import MCEstimate, SeedSpec, binomial_estimate, default_step, run_paths, time_grid


class UninformativeGrid(RuntimeError):
    """Every grid node fell below the Monte Carlo noise floor."""


class InsufficientPaths(RuntimeError):
    """Survival estimates are indistinguishable from zero."""


@dataclass
class RatioReport:
    statement: str
    grid: str
    nodes: list[dict]
    band: dict
    excluded: int
    refinement_stability: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def spread(self) -> float:
        return self.band["max"] / self.band["min"]


def band_of(ratios: np.ndarray) -> dict:
    return {
        "min": float(np.min(ratios)),
        "max": float(np.max(ratios)),
        "q05": float(np.quantile(ratios, 0.05)),
        "q95": float(np.quantile(ratios, 0.95)),
    }


def comparability_report(
    statement: str,
    lhs: Callable[[dict], tuple[float, float]],
    rhs: Callable[[dict], float],
    grid: Sequence[dict],
    grid_label: str = "",
    noise_sigmas: float = 3.0,
) -> RatioReport:
    """Evaluate ``lhs / rhs`` over ``grid`` (dicts of node coordinates).

    ``lhs`` returns ``(value, std_error)``; nodes where ``value <= noise_sigmas
    * std_error`` or ``rhs <= 0`` are excluded and counted.
    """
    if not grid:
        raise ValueError("grid must be nonempty")
    nodes, ratios, excluded = [], [], 0
    for node in grid:
        value, se = lhs(node)
        ref = float(rhs(node))
        if value <= noise_sigmas * se or ref <= 0 or value <= 0:
            excluded += 1
            continue
        ratio = value / ref
        nodes.append({**_plain(node), "lhs": value, "lhs_se": se, "rhs": ref, "ratio": ratio, "ratio_se": se / ref})
        ratios.append(ratio)
    if not ratios:
        raise UninformativeGrid(f"{statement}: all {len(grid)} nodes are below the noise floor")
    return RatioReport(statement, grid_label, nodes, band_of(np.array(ratios)), excluded)


def _plain(node: dict) -> dict:
    out = {}
    for k, v in node.items():
        if isinstance(v, np.ndarray):
            out[k] = [float(c) for c in v.ravel()]
        elif isinstance(v, (np.floating, np.integer)):
            out[k] = v.item()
        else:
            out[k] = v
    return out


def band_change(coarse: RatioReport, fine: RatioReport, keys: Sequence[str] = ("q05", "q95")) -> float:
    """Largest relative move of the band edges between two resolutions."""
    return max(abs(fine.band[k] / coarse.band[k] - 1.0) for k in keys)


def with_stability(coarse: RatioReport, fine: RatioReport, keys: Sequence[str] = ("q05", "q95")) -> RatioReport:
    coarse.refinement_stability = band_change(coarse, fine, keys)
    return coarse


# ---------------------------------------------------------------------------
# cone exponent


@dataclass
class BetaFit:
    beta: float
    std_error: float
    ts: list[float]
    survival: list[float]
    survival_se: list[float]
    n_paths: int

    @property
    def ci(self) -> tuple[float, float]:
        return self.beta - 1.96 * self.std_error, self.beta + 1.96 * self.std_error


def default_beta_times(params: StableParams, x0, decades: float = 2.0, n: int = 9, z_max: float = 0.25) -> np.ndarray:
    """Geometric times with ``|t^{-1/alpha} x0| <= z_max`` throughout."""
    r = float(np.linalg.norm(np.atleast_1d(x0)))
    t_lo = (r / z_max) ** params.alpha
    return t_lo * np.logspace(0.0, decades, n)


def _wls(logt: np.ndarray, logs: np.ndarray, var: np.ndarray) -> float:
    w = 1.0 / var
    tm = np.sum(w * logt) / np.sum(w)
    sm = np.sum(w * logs) / np.sum(w)
    return float(np.sum(w * (logt - tm) * (logs - sm)) / np.sum(w * (logt - tm) ** 2))


def beta_fit(
    domain: Domain,
    params: StableParams,
    x0,
    ts: Sequence[float] | None = None,
    mc: MCConfig = MCConfig(100_000),
    rel_step: float = 0.01,
    groups: int = 16,
) -> BetaFit:
    """``beta = -alpha * d log P(tau > t) / d log t`` over a large-time grid.

    Paths are monitored on a grid that is uniform (step ``h``) until the
    relative step ``rel_step`` takes over, so the monitoring is scale-free at
    large times. The slope is a weighted least-squares fit with binomial
    weights; since all nodes share paths, its standard error comes from the
    spread of the slope over ``groups`` disjoint batches of paths.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    ts = default_beta_times(params, x0) if ts is None else np.asarray(sorted(ts), dtype=float)
    if ts[-1] / ts[0] < 99.0:
        raise ValueError("the time grid must span at least two decades")
    if np.any(np.linalg.norm(x0) * ts ** (-1.0 / params.alpha) >= 1.0):
        raise ValueError("need |t^{-1/alpha} x0| < 1 on the whole grid")
    delta = float(domain.delta(x0))
    h = 1e-3 * min(delta**params.alpha, ts[0]) if mc.h is None else mc.h
    grid = time_grid(ts[-1], h, rel_step=rel_step, include=ts)
    batch = run_paths(domain, params, x0, grid, mc.n_paths, mc.seed, workers=mc.workers)
    alive = np.array([np.sum(batch.tau > t) for t in ts])
    n = mc.n_paths
    keep = alive >= 10
    if keep.sum() < 3:
        raise InsufficientPaths("fewer than three grid times keep 10 surviving paths")
    surv = alive / n

    def slope(alive_counts: np.ndarray, total: int) -> float:
        p = alive_counts[keep] / total
        if np.any(p <= 0):
            return math.nan
        return _wls(np.log(ts[keep]), np.log(p), (1 - p) / (total * p))

    beta = -params.alpha * slope(alive, n)
    # batch means over disjoint groups of paths
    parts = np.array_split(np.arange(n), groups)
    betas = []
    for idx in parts:
        counts = np.array([np.sum(batch.tau[idx] > t) for t in ts])
        betas.append(-params.alpha * slope(counts, len(idx)))
    betas = np.array([b for b in betas if np.isfinite(b)])
    se = float(betas.std(ddof=1) / math.sqrt(len(betas))) if len(betas) > 1 else math.inf
    if not 0.0 <= beta < params.alpha:
        raise ValueError(f"fitted beta={beta:.4f} violates 0 <= beta < alpha={params.alpha}")
    return BetaFit(
        beta, se, [float(t) for t in ts], [float(s) for s in surv],
        [float(math.sqrt(s * (1 - s) / n)) for s in surv], n,
    )


# ---------------------------------------------------------------------------
# doubling


def doubling_check(
    domain: Domain, params: StableParams, nodes: Sequence[dict], mc: MCConfig
) -> RatioReport:
    """Band of ``P_x(tau > t) / P_x(tau > t/2)`` over nodes ``{"t": ..., "x": ...}``."""
    grid = list(nodes)

    def lhs(node):
        t, x = float(node["t"]), np.atleast_1d(node["x"])
        if not domain.contains(x):
            return 0.0, 0.0
        h = default_step(t / 2) if mc.h is None else mc.h
        batch = run_paths(domain, params, x, time_grid(t, h, include=[t / 2]), mc.n_paths, mc.seed.spawn(node["id"]), workers=mc.workers)
        half = int(np.sum(batch.tau > t / 2))
        full = int(np.sum(batch.tau > t))
        if half == 0:
            return 0.0, 0.0
        p = full / half
        return p, math.sqrt(max(p * (1 - p), 1.0 / half) / half)

    report = comparability_report("doubling", lhs, lambda node: 1.0, grid, "t x")
    return report


# ---------------------------------------------------------------------------
# kernel and survival bands on cones


def cone_kernel_report(
    exp: ConeExponent,
    profile: RadialProfile,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    ts: Sequence[float],
    mc: MCConfig,
    statement: str = "ppu",
) -> RatioReport:
    """Band of the killed-kernel estimate over the explicit heat shape on a cone."""
    cone = exp.cone
    cache: dict[int, np.ndarray] = {}
    grid = []
    for i, (x, y) in enumerate(pairs):
        for t in ts:
            grid.append({"pair": i, "t": float(t), "x": np.asarray(x, float), "y": np.asarray(y, float)})

    def lhs(node):
        i = node["pair"]
        if i not in cache:
            x, y = pairs[i]
            batch, starts = simulate_for_kernel(cone, exp.params, x, list(ts), mc, mc.seed.spawn(i))
            cache[i] = {float(t): MCEstimate.from_samples(
                kernel_contributions(batch, profile, float(t), _points(y, exp.params.d), starts[float(t)])[:, 0]
            ) for t in ts}
        est = cache[i][node["t"]]
        return est.value, est.std_error

    def rhs(node):
        return heat_shape_cone(exp, node["t"], node["x"], node["y"])

    return comparability_report(statement, lhs, rhs, grid, f"{len(pairs)} pairs x t in {list(ts)}")


def cone_survival_report(
    exp: ConeExponent, points: Sequence[np.ndarray], ts: Sequence[float], mc: MCConfig
) -> RatioReport:
    """Band of path-fraction survival over ``survival_shape_cone``."""
    cone = exp.cone
    cache: dict[int, list[MCEstimate]] = {}
    grid = [{"point": i, "t": float(t), "x": np.asarray(x, float)} for i, x in enumerate(points) for t in ts]
    ts_sorted = sorted(float(t) for t in ts)

    def lhs(node):
        i = node["point"]
        if i not in cache:
            h = default_step(ts_sorted[0]) if mc.h is None else mc.h
            batch = run_paths(
                cone, exp.params, points[i], time_grid(ts_sorted[-1], h, include=ts_sorted),
                mc.n_paths, mc.seed.spawn(i), workers=mc.workers,
            )
            cache[i] = {t: binomial_estimate(int(np.sum(batch.tau > t)), mc.n_paths) for t in ts_sorted}
        est = cache[i][node["t"]]
        return est.value, est.std_error

    return comparability_report(
        "eetGs", lhs, lambda node: survival_shape_cone(exp, node["t"], node["x"]), grid,
        f"{len(points)} points x t in {list(ts)}",
    )


# ---------------------------------------------------------------------------
# factorisation at large times


@dataclass
class FactorizationTrend:
    ts: list[float]
    ratio: list[float]
    ratio_se: list[float]
    growth_rate: float
    growth_rate_se: float
    kernel: list[float]
    survival_x: list[float]
    survival_y: list[float]

    @property
    def increasing(self) -> bool:
        """Every step up exceeds three joint standard errors."""
        r, se = np.array(self.ratio), np.array(self.ratio_se)
        return bool(np.all(np.diff(r) > 3 * np.hypot(se[1:], se[:-1])))


def factorization_trend(
    domain: Domain,
    profile: RadialProfile,
    x,
    y,
    ts: Sequence[float],
    mc: MCConfig,
) -> FactorizationTrend:
    """``p^D_t(x, y) / (P_x(tau > t) P_y(tau > t) p_t(x - y))`` along ``ts``.

    The growth rate is the weighted slope in ``t`` of
    ``log(p^D_t / (P_x P_y))``, i.e. of the ratio with the free-kernel factor
    removed; on a bounded domain it tends to the principal eigenvalue.
    """
    params = profile.params
    ts = sorted(float(t) for t in ts)
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    bx, sx = simulate_for_kernel(domain, params, x, ts, mc, mc.seed.spawn(0))
    by, _ = simulate_for_kernel(domain, params, y, ts, mc, mc.seed.spawn(1))
    out_r, out_se, logs, log_var, kern, sxs, sys_ = [], [], [], [], [], [], []
    dist = float(np.linalg.norm(x - y))
    for t in ts:
        k = MCEstimate.from_samples(kernel_contributions(bx, profile, t, _points(y, params.d), sx[t])[:, 0])
        px = binomial_estimate(int(np.sum(bx.tau > t)), len(bx))
        py = binomial_estimate(int(np.sum(by.tau > t)), len(by))
        if k.value <= 0 or px.value <= 0 or py.value <= 0:
            raise InsufficientPaths(f"no usable survivors at t={t}")
        free = float(heat_kernel_radial(profile, t, np.array([dist]))[0])
        ratio = k.value / (px.value * py.value * free)
        # relative errors; the kernel and P_x share paths, treated as independent (conservative in practice)
        rel = math.sqrt((k.std_error / k.value) ** 2 + (px.std_error / px.value) ** 2 + (py.std_error / py.value) ** 2)
        out_r.append(ratio)
        out_se.append(ratio * rel)
        logs.append(math.log(k.value / (px.value * py.value)))
        log_var.append(rel**2)
        kern.append(k.value)
        sxs.append(px.value)
        sys_.append(py.value)
    t_arr, l_arr, w = np.array(ts), np.array(logs), 1.0 / np.array(log_var)
    tm = np.sum(w * t_arr) / np.sum(w)
    lm = np.sum(w * l_arr) / np.sum(w)
    sxx = np.sum(w * (t_arr - tm) ** 2)
    rate = float(np.sum(w * (t_arr - tm) * (l_arr - lm)) / sxx)
    return FactorizationTrend(ts, out_r, out_se, rate, float(math.sqrt(1 / sxx)), kern, sxs, sys_)
