"""Monte Carlo estimators built on grid-monitored paths.

The killed kernel uses the hitting formula started at an intermediate time
``u`` (``u = 0`` is the textbook form)::

    p^D_t(x, y) = E_x[tau > u; p_{t-u}(X_u - y)] - E_x[u < tau < t; p_{t-tau}(X_tau - y)]

Both forms are exact for the grid-killed process because ``s -> p_{t-s}(X_s - y)``
is a martingale; starting at ``u > 0`` keeps the variance proportional to the
surviving mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .geometry import Domain, FullSpace
from .kernel import RadialProfile, StableParams, heat_kernel_radial
from .sampler import MCEstimate, PathBatch, SeedSpec, binomial_estimate, default_step, run_paths, time_grid


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 20_000
    h: float | None = None  # None: 1e-3 * (smallest time of interest)
    seed: SeedSpec = SeedSpec(0)
    workers: int = 1
    residual: float | None = None  # hitting-formula window t - u; None: t / 2
    rel_step: float | None = None  # graded grid: step max(h, rel_step * t)

    def refined(self) -> "MCConfig":
        """Twice the paths, half the step."""
        h = None if self.h is None else self.h / 2
        rel = None if self.rel_step is None else self.rel_step / 2
        return MCConfig(2 * self.n_paths, h, self.seed.spawn(1), self.workers, self.residual, rel)


def _points(y, d: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if d == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    return np.atleast_2d(y)


def _start_time(t: float, residual: float | None) -> float:
    if residual is None:
        return 0.5 * t
    return max(t - residual, 0.0)


def kernel_contributions(
    batch: PathBatch, profile: RadialProfile, t: float, ys: np.ndarray, u: float = 0.0
) -> np.ndarray:
    """Per-path summands ``(n_paths, len(ys))`` of the hitting formula at time ``t`` started at ``u``."""
    d = profile.params.d
    ys = _points(ys, d)
    n = len(batch)
    if u == 0.0:
        pos0 = np.broadcast_to(batch.start, (n, d))
        alive = np.ones(n, dtype=bool)
        hit = batch.tau < t
    else:
        if u not in batch.snapshots:
            raise ValueError(f"batch lacks a snapshot at u={u}")
        pos0 = batch.snapshots[u]
        alive = ~np.isnan(pos0[:, 0])
        hit = (batch.tau > u) & (batch.tau < t)
    out = np.zeros((n, len(ys)))
    if np.any(alive):
        r = np.linalg.norm(pos0[alive, None, :] - ys[None, :, :], axis=-1)
        out[alive] = heat_kernel_radial(profile, t - u, r)
    if np.any(hit):
        r = np.linalg.norm(batch.exit_position[hit, None, :] - ys[None, :, :], axis=-1)
        out[hit] -= heat_kernel_radial(profile, (t - batch.tau[hit])[:, None], r)
    return out


def simulate_for_kernel(
    domain: Domain,
    params: StableParams,
    x,
    ts: Sequence[float],
    mc: MCConfig,
    seed: SeedSpec | None = None,
) -> tuple[PathBatch, dict[float, float]]:
    """One path ensemble from ``x`` serving the killed kernel at every time in ``ts``."""
    ts = sorted(float(t) for t in ts)
    if ts[0] <= 0:
        raise ValueError("times must be positive")
    starts = {t: _start_time(t, mc.residual) for t in ts}
    h = default_step(ts[0]) if mc.h is None else mc.h
    grid = time_grid(ts[-1], min(h, ts[-1]), rel_step=mc.rel_step, include=list(ts) + [u for u in starts.values() if u > 0])
    batch = run_paths(
        domain, params, x, grid, mc.n_paths, mc.seed if seed is None else seed,
        snapshot_times=sorted(set(starts.values()) | {0.0}), workers=mc.workers,
    )
    return batch, starts


def killed_kernel_many(
    domain: Domain,
    profile: RadialProfile,
    x,
    ts: Sequence[float],
    ys,
    mc: MCConfig,
    seed: SeedSpec | None = None,
) -> np.ndarray:
    """Estimates ``p^D_t(x, y)`` for every ``t`` in ``ts`` and ``y`` in ``ys``; array of MCEstimate."""
    params = profile.params
    ys = _points(ys, params.d)
    seed = mc.seed if seed is None else seed
    batch, starts = simulate_for_kernel(domain, params, x, ts, mc, seed)
    inside_y = np.atleast_1d(domain.contains(ys))
    out = np.empty((len(ts), len(ys)), dtype=object)
    for i, t in enumerate(ts):
        contrib = kernel_contributions(batch, profile, float(t), ys, starts[float(t)])
        for j in range(len(ys)):
            if inside_y[j]:
                out[i, j] = MCEstimate.from_samples(contrib[:, j], seed)
            else:
                out[i, j] = MCEstimate(0.0, 0.0, mc.n_paths, seed)
    return out


def killed_kernel(domain: Domain, profile: RadialProfile, t: float, x, y, mc: MCConfig) -> MCEstimate:
    """Hitting-formula estimate of ``p^D_t(x, y)``; raw mean, never clamped."""
    if t <= 0:
        raise ValueError("time must be positive")
    return killed_kernel_many(domain, profile, x, [t], [y], mc)[0, 0]


def naive_killed_kernel(
    domain: Domain, profile: RadialProfile, t: float, x, y, radius: float, mc: MCConfig
) -> MCEstimate:
    """Cross-check: fraction of surviving paths ending in ``B(y, radius)`` over its volume."""
    params = profile.params
    h = default_step(t) if mc.h is None else mc.h
    batch = run_paths(domain, params, x, time_grid(t, h), mc.n_paths, mc.seed, workers=mc.workers)
    y = _points(y, params.d)[0]
    end = batch.final_position
    near = np.zeros(len(batch), dtype=bool)
    ok = ~np.isnan(end[:, 0])
    near[ok] = np.linalg.norm(end[ok] - y, axis=-1) < radius
    vol = math.pi ** (params.d / 2) / math.gamma(params.d / 2 + 1) * radius**params.d
    return MCEstimate.from_samples(near / vol, mc.seed)


# ---------------------------------------------------------------------------
# quadrature rules over domains (one-dimensional domains only)


def interval_rule(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on ``(lo, hi)``."""
    s, w = np.polynomial.legendre.leggauss(n)
    mid, half = (hi + lo) / 2, (hi - lo) / 2
    return mid + half * s, half * w


def halfline_rule(n: int, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on ``(0, inf)`` through ``y = scale (1 + s) / (1 - s)``."""
    s, w = np.polynomial.legendre.leggauss(n)
    y = scale * (1 + s) / (1 - s)
    return y, w * 2 * scale / (1 - s) ** 2


def composite_rule(edges: Sequence[float], n_per: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre panels between consecutive finite ``edges``."""
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        y, w = interval_rule(lo, hi, n_per)
        nodes.append(y)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def default_rule(domain: Domain, n: int = 400) -> tuple[np.ndarray, np.ndarray]:
    from .geometry import Ball, HalfLine, HalfSpace

    if domain.d != 1:
        raise NotImplementedError("default quadrature rules exist for one-dimensional domains only")
    if isinstance(domain, Ball):
        c, r = domain.center[0], domain.radius
        # panels graded towards both endpoints, where the kernel has its boundary layer
        g = np.array([0.0, 1e-3, 1e-2, 0.05, 0.15, 0.35, 0.65, 0.85, 0.95, 0.99, 0.999, 1.0])
        return composite_rule(c - r + 2 * r * g, max(4, n // (len(g) - 1)))
    if isinstance(domain, (HalfLine, HalfSpace)):
        edges = [0.0, 1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0]
        y1, w1 = composite_rule(edges, max(4, n // 12))
        y2, w2 = halfline_rule(max(8, n // 4), scale=8.0)
        return np.concatenate([y1, y2 + 8.0]), np.concatenate([w1, w2])
    if isinstance(domain, FullSpace):
        y, w = halfline_rule(n // 2, 1.0)
        return np.concatenate([-y[::-1], y]), np.concatenate([w[::-1], w])
    raise NotImplementedError(f"no default rule for {domain!r}")


def survival_from_kernel(
    domain: Domain, profile: RadialProfile, x, t: float, mc: MCConfig, rule=None
) -> MCEstimate:
    """``P_x(tau > t)`` as the quadrature of the killed kernel over the domain."""
    params = profile.params
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not domain.contains(x):
        return MCEstimate(0.0, 0.0, mc.n_paths, mc.seed)
    ys, ws = default_rule(domain) if rule is None else rule
    batch, starts = simulate_for_kernel(domain, params, x, [t], mc)
    contrib = kernel_contributions(batch, profile, t, ys, starts[t])
    return MCEstimate.from_samples(contrib @ ws, mc.seed)


# ---------------------------------------------------------------------------
# Chapman-Kolmogorov


@dataclass(frozen=True)
class Residual:
    value: float
    std_error: float

    @property
    def z(self) -> float:
        return abs(self.value) / self.std_error if self.std_error > 0 else (0.0 if self.value == 0 else math.inf)


def chapman_kolmogorov_residual(
    domain: Domain, profile: RadialProfile, s: float, t: float, x, y, mc: MCConfig, rule=None
) -> Residual:
    """``int p^D_s(x, z) p^D_t(z, y) dz - p^D_{s+t}(x, y)`` with a delta-method error bar.

    ``p^D_t(z, y)`` is read as ``p^D_t(y, z)`` (symmetry), so two path ensembles
    suffice: one from ``x`` for times ``s`` and ``s + t``, one from ``y`` for ``t``.
    """
    params = profile.params
    zs, ws = default_rule(domain) if rule is None else rule
    y_pt = _points(y, params.d)
    bx, sx = simulate_for_kernel(domain, params, x, [s, s + t], mc, mc.seed.spawn(0))
    by, sy = simulate_for_kernel(domain, params, y, [t], mc, mc.seed.spawn(1))
    a = kernel_contributions(bx, profile, s, zs, sx[s])
    c = kernel_contributions(bx, profile, s + t, y_pt, sx[s + t])[:, 0]
    b = kernel_contributions(by, profile, t, zs, sy[t])
    a_bar, b_bar = a.mean(axis=0), b.mean(axis=0)
    conv = float(np.sum(ws * a_bar * b_bar))
    value = conv - float(c.mean())
    per_x = a @ (ws * b_bar) - c
    per_y = b @ (ws * a_bar)
    se = math.sqrt(per_x.var(ddof=1) / len(per_x) + per_y.var(ddof=1) / len(per_y))
    return Residual(value, se)


def free_chapman_kolmogorov_residual(profile: RadialProfile, s: float, t: float, x: float, y: float) -> float:
    """Deterministic ``|int p_s(x - z) p_t(z - y) dz - p_{s+t}(x - y)|`` in one dimension."""
    if profile.params.d != 1:
        raise NotImplementedError("free convolution check is one-dimensional")

    def f(z):
        return float(heat_kernel_radial(profile, s, np.array([abs(x - z)]))[0]) * float(
            heat_kernel_radial(profile, t, np.array([abs(z - y)]))[0]
        )

    scale = max(s, t) ** (1 / profile.params.alpha)
    edges = sorted({-np.inf, min(x, y) - 50 * scale, x, y, max(x, y) + 50 * scale, np.inf})
    conv = sum(integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-11, limit=400)[0] for lo, hi in zip(edges[:-1], edges[1:]))
    return abs(conv - float(heat_kernel_radial(profile, s + t, np.array([abs(x - y)]))[0]))


# ---------------------------------------------------------------------------
# Green function


@dataclass(frozen=True)
class GreenEstimate:
    value: float
    std_error: float
    head: float
    tail: float
    n_paths: int


def log_trapezoid_weights(ts: np.ndarray) -> np.ndarray:
    """Weights ``w`` with ``int f dt ~ sum w f(t)``, trapezoid in ``log t``."""
    lt = np.log(ts)
    w = np.zeros_like(ts)
    dl = np.diff(lt)
    w[:-1] += dl / 2
    w[1:] += dl / 2
    return w * ts


def free_time_integral(profile: RadialProfile, r: float, t_lo: float, t_hi: float) -> float:
    """``int_{t_lo}^{t_hi} p_t(r) dt``."""
    val, _ = integrate.quad(
        lambda t: float(heat_kernel_radial(profile, t, np.array([r]))[0]), t_lo, t_hi, epsabs=1e-14, epsrel=1e-10, limit=200
    )
    return val


def green_function(
    domain: Domain,
    profile: RadialProfile,
    x,
    y,
    mc: MCConfig,
    t_min: float = 1e-3,
    t_max: float = 8.0,
    ratio: float = 2.0,
    tail: str = "auto",
    decay_rate: float | None = None,
    cone_exponent=None,
) -> GreenEstimate:
    """``G_D(x, y) = int_0^inf p^D_t(x, y) dt`` on a geometric time grid.

    Below ``t_min`` the free kernel is integrated exactly (exits are negligible
    there for separated points). Beyond ``t_max`` the tail is
    ``p^D_{t_max} / lambda`` for bounded domains (``decay_rate`` or a fit of the
    last nodes) and the matched heat-shape integral for cones.
    """
    params = profile.params
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y_pt = _points(y, params.d)
    if np.allclose(x, y_pt[0]):
        raise ValueError("the Green function is singular at x = y")
    if not (domain.contains(x) and domain.contains(y_pt[0])):
        return GreenEstimate(0.0, 0.0, 0.0, 0.0, mc.n_paths)
    n_nodes = int(round(math.log(t_max / t_min) / math.log(ratio))) + 1
    ts = t_min * ratio ** np.arange(n_nodes)
    w = log_trapezoid_weights(ts)
    batch, starts = simulate_for_kernel(domain, params, x, ts, mc)
    f = np.stack([kernel_contributions(batch, profile, float(t), y_pt, starts[float(t)])[:, 0] for t in ts], axis=1)
    per_path = f @ w
    r = float(np.linalg.norm(x - y_pt[0]))
    head = free_time_integral(profile, r, 0.0, t_min)
    tail_weight = 0.0
    mode = tail
    if mode == "auto":
        mode = "decay" if domain.bounded else ("cone" if cone_exponent is not None else "none")
    if mode == "decay":
        lam = decay_rate
        if lam is None:
            means = f.mean(axis=0)
            lam = math.log(max(means[-2], 1e-300) / max(means[-1], 1e-300)) / (ts[-1] - ts[-2])
        tail_weight = 1.0 / lam if lam > 0 else 0.0
    elif mode == "cone":
        from .bounds import heat_shape_cone

        shape = lambda t: heat_shape_cone(cone_exponent, t, x, y_pt[0])  # noqa: E731
        tail_weight = integrate.quad(shape, ts[-1], np.inf, limit=200)[0] / shape(ts[-1])
    per_path = per_path + tail_weight * f[:, -1]
    est = MCEstimate.from_samples(per_path)
    return GreenEstimate(est.value + head, est.std_error, head, tail_weight * float(f[:, -1].mean()), mc.n_paths)


def ball_green(d: int, alpha: float, radius: float, x, y) -> float:
    """Classical closed form of the Green function of ``B(0, radius)``.

    ``G(x, y) = kappa |x - y|^{alpha - d} int_0^w r^{alpha/2 - 1} (r + 1)^{-d/2} dr`` with
    ``w = (R^2 - |x|^2)(R^2 - |y|^2) / (R^2 |x - y|^2)`` and
    ``kappa = Gamma(d/2) / (2^alpha pi^{d/2} Gamma(alpha/2)^2)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    rx, ry = np.linalg.norm(x), np.linalg.norm(y)
    if rx >= radius or ry >= radius:
        return 0.0
    dist = np.linalg.norm(x - y)
    if dist == 0:
        raise ValueError("the Green function is singular at x = y")
    w = (radius**2 - rx**2) * (radius**2 - ry**2) / (radius**2 * dist**2)
    kappa = math.gamma(d / 2) / (2**alpha * math.pi ** (d / 2) * math.gamma(alpha / 2) ** 2)
    # substitute r = v^2 to remove the endpoint singularity r^{alpha/2 - 1}
    integral, _ = integrate.quad(
        lambda v: 2 * v ** (alpha - 1) * (v * v + 1) ** (-d / 2), 0, math.sqrt(w), epsabs=1e-14, epsrel=1e-12, limit=200
    )
    return kappa * dist ** (alpha - d) * integral


def riesz_kernel(d: int, alpha: float, r: float) -> float:
    """Whole-space Green function ``Gamma((d-alpha)/2) / (2^alpha pi^{d/2} Gamma(alpha/2)) r^{alpha-d}`` (d > alpha)."""
    return math.gamma((d - alpha) / 2) / (2**alpha * math.pi ** (d / 2) * math.gamma(alpha / 2)) * r ** (alpha - d)


# ---------------------------------------------------------------------------
# bounded-domain decay rate


@dataclass(frozen=True)
class RateFit:
    rate: float
    std_error: float
    per_point: tuple[float, ...]
    per_point_se: tuple[float, ...]

    @property
    def ci(self) -> tuple[float, float]:
        return self.rate - 1.96 * self.std_error, self.rate + 1.96 * self.std_error


def _wls_slope(t: np.ndarray, v: np.ndarray, var: np.ndarray) -> tuple[float, float]:
    w = 1.0 / var
    tm = np.sum(w * t) / np.sum(w)
    vm = np.sum(w * v) / np.sum(w)
    sxx = np.sum(w * (t - tm) ** 2)
    return float(np.sum(w * (t - tm) * (v - vm)) / sxx), float(math.sqrt(1.0 / sxx))


def lambda1_fit(
    domain: Domain, params: StableParams, xs, ts: Sequence[float], mc: MCConfig, min_alive: int = 10
) -> RateFit:
    """Slope of ``-log P_x(tau > t)`` in ``t``: common slope, one intercept per start point."""
    if not domain.bounded:
        raise ValueError("lambda1_fit needs a bounded domain")
    ts = np.asarray(sorted(ts), dtype=float)
    h = default_step(ts[0]) if mc.h is None else mc.h
    grid = time_grid(ts[-1], h, include=ts)
    xs = _points(xs, params.d)
    rows = []
    per, per_se = [], []
    for i, x in enumerate(xs):
        batch = run_paths(domain, params, x, grid, mc.n_paths, mc.seed.spawn(i), workers=mc.workers)
        alive = np.array([np.sum(batch.tau > t) for t in ts])
        keep = alive >= min_alive
        if keep.sum() < 2:
            raise ValueError("insufficient paths: survival indistinguishable from 0")
        surv = alive[keep] / mc.n_paths
        var = (1 - surv) / (mc.n_paths * surv)
        v = -np.log(surv)
        slope, se = _wls_slope(ts[keep], v, var)
        per.append(slope)
        per_se.append(se)
        rows.append((ts[keep], v, var, i))
    # pooled: common slope with separate intercepts = slope of within-point centred data
    num = den = 0.0
    for t, v, var, _ in rows:
        w = 1.0 / var
        tm, vm = np.sum(w * t) / np.sum(w), np.sum(w * v) / np.sum(w)
        num += np.sum(w * (t - tm) * (v - vm))
        den += np.sum(w * (t - tm) ** 2)
    return RateFit(float(num / den), float(math.sqrt(1.0 / den)), tuple(per), tuple(per_se))
