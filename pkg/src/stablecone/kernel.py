"""Free isotropic alpha-stable heat kernel, Levy density and fractional Laplacian.

The kernel is normalised so that its Fourier transform is ``exp(-t |xi|^alpha)``.
``p_1`` is tabulated once per ``(d, alpha)`` on a radial grid by contour-rotated
Hankel inversion; all other times follow from self-similarity.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicHermiteSpline

from .geometry import norm


class QuadratureError(RuntimeError):
    """Raised when an oscillatory or singular integral misses its error target."""


@dataclass(frozen=True)
class StableParams:
    d: int
    alpha: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension d must be an integer >= 1, got {self.d!r}")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in the open interval (0, 2), got {self.alpha!r}")


def levy_constant(params: StableParams) -> float:
    """``A_{d,alpha}`` such that the Levy density is ``A |y|^{-d-alpha}``."""
    d, a = params.d, params.alpha
    return 2.0**a * math.gamma((d + a) / 2) / (math.pi ** (d / 2) * abs(math.gamma(-a / 2)))


def levy_density(params: StableParams, y) -> np.ndarray | float:
    """Jump intensity ``nu(y)``; ``y`` is a point or an array of points (last axis = d)."""
    y = np.asarray(y, dtype=float)
    r = _radius(y, params.d)
    if np.any(r == 0):
        raise ValueError("Levy density is singular at y = 0")
    out = levy_constant(params) * r ** (-params.d - params.alpha)
    return float(out) if np.ndim(out) == 0 else out


def levy_tail_mass(params: StableParams, r: float) -> float:
    """``nu({|y| > r})``, the rate of jumps longer than ``r``."""
    return sphere_area(params.d) * levy_constant(params) * r ** (-params.alpha) / params.alpha


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _radius(x: np.ndarray, d: int) -> np.ndarray:
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return np.abs(x)
    return norm(x)


def bound_free(params: StableParams, t, x) -> np.ndarray | float:
    """Two-sided shape ``min(t^{-d/alpha}, t / |x|^{d+alpha})`` of the free kernel."""
    d, a = params.d, params.alpha
    x = np.asarray(x, dtype=float)
    r = _radius(x, d) if x.ndim else np.abs(x)
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        far = np.where(r > 0, t / np.where(r > 0, r, 1.0) ** (d + a), np.inf)
    out = np.minimum(t ** (-d / a), far)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# p_1 by quadrature


def p1_origin(params: StableParams) -> float:
    d, a = params.d, params.alpha
    return math.gamma(d / a) / (a * 2 ** (d - 1) * math.pi ** (d / 2) * math.gamma(d / 2))


def p1_quad(params: StableParams, r: float, epsabs: float = 1e-17, epsrel: float = 1e-11) -> float:
    """``p_1`` at radius ``r`` by direct quadrature.

    Uses ``p_1(r) = (2 pi)^{-d/2} r^{1-d/2} Re int_0^inf e^{-s^a} s^{d/2} H^(1)_{d/2-1}(r s) ds``
    with the ray rotated to ``arg s = min(pi/2, pi/(4a))``, where both factors
    decay exponentially and the integrand no longer oscillates.
    """
    d, a = params.d, params.alpha
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0:
        return p1_origin(params)
    order = d / 2 - 1
    phase = np.exp(1j * min(math.pi / 2, math.pi / (4 * a)))

    def integrand(u):
        s = u * phase
        # scaled Hankel function keeps the large-argument decay inside one exponential
        return (np.exp(1j * r * s - s**a) * s ** (d / 2) * special.hankel1e(order, r * s) * phase).real

    # decay rate along the ray is u^a cos(a phi) + r u sin(phi); cut where it underflows
    # and place geometric breakpoints from the bulk scale min(1, 1/r) outwards
    cos_a, sin_p = math.cos(a * math.atan2(phase.imag, phase.real)), phase.imag
    upper = 1.0
    while upper**a * cos_a + r * upper * sin_p < 740.0:
        upper *= 2.0
    knot = min(1.0, 1.0 / r)
    edges = [0.0]
    while knot < upper:
        edges.append(knot)
        knot *= 2.0
    edges.append(upper)
    total, err_total = 0.0, 0.0
    with warnings.catch_warnings():
        # the error estimate is checked below; roundoff warnings are noise
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, err = integrate.quad(integrand, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200)
            total += val
            err_total += err
    value = (2 * math.pi) ** (-d / 2) * r ** (1 - d / 2) * total
    scale = (2 * math.pi) ** (-d / 2) * r ** (1 - d / 2)
    if not np.isfinite(value) or scale * err_total > max(1e-7 * abs(value), 1e-300):
        raise QuadratureError(
            f"p_1 quadrature at r={r} (d={d}, alpha={a}) missed its target: "
            f"value={value:.3e}, error estimate={scale * err_total:.3e}"
        )
    return value


def asymptotic_coefficients(params: StableParams, kmax: int = 60) -> np.ndarray:
    """Coefficients ``c_k`` of ``p_1(r) ~ sum_k c_k r^{-k alpha - d}``, ``k = 1, 2, ...``.

    Convergent for alpha < 1, asymptotic for alpha >= 1; ``c_1`` equals the
    Levy constant.
    """
    d, a = params.d, params.alpha
    coeffs = []
    for k in range(1, kmax + 1):
        lg = (
            k * a * math.log(2)
            - (d / 2 + 1) * math.log(math.pi)
            + math.lgamma((k * a + d) / 2)
            + math.lgamma(k * a / 2 + 1)
            - math.lgamma(k + 1)
        )
        sine = math.sin(k * math.pi * a / 2)
        c = 0.0 if abs(sine) < 1e-12 else (-1) ** (k + 1) * math.exp(lg) * sine
        coeffs.append(c)
    return np.array(coeffs)


def p1_far(params: StableParams, r, coeffs: np.ndarray, r_ref: float) -> np.ndarray:
    """Far-field series at ``r >= r_ref``, truncated at its smallest term at ``r_ref``."""
    d, a = params.d, params.alpha
    stop = _truncation(coeffs, r_ref, a, d)
    k = np.arange(1, stop + 1)
    r = np.asarray(r, dtype=float)
    return r[..., None] ** (-k * a - d) @ coeffs[:stop]


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Tabulated ``p_1`` with a monotone interpolant and a series far field."""

    params: StableParams
    r_grid: np.ndarray
    p1_values: np.ndarray
    tail_constant: float
    r_max: float
    slopes: np.ndarray | None = None
    interpolation: str = "monotone cubic Hermite, log p vs log(1+r)"
    _interp: CubicHermiteSpline = field(init=False, repr=False)
    _coeffs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.r_grid, dtype=float)
        p = np.asarray(self.p1_values, dtype=float)
        if r.ndim != 1 or len(r) < 2 or np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ValueError("r_grid must be strictly ascending, nonnegative, with at least 2 nodes")
        if p.shape != r.shape or np.any(p <= 0):
            raise ValueError("p1_values must be positive and aligned with r_grid")
        if np.any(np.diff(p) > 1e-12 * p[:-1]):
            raise ValueError("p1_values must be non-increasing in r")
        u, v = np.log1p(r), np.log(p)
        if self.slopes is None:
            slopes = _pchip_slopes(u, v)
        else:
            slopes = np.asarray(self.slopes, dtype=float)
            if slopes.shape != r.shape or np.any(slopes > 0):
                raise ValueError("slopes must be nonpositive and aligned with r_grid")
            slopes = _limit_slopes(u, v, slopes)
        object.__setattr__(self, "r_grid", r)
        object.__setattr__(self, "p1_values", p)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "_interp", CubicHermiteSpline(u, v, slopes))
        object.__setattr__(self, "_coeffs", asymptotic_coefficients(self.params))

    def p1(self, r) -> np.ndarray:
        """``p_1`` at radii ``r`` (array-like, nonnegative)."""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r <= self.r_max
        out[inner] = np.exp(self._interp(np.log1p(r[inner])))
        if np.any(~inner):
            out[~inner] = p1_far(self.params, r[~inner], self._coeffs, self.r_max)
        return out

    def tail_mass(self, radius: float | None = None) -> float:
        """``int_{|x| > radius} p_1(x) dx`` from the far-field series (radius >= r_max)."""
        radius = self.r_max if radius is None else radius
        if radius < self.r_max:
            raise ValueError("tail mass is only available beyond r_max")
        a, d = self.params.alpha, self.params.d
        # integrate the same truncated series that p1_far uses
        stop = _truncation(self._coeffs, self.r_max, a, d)
        k = np.arange(1, stop + 1)
        return float(np.sum(sphere_area(d) * self._coeffs[:stop] * radius ** (-k * a) / (k * a)))

    def crossover_mismatch(self) -> float:
        """Relative jump between the tabulated value and the far series at ``r_max``."""
        inner = self.p1_values[-1]
        outer = float(p1_far(self.params, np.array([self.r_max]), self._coeffs, self.r_max)[0])
        return abs(outer / inner - 1.0)

    def mass(self, epsabs: float = 1e-13) -> float:
        """Total mass of ``p_1`` (should be 1)."""
        d = self.params.d
        area = sphere_area(d)
        knots = self.r_grid[:: max(1, len(self.r_grid) // 64)]
        knots = np.unique(np.concatenate([knots, [self.r_max]]))
        inner = 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            val, _ = integrate.quad(
                lambda s: area * s ** (d - 1) * float(self.p1(np.array([s]))[0]),
                lo, hi, epsabs=epsabs, epsrel=1e-12, limit=200,
            )
            inner += val
        return inner + self.tail_mass()

    def to_text(self) -> str:
        lines = [
            f"# d = {self.params.d}",
            f"# alpha = {self.params.alpha!r}",
            f"# r_max = {self.r_max!r}",
            f"# n = {len(self.r_grid)}",
            f"# tail_constant = {self.tail_constant!r}",
            "# r p1 slope",
        ]
        lines += [f"{float(r)!r} {float(p)!r} {float(m)!r}" for r, p, m in zip(self.r_grid, self.p1_values, self.slopes)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RadialProfile":
        header: dict[str, str] = {}
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = (s.strip() for s in body.split("=", 1))
                    header[key] = value
                continue
            rows.append([float(v) for v in line.split()])
        missing = {"d", "alpha", "r_max", "n", "tail_constant"} - header.keys()
        if missing:
            raise ValueError(f"profile table header lacks {sorted(missing)}")
        table = np.array(rows, dtype=float)
        if table.ndim != 2 or table.shape[0] != int(header["n"]) or table.shape[1] not in (2, 3):
            raise ValueError(f"profile table has shape {table.shape}, header says n={header['n']}")
        params = StableParams(int(header["d"]), float(header["alpha"]))
        slopes = table[:, 2] if table.shape[1] == 3 else None
        return cls(
            params, table[:, 0], table[:, 1], float(header["tail_constant"]), float(header["r_max"]), slopes
        )


def _truncation(coeffs: np.ndarray, r_ref: float, a: float, d: int) -> int:
    k = np.arange(1, len(coeffs) + 1)
    terms = np.abs(coeffs) * r_ref ** (-k * a - d)
    last = np.inf
    for i, term in enumerate(terms):
        if term == 0:
            continue
        if term > last:
            return i
        last = term
        if term < 1e-17 * terms[0]:
            return i + 1
    return len(coeffs)


def default_grid(r_max: float, n: int) -> np.ndarray:
    """Nodes uniform in ``log(1 + r)`` on ``[0, r_max]``."""
    return np.expm1(np.linspace(0.0, math.log1p(r_max), n))


def p1_derivative(params: StableParams, r: float) -> float:
    """``d p_1 / dr``, using ``p_1^{(d)}'(r) = -2 pi r p_1^{(d+2)}(r)``."""
    return -2.0 * math.pi * r * p1_quad(StableParams(params.d + 2, params.alpha), r)


def build_profile(params: StableParams, r_max: float = 64.0, n: int = 513) -> RadialProfile:
    """Tabulate ``p_1`` (values and radial derivatives) on ``n`` nodes up to ``r_max``."""
    if r_max <= 0 or n < 2:
        raise ValueError("need r_max > 0 and n >= 2")
    r = default_grid(r_max, n)
    values = np.array([p1_quad(params, float(ri)) for ri in r])
    # quadrature noise must not break monotonicity of the table
    values = np.minimum.accumulate(values)
    deriv = np.array([p1_derivative(params, float(ri)) for ri in r])
    slopes = np.minimum((1.0 + r) * deriv / values, 0.0)
    return RadialProfile(params, r, values, levy_constant(params), float(r_max), slopes)


@functools.lru_cache(maxsize=32)
def get_profile(d: int, alpha: float, r_max: float = 64.0, n: int = 513) -> RadialProfile:
    """Cached :func:`build_profile`."""
    return build_profile(StableParams(d, alpha), r_max, n)


def _pchip_slopes(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    from scipy.interpolate import PchipInterpolator

    return PchipInterpolator(u, v).derivative()(u)


def _limit_slopes(u: np.ndarray, v: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson limiter: keep the Hermite cubic monotone on every panel."""
    secant = np.diff(v) / np.diff(u)
    m = slopes.copy()
    flat = secant == 0
    m[:-1][flat] = 0.0
    m[1:][flat] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(flat, 0.0, m[:-1] / secant)
        b = np.where(flat, 0.0, m[1:] / secant)
    rho = np.hypot(a, b)
    over = rho > 3.0
    if np.any(over):
        tau = 3.0 / rho[over]
        idx = np.nonzero(over)[0]
        m[idx] = tau * a[over] * secant[over]
        m[idx + 1] = tau * b[over] * secant[over]
    return m


def heat_kernel_free(profile: RadialProfile, t, x) -> np.ndarray | float:
    """``p_t(x) = t^{-d/alpha} p_1(t^{-1/alpha} x)``; ``x`` may carry leading batch axes."""
    params = profile.params
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    x = np.asarray(x, dtype=float)
    r = _radius(x, params.d) if x.ndim else np.abs(x)
    out = t ** (-params.d / params.alpha) * profile.p1(t ** (-1.0 / params.alpha) * r)
    return float(out) if np.ndim(out) == 0 else out


def heat_kernel_radial(profile: RadialProfile, t, r) -> np.ndarray:
    """Same as :func:`heat_kernel_free` but takes radii directly."""
    params = profile.params
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    return t ** (-params.d / params.alpha) * profile.p1(t ** (-1.0 / params.alpha) * r)


def cauchy_kernel(d: int, t, r) -> np.ndarray:
    """Closed form of the alpha = 1 kernel."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    return math.gamma((d + 1) / 2) * math.pi ** (-(d + 1) / 2) * t / (r * r + t * t) ** ((d + 1) / 2)


# ---------------------------------------------------------------------------
# fractional Laplacian


def frac_laplacian(
    params: StableParams,
    phi: Callable[[np.ndarray], np.ndarray],
    x,
    n_angles: int = 64,
    epsrel: float = 1e-10,
) -> float:
    """Principal-value ``Delta^{alpha/2} phi(x)`` by quadrature.

    ``phi`` maps an array of points (last axis d; scalars for d = 1) to values.
    The singular integral is symmetrised into the second difference
    ``phi(x+y) + phi(x-y) - 2 phi(x)``, which is ``O(|y|^2)`` at the origin, so
    the inner ball needs no cut-off. Directions on the sphere use a fixed
    product rule (d = 2, 3).
    """
    d, a = params.d, params.alpha
    A = levy_constant(params)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if d == 1:
        x0 = float(x[0])
        f0 = float(phi(np.array(x0)))

        def radial(s):
            return (float(phi(np.array(x0 + s))) + float(phi(np.array(x0 - s))) - 2 * f0) * s ** (-1 - a)

        total = _radial_integral(radial, epsrel)
        return A * total
    if d == 2:
        ang = (np.arange(n_angles) + 0.5) * math.pi / n_angles  # half circle, symmetric pairs
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        weights = np.full(n_angles, math.pi / n_angles)
    elif d == 3:
        u, wu = np.polynomial.legendre.leggauss(n_angles // 2)
        ang = (np.arange(n_angles) + 0.5) * math.pi / n_angles
        cu, cp = np.meshgrid(u, ang, indexing="ij")
        su = np.sqrt(1 - cu**2)
        dirs = np.stack([su * np.cos(cp), su * np.sin(cp), cu], axis=-1).reshape(-1, 3)
        weights = np.outer(wu, np.full(n_angles, math.pi / n_angles)).reshape(-1)
    else:
        raise NotImplementedError("frac_laplacian supports d <= 3")
    f0 = float(phi(x[None, :])[0])

    def radial(s):
        pts_p = x[None, :] + s * dirs
        pts_m = x[None, :] - s * dirs
        second = phi(pts_p) + phi(pts_m) - 2 * f0
        return float(np.dot(weights, second)) * s ** (-1 - a)

    # the half-sphere rule already pairs y with -y, so no factor 1/2
    return A * _radial_integral(radial, epsrel)


def _radial_integral(f: Callable[[float], float], epsrel: float) -> float:
    total = 0.0
    for lo, hi in [(0.0, 1.0), (1.0, 10.0), (10.0, np.inf)]:
        val, err = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=epsrel, limit=400)
        if not np.isfinite(val) or err > max(1e-7 * abs(val), 1e-10):
            raise QuadratureError(f"fractional Laplacian quadrature failed on [{lo}, {hi}]: err={err:.2e}")
        total += val
    return total


def spectral_frac_laplacian_1d(phi_hat: Callable[[float], float], alpha: float, x: float = 0.0) -> float:
    """``-(2 pi)^{-1} int |xi|^alpha phi_hat(xi) e^{-i x xi} d xi`` for even ``phi``."""
    val, _ = integrate.quad(
        lambda k: k**alpha * phi_hat(k) * math.cos(k * x), 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400
    )
    return -val / math.pi


def convolve_1d(profile: RadialProfile, t: float, f: Callable[[float], float], x: float) -> float:
    """``P_t f(x) = int f(x+y) p_t(y) dy`` in one dimension."""
    scale = t ** (1.0 / profile.params.alpha)

    def integrand(y):
        return f(x + y) * float(heat_kernel_radial(profile, t, np.array([abs(y)]))[0])

    total = 0.0
    edges = [-np.inf, -50 * scale, -scale, 0.0, scale, 50 * scale, np.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    return total
