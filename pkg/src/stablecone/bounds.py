"""Closed-form right-hand sides of the two-sided estimates.

All shapes vanish off the domain. The cone shapes are written through the
rescaled point ``t^{-1/alpha} x`` and the C^{1,1} shapes through
``t^{-1/alpha} delta(x)``; for the half-space (aperture pi/2, beta = alpha/2)
the two evaluation paths perform the same floating-point operations, so the
reduction is exact rather than approximate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Ball, Cone, Domain, HalfLine, HalfSpace, _as_points, norm
from .kernel import StableParams, bound_free


@dataclass(frozen=True)
class ConeExponent:
    theta_max: float
    params: StableParams
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta < self.params.alpha:
            raise ValueError(f"cone exponent must satisfy 0 <= beta < alpha, got beta={self.beta!r}")

    @classmethod
    def half_space(cls, params: StableParams) -> "ConeExponent":
        return cls(math.pi / 2, params, params.alpha / 2)

    @property
    def cone(self) -> Cone:
        return Cone(self.theta_max, self.params.d)


def _boundary_factor(scaled_delta, alpha: float):
    return np.minimum(1.0, scaled_delta ** (alpha / 2))


def _time_scale(t, alpha: float):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    return t ** (-1.0 / alpha)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def _check_c11(domain: Domain):
    if not isinstance(domain, (Ball, HalfSpace, HalfLine)):
        raise TypeError(f"C^{{1,1}} shapes need a ball, half-space or half-line, got {type(domain).__name__}")


def survival_shape_c11(domain: Domain, params: StableParams, t, x):
    """``min(1, delta(x)^{alpha/2} / sqrt(t))``."""
    _check_c11(domain)
    scale = _time_scale(t, params.alpha)
    return _out(_boundary_factor(scale * domain.delta(x), params.alpha))


def heat_shape_c11(domain: Domain, params: StableParams, t, x, y):
    """``survival(x) survival(y) min(t^{-d/alpha}, t / |x - y|^{d+alpha})``."""
    px = _as_points(x, params.d)
    py = _as_points(y, params.d)
    free = bound_free(params, t, px - py)
    # product of the two boundary factors first, so swapping x and y is exact
    return _out(free * (survival_shape_c11(domain, params, t, px) * survival_shape_c11(domain, params, t, py)))


def survival_shape_cone(exp: ConeExponent, t, x):
    """``min(1, delta(z)^{alpha/2}) min(1, |z|)^{beta - alpha/2}`` with ``z = t^{-1/alpha} x``."""
    a = exp.params.alpha
    x = _as_points(x, exp.params.d)
    scale = np.asarray(_time_scale(t, a))
    z = scale[..., None] * x if scale.ndim else scale * x
    delta = exp.cone.delta(z)
    size = norm(z)
    e = exp.beta - a / 2
    if e >= 0:
        return _out(_boundary_factor(delta, a) * np.minimum(1.0, size) ** e)
    # near the vertex |z|^e overflows; since delta <= |z| the product is (delta/|z|)^{a/2} |z|^beta
    with np.errstate(divide="ignore", invalid="ignore"):
        near = (delta / size) ** (a / 2) * size**exp.beta
        out = np.where(size < 1, near, _boundary_factor(delta, a))
    return _out(np.where(delta > 0, out, 0.0))


def heat_shape_cone(exp: ConeExponent, t, x, y):
    px = _as_points(x, exp.params.d)
    py = _as_points(y, exp.params.d)
    free = bound_free(exp.params, t, px - py)
    return _out(free * (survival_shape_cone(exp, t, px) * survival_shape_cone(exp, t, py)))


def green_shape_cone(exp: ConeExponent, x, y):
    """``|x-y|^{alpha-d} min(1, delta^{a/2}(x) delta^{a/2}(y) / |x-y|^a ((|x|^|y|)/(|x|v|y|))^{beta-a/2})``."""
    d, a = exp.params.d, exp.params.alpha
    if d < 2:
        raise ValueError("the cone Green function shape is stated for d >= 2")
    x = _as_points(x, d)
    y = _as_points(y, d)
    dist = norm(x - y)
    if np.any(dist == 0):
        raise ValueError("the Green function is singular at x = y")
    dx, dy = exp.cone.delta(x), exp.cone.delta(y)
    nx, ny = norm(x), norm(y)
    inside = (dx > 0) & (dy > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(inside, np.minimum(nx, ny) / np.maximum(nx, ny), 1.0)
        inner = (dx * dy) ** (a / 2) / dist**a * ratio ** (exp.beta - a / 2)
    return _out(np.where(inside, dist ** (a - d) * np.minimum(1.0, inner), 0.0))


def martin_surrogate(exp: ConeExponent, x):
    """``delta(x)^{alpha/2} |x|^{beta - alpha/2}``, zero off the cone."""
    a = exp.params.alpha
    x = _as_points(x, exp.params.d)
    delta = exp.cone.delta(x)
    size = norm(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(delta > 0, (delta / size) ** (a / 2) * size**exp.beta, 0.0)
    return _out(val)


def doubling_constant(exp: ConeExponent) -> float:
    """``C`` with ``survival_shape_cone(t, x) / survival_shape_cone(t/2, x) >= 1/C`` for all ``t, x``.

    Halving time multiplies ``z`` by ``2^{1/alpha}``; the boundary factor then
    grows by at most ``2^{1/2}`` and the vertex factor by at most
    ``2^{max(beta - alpha/2, 0) / alpha}``.
    """
    a = exp.params.alpha
    return math.sqrt(2.0) * 2.0 ** (max(exp.beta - a / 2, 0.0) / a)
