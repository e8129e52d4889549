"""Domains: right circular cone, ball, half-space, half-line and the whole space.

Every domain works on arrays of points with the coordinate on the last axis,
so the samplers can test membership for a whole batch of paths at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ValueError(f"points must have last axis of length {d}, got shape {x.shape}")
    return x


def norm(x: np.ndarray) -> np.ndarray:
    """Euclidean norm over the last axis without underflow for tiny coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 0:
        return np.zeros(x.shape[:-1])
    scale = np.max(np.abs(x), axis=-1)
    safe = np.where(scale > 0, scale, 1.0)
    return scale * np.sqrt(np.sum((x / safe[..., None]) ** 2, axis=-1))


def _scalar(out):
    return out.item() if np.ndim(out) == 0 else out


def polar_angle(x) -> float | np.ndarray:
    """Angle between ``x`` and the last coordinate axis, in ``[0, pi]``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    r = norm(x)
    if np.any(r == 0):
        raise ValueError("polar angle is undefined at the origin")
    return _scalar(np.arccos(np.clip(x[..., -1] / r, -1.0, 1.0)))


class Domain:
    """Open subset of R^d with membership and distance to the complement."""

    d: int
    bounded = False

    def contains(self, x) -> bool | np.ndarray:
        return _scalar(self._contains(_as_points(x, self.d)))

    def delta(self, x) -> float | np.ndarray:
        return _scalar(self._delta(_as_points(x, self.d)))

    def scale_point_into(self, x, r: float) -> np.ndarray:
        """``r x``; for cones membership is preserved since ``r Gamma = Gamma``."""
        if r <= 0:
            raise ValueError("scale factor must be positive")
        return r * np.asarray(x, dtype=float)

    def spec(self) -> str:
        raise NotImplementedError

    def _contains(self, x: np.ndarray) -> np.ndarray:
        return self._delta(x) > 0

    def _delta(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Cone(Domain):
    """``{x != 0 : angle(x, e_d) < theta_max}``; in one dimension every aperture gives ``(0, inf)``."""

    theta_max: float
    d: int = 2

    def __post_init__(self):
        if not 0.0 < self.theta_max < math.pi:
            raise ValueError(f"cone aperture must lie in (0, pi), got {self.theta_max!r}")
        if self.d < 1:
            raise ValueError("dimension must be at least 1")

    @property
    def _trig(self) -> tuple[float, float]:
        if self.d == 1:
            return 0.0, 1.0
        # cos(pi/2) is 6e-17 in floating point; snap it so the half-space case is exact
        c, s = math.cos(self.theta_max), math.sin(self.theta_max)
        return (0.0 if abs(c) < 1e-15 else c), s

    def _signed(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cos_t, sin_t = self._trig
        axial = x[..., -1]
        radial = norm(x[..., :-1])
        # |x| sin(theta_max - theta) and |x| cos(theta_max - theta)
        return axial * sin_t - radial * cos_t, axial * cos_t + radial * sin_t, np.hypot(axial, radial)

    def _contains(self, x):
        s, _, _ = self._signed(x)
        return s > 0

    def _delta(self, x):
        s, c, r = self._signed(x)
        # past a right angle from the boundary ray the nearest complement point is the vertex
        inside = np.where(c >= 0, s, r)
        return np.where(s > 0, inside, 0.0)

    def spec(self):
        return f"cone:{self.theta_max!r}"


@dataclass(frozen=True)
class Ball(Domain):
    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    bounded = True

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def d(self) -> int:
        return len(self.center)

    def _delta(self, x):
        return np.maximum(self.radius - norm(x - np.asarray(self.center)), 0.0)

    def spec(self):
        if any(self.center):
            raise ValueError("only origin-centred balls have a config spec")
        return f"ball:{self.radius!r}"


@dataclass(frozen=True)
class HalfSpace(Domain):
    """``{x : x_d > 0}``."""

    d: int = 2

    def _delta(self, x):
        return np.maximum(x[..., -1], 0.0)

    def spec(self):
        return "halfspace"


@dataclass(frozen=True)
class HalfLine(Domain):
    """``(0, inf)`` in one dimension."""

    d: int = 1

    def __post_init__(self):
        if self.d != 1:
            raise ValueError("HalfLine is one-dimensional")

    def _delta(self, x):
        return np.maximum(x[..., 0], 0.0)

    def spec(self):
        return "halfline"


@dataclass(frozen=True)
class FullSpace(Domain):
    """All of R^d: no killing."""

    d: int = 1

    def _contains(self, x):
        return np.ones(x.shape[:-1], dtype=bool)

    def _delta(self, x):
        return np.full(x.shape[:-1], np.inf)

    def spec(self):
        return "full"


def parse_domain(text: str, d: int) -> Domain:
    """Parse ``cone:THETA``, ``ball:R``, ``halfspace``, ``halfline`` or ``full``."""
    kind, _, arg = text.strip().partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "cone":
            return Cone(float(arg), d)
        if kind == "ball":
            return Ball(float(arg), (0.0,) * d)
        if kind == "halfspace" and not arg:
            return HalfSpace(d)
        if kind == "halfline" and not arg:
            return HalfLine(d)
        if kind == "full" and not arg:
            return FullSpace(d)
    except ValueError as exc:
        raise ValueError(f"bad domain spec {text!r}: {exc}") from None
    raise ValueError(f"bad domain spec {text!r}: expected cone:THETA, ball:R, halfspace, halfline or full")
