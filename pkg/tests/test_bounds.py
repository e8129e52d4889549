import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stablecone.bounds import (
    ConeExponent,
    doubling_constant,
    green_shape_cone,
    heat_shape_c11,
    heat_shape_cone,
    martin_surrogate,
    survival_shape_c11,
    survival_shape_cone,
)
from stablecone.geometry import Ball, Cone, HalfLine, HalfSpace
from stablecone.kernel import StableParams

P2 = StableParams(2, 1.0)
pts2 = arrays(float, 2, elements=st.floats(-5, 5, allow_nan=False))
times = st.floats(1e-3, 1e3)


@st.composite
def exponents(draw):
    alpha = draw(st.floats(0.1, 1.9))
    theta = draw(st.floats(0.1, math.pi - 0.1))
    beta = draw(st.floats(0.0, alpha * 0.999))
    return ConeExponent(theta, StableParams(2, alpha), beta)


def test_exponent_range():
    with pytest.raises(ValueError, match="beta < alpha"):
        ConeExponent(1.0, P2, 1.0)
    hs = ConeExponent.half_space(StableParams(3, 1.4))
    assert hs.beta == 0.7 and hs.theta_max == math.pi / 2


def test_c11_examples():
    ball = Ball(1.0, (0.0, 0.0))
    assert survival_shape_c11(ball, P2, 1.0, [0.0, 0.0]) == 1.0
    assert survival_shape_c11(ball, P2, 1.0, [1.0, 0.0]) == 0.0
    # delta^{alpha/2} = sqrt(t) is the branch point
    assert survival_shape_c11(HalfSpace(2), P2, 0.25, [0.0, 0.25]) == 1.0
    assert survival_shape_c11(HalfSpace(2), P2, 1.0, [0.0, 0.25]) == 0.5
    with pytest.raises(TypeError):
        survival_shape_c11(Cone(1.0, 2), P2, 1.0, [0.0, 1.0])
    assert heat_shape_c11(ball, P2, 1.0, [0.2, 0.0], [2.0, 0.0]) == 0.0


def test_hand_example():
    exp = ConeExponent(math.pi / 4, P2, 0.75)
    expected = (math.sqrt(2) / 32) ** 0.5 * (1 / 16) ** 0.25
    assert survival_shape_cone(exp, 16.0, [0.0, 1.0]) == pytest.approx(expected, rel=1e-14)
    # independent path: delta of z = e_2 / 16 from the sine of the aperture
    z = 1 / 16
    assert expected == pytest.approx(min(1, z * math.sin(math.pi / 4)) ** 0.5 * min(1, z) ** 0.25, rel=1e-15)


def test_saturation():
    exp = ConeExponent(math.pi / 2, P2, 0.3)
    assert survival_shape_cone(exp, 1.0, [0.0, 5.0]) == 1.0


@settings(max_examples=200)
@given(x=pts2, y=pts2, t=times)
def test_half_space_reduction_bitwise(x, y, t):
    hs = ConeExponent.half_space(P2)
    assert survival_shape_cone(hs, t, x) == survival_shape_c11(HalfSpace(2), P2, t, x)
    assert heat_shape_cone(hs, t, x, y) == heat_shape_c11(HalfSpace(2), P2, t, x, y)


@given(x=st.floats(-5, 5), t=times)
def test_half_line_reduction_bitwise(x, t):
    p = StableParams(1, 1.0)
    assert survival_shape_cone(ConeExponent.half_space(p), t, [x]) == survival_shape_c11(HalfLine(), p, t, [x])


@settings(max_examples=200)
@given(exp=exponents(), x=pts2, y=pts2, t=times)
def test_heat_shape_scaling(exp, x, y, t):
    a, d = exp.params.alpha, exp.params.d
    lhs = heat_shape_cone(exp, t, x, y)
    rhs = t ** (-d / a) * heat_shape_cone(exp, 1.0, t ** (-1 / a) * x, t ** (-1 / a) * y)
    if lhs > 0:
        cone = exp.cone
        cond = 1 + np.linalg.norm(x) / cone.delta(x) + np.linalg.norm(y) / cone.delta(y)
        assert abs(lhs / rhs - 1) <= 64 * np.finfo(float).eps * cond
    else:
        assert rhs == 0
    assert heat_shape_cone(exp, t, x, y) == heat_shape_cone(exp, t, y, x)
    assert lhs >= 0


@given(exp=exponents(), x=pts2, t=times)
def test_survival_shape_bounds_and_zero_outside(exp, x, t):
    v = survival_shape_cone(exp, t, x)
    assert 0 <= v
    if not exp.cone.contains(x):
        assert v == 0.0
    if exp.beta >= exp.params.alpha / 2:
        assert v <= 1.0


@settings(max_examples=200)
@given(exp=exponents(), x=pts2, t=times)
def test_doubling_bound(exp, x, t):
    num = survival_shape_cone(exp, t, x)
    den = survival_shape_cone(exp, t / 2, x)
    if den == 0:
        assert num == 0
        return
    ratio = num / den
    c = doubling_constant(exp)
    # the shape ratio stays in [1/C, C'] with C' = 2^{max(alpha/2 - beta, 0) / alpha}
    upper = 2 ** (max(exp.params.alpha / 2 - exp.beta, 0) / exp.params.alpha)
    assert 1 / c * (1 - 1e-12) <= ratio <= upper * (1 + 1e-12)


@given(exp=exponents(), x=pts2, y=pts2, r=st.floats(0.01, 100))
def test_green_shape_symmetry_and_homogeneity(exp, x, y, r):
    if np.linalg.norm(x - y) < 1e-6:
        return
    g = green_shape_cone(exp, x, y)
    assert g == green_shape_cone(exp, y, x)
    a, d = exp.params.alpha, exp.params.d
    assert green_shape_cone(exp, r * x, r * y) == pytest.approx(r ** (a - d) * g, rel=1e-10, abs=1e-300)


def test_green_shape_errors_and_boundary():
    exp = ConeExponent(math.pi / 4, P2, 0.9)
    with pytest.raises(ValueError):
        green_shape_cone(exp, [0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        green_shape_cone(ConeExponent(1.0, StableParams(1, 1.0), 0.5), [1.0], [2.0])
    edge = np.array([math.sin(math.pi / 4), math.cos(math.pi / 4)])
    vals = [green_shape_cone(exp, edge * 1.0 + eps * np.array([-1.0, 1.0]), [0.0, 2.0]) for eps in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] > 0


@given(exp=exponents(), x=pts2, r=st.floats(0.01, 100))
def test_martin_homogeneity(exp, x, r):
    assert martin_surrogate(exp, r * x) == pytest.approx(r**exp.beta * martin_surrogate(exp, x), rel=1e-10, abs=1e-300)


def test_martin_axis_value():
    exp = ConeExponent(math.pi / 3, StableParams(3, 1.2), 0.4)
    assert martin_surrogate(exp, [0.0, 0.0, 1.0]) == pytest.approx(math.sin(math.pi / 3) ** 0.6)
    assert martin_surrogate(exp, [0.0, 0.0, -1.0]) == 0.0
