import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from dercomplex.divcurl.analytic import (AliasingRisk, Factor, Scalar, Vector, gl_rule, inner,
                                         integrate_product_gl, norm, required_panels)
from dercomplex.divcurl.families import builtin_families, bump_factor, get_family

RNG_POINTS = np.random.default_rng(0).uniform(0, 1, size=(40, 3))

factor_params = st.tuples(
    st.lists(st.floats(-2, 2), min_size=1, max_size=3),
    st.sampled_from([0.0, math.pi, 2 * math.pi, 7.3, 40 * math.pi]),
    st.floats(0, 2 * math.pi),
    st.floats(0, 0.4), st.floats(0.6, 1.0),
)


@settings(max_examples=40, deadline=None)
@given(factor_params)
def test_factor_integral_matches_quad(params):
    poly, omega, psi, a, b = params
    f = Factor.make(poly, omega, psi, a, b)
    if f is None:
        return
    ref, _ = quad(lambda t: f(np.array([t]))[0], a, b, limit=400)
    assert f.integral() == pytest.approx(ref, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(factor_params, factor_params)
def test_factor_product(p1, p2):
    f, g = Factor.make(*p1), Factor.make(*p2)
    if f is None or g is None:
        return
    t = np.linspace(0, 1, 57)
    total = sum(c * h(t) for c, h in f.times(g))
    np.testing.assert_allclose(total, f(t) * g(t), atol=1e-10)


def test_zero_frequency_product_is_single_factor():
    f = Factor.make([1.0, 2.0])
    g = Factor.make([0.5], omega=3.0, psi=0.2)
    assert len(f.times(g)) == 1


def test_derivative_matches_finite_difference():
    s = Scalar.wave(0, 3 * math.pi, 0.4) * Scalar.wave(1, math.pi) + Scalar.constant(2.0)
    h = 1e-6
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = h
        fd = (s(RNG_POINTS + shift) - s(RNG_POINTS - shift)) / (2 * h)
        np.testing.assert_allclose(s.diff(axis)(RNG_POINTS), fd, atol=1e-6)


def test_vector_identities():
    s = Scalar.plane_wave([0.6, 0.8, 0.0], 2 * math.pi * 3) * Scalar.wave(2, math.pi)
    assert s.gradient().curl().is_zero() or norm(s.gradient().curl()) <= 1e-10
    v = Vector(s, Scalar.wave(0, math.pi) * s, Scalar.wave(1, 2.0))
    assert norm(v.curl().div()) <= 1e-10


def test_plane_wave_values():
    k = np.array([0.6, 0.8, 0.0])
    s = Scalar.plane_wave(k, 5.0, 0.3, 2.0)
    np.testing.assert_allclose(s(RNG_POINTS), 2.0 * np.cos(5.0 * RNG_POINTS @ k + 0.3), atol=1e-12)


def test_inner_product_of_waves():
    u = Vector(Scalar.wave(0, 2 * math.pi * 4), None, None)
    assert inner(u, u) == pytest.approx(0.5, abs=1e-14)
    assert norm(Vector(Scalar.constant(3.0), None, Scalar.constant(4.0))) == pytest.approx(5.0)


@pytest.mark.parametrize("n", [1, 2, 8, 32])
def test_f1_defect_matches_quad(n):
    fam = get_family("F1")
    # only the e1 stripe against sin(pi x) survives
    ref, _ = quad(lambda x: math.cos(2 * math.pi * n * x) * math.sin(math.pi * x), 0, 1, limit=500)
    assert fam.defect(n) == pytest.approx(ref, abs=1e-12)
    assert abs(ref) == pytest.approx(2 / (math.pi * (4 * n * n - 1)), rel=1e-9)


def test_limit_pairings():
    fams = {f.name: f for f in builtin_families()}
    assert fams["F1"].limit_pairing() == pytest.approx(2 / math.pi, rel=1e-12)
    assert fams["F3"].limit_pairing() == pytest.approx(0.0, abs=1e-14)
    assert fams["F2"].defect(16) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("name", ["F1", "F2", "F3", "F4"])
def test_quadrature_agrees_with_closed_form(name):
    fam = get_family(name)
    E, H = fam.E(8), fam.H(8)
    assert integrate_product_gl(E, H) == pytest.approx(inner(E, H), abs=1e-10)


def test_aliasing_guard():
    E = Vector(Scalar.wave(0, 2 * math.pi * 16), None, None)
    with pytest.raises(AliasingRisk, match="aliasing risk"):
        integrate_product_gl(E, E, panels=8)
    assert required_panels([2 * math.pi * 16, 0, 0]).tolist() == [128, 1, 1]


def test_gl_rule_exact_for_polynomials():
    x, w = gl_rule(0.0, 1.0, 3)
    assert np.dot(w, x ** 9) == pytest.approx(0.1, rel=1e-13)


def test_bump_factor():
    f = bump_factor(0.125, 0.5)
    assert f.integral() == pytest.approx(0.5, rel=1e-12)
    assert f(np.array([0.125, 0.875, 0.0, 1.0])) == pytest.approx([0, 0, 0, 0], abs=1e-13)
    ref, _ = quad(lambda t: f(np.array([t]))[0], 0, 1, points=[0.125, 0.875])
    assert ref == pytest.approx(0.5, rel=1e-10)
