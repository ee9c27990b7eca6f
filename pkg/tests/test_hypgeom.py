import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from geotess.hypgeom import (ORIGIN, DegenerateIsometryError, GeodesicArc, HPoint, Isometry,
                             UnitTangent, apply_isometry, arc_intersection, geodesic_from_tangent,
                             hyp_distance, klein_to_poincare, poincare_to_klein)

angle = st.floats(0.0, 2 * math.pi, exclude_max=True)


@st.composite
def points(draw):
    r = draw(st.floats(0.0, 0.97))
    return HPoint.from_complex(r * cmath.exp(1j * draw(angle)))


@st.composite
def isometries(draw):
    return Isometry.rotation(draw(angle)) @ Isometry.translation(draw(st.floats(0.0, 3.0)), draw(angle))


def random_isometry(rng, rmax=0.5):
    # moves a point of |p| <= rmax to the origin, then rotates; steps of at most 2 artanh(rmax)
    p = random_point(rng, rmax)
    return Isometry.rotation(rng.uniform(0, 2 * math.pi)) @ Isometry.moving_to_origin(p)


def random_point(rng, rmax=0.95):
    return HPoint.from_complex(rmax * math.sqrt(rng.random()) * cmath.exp(2j * math.pi * rng.random()))


def test_point_outside_disk_rejected():
    with pytest.raises(ValueError):
        HPoint(0.8, 0.6)
    with pytest.raises(ValueError):
        HPoint(1.0, 0.0)


def test_distance_origin():
    assert hyp_distance(ORIGIN, ORIGIN) == 0.0


def test_distance_half_matches_metric_integral():
    d = hyp_distance(ORIGIN, HPoint(0.5, 0.0))
    assert d == pytest.approx(2 * math.atanh(0.5), abs=1e-12)
    # integrate the metric 2|dz|/(1-|z|^2) along the diameter
    val, _ = integrate.quad(lambda x: 2.0 / (1.0 - x * x), 0.0, 0.5)
    assert d == pytest.approx(val, abs=1e-10)
    assert d == pytest.approx(1.098612, abs=1e-6)


def test_distance_symmetric(rng):
    for _ in range(100):
        p, q = random_point(rng), random_point(rng)
        assert hyp_distance(p, q) == hyp_distance(q, p)


def test_identity_and_rotation():
    p = HPoint(0.3, -0.2)
    q = apply_isometry(Isometry.identity(), p)
    assert q.x == pytest.approx(p.x, abs=1e-15) and q.y == pytest.approx(p.y, abs=1e-15)
    r = apply_isometry(Isometry.rotation(math.pi), HPoint(0.3, 0.0))
    assert r.x == pytest.approx(-0.3, abs=1e-14) and r.y == pytest.approx(0.0, abs=1e-14)


def test_degenerate_coefficients():
    with pytest.raises(DegenerateIsometryError):
        Isometry(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(DegenerateIsometryError):
        Isometry(float("nan"), 0.0, 0.0, 1.0)


def test_blowup_is_reported():
    # translation length 100 needs coefficients near e^50, beyond double precision
    g = Isometry.translation(25.0)
    with pytest.raises(DegenerateIsometryError):
        for _ in range(4):
            g = Isometry.rotation(0.7) @ Isometry.translation(25.0) @ g


def test_determinant_exact_after_normalization(rng):
    for _ in range(50):
        g = random_isometry(rng, 0.95)
        assert abs(g.determinant - 1.0) < 1e-12


@given(isometries(), points(), points())
def test_isometry_preserves_distance(g, p, q):
    assert abs(hyp_distance(g(p), g(q)) - hyp_distance(p, q)) < 1e-9 * max(1.0, hyp_distance(p, q))


@given(isometries(), points())
def test_inverse_composition(g, p):
    q = (g.inverse() @ g)(p)
    assert abs(q.z - p.z) < 1e-10


def test_composition_closure(rng):
    g = Isometry.identity()
    for _ in range(50):
        g = random_isometry(rng) @ g
        assert abs(g.determinant - 1.0) < 1e-8
    for _ in range(100):
        p, q = random_point(rng, 0.9), random_point(rng, 0.9)
        gp, gq = g(p), g(q)
        assert abs(gp.z) < 1 and abs(gq.z) < 1
        d = hyp_distance(p, q)
        assert abs(hyp_distance(gp, gq) - d) < 1e-8 * max(1.0, d)


def test_model_round_trip(rng):
    for _ in range(50):
        z = random_point(rng).z
        assert abs(klein_to_poincare(poincare_to_klein(z)) - z) < 1e-13


def test_geodesic_from_origin():
    xm, xp = geodesic_from_tangent(UnitTangent(ORIGIN, 0.0))
    assert xm == pytest.approx(math.pi) and xp == pytest.approx(0.0, abs=1e-15)


def test_geodesic_from_origin_antipodal(rng):
    for theta in rng.uniform(0, 2 * math.pi, 10):
        xm, xp = geodesic_from_tangent(UnitTangent(ORIGIN, theta))
        assert abs(cmath.exp(1j * xp) - cmath.exp(1j * theta)) < 1e-12
        assert abs(cmath.exp(1j * xm) + cmath.exp(1j * theta)) < 1e-12


def _march(z0: complex, theta: float, t_max: float = 40.0):
    """Integrate the disk geodesic ODE with unit hyperbolic speed."""

    def rhs(_, y):
        z = y[0] + 1j * y[1]
        v = y[2] + 1j * y[3]
        # Christoffel term of the conformal metric 2|dz|/(1-|z|^2)
        acc = -2.0 * z.conjugate() * v * v / (1.0 - abs(z) ** 2)
        return [v.real, v.imag, acc.real, acc.imag]

    v0 = 0.5 * (1.0 - abs(z0) ** 2) * cmath.exp(1j * theta)
    sol = integrate.solve_ivp(rhs, (0.0, t_max), [z0.real, z0.imag, v0.real, v0.imag],
                              rtol=1e-11, atol=1e-13)
    return sol.y[0, -1] + 1j * sol.y[1, -1]


def test_geodesic_endpoints_match_ode():
    v = UnitTangent(HPoint(0.4, 0.0), math.pi / 2)
    xm, xp = geodesic_from_tangent(v)
    fwd = _march(0.4 + 0j, math.pi / 2)
    back = _march(0.4 + 0j, -math.pi / 2)
    assert abs(cmath.phase(fwd) - xp) < 1e-6 or abs(abs(cmath.phase(fwd) - xp) - 2 * math.pi) < 1e-6
    assert abs(cmath.exp(1j * xm) - back / abs(back)) < 1e-6


@given(points(), points())
def test_arc_invariants(p, q):
    if abs(p.z - q.z) < 1e-6:
        return
    arc = GeodesicArc.through(p, q)
    assert abs(arc.length - hyp_distance(p, q)) < 1e-9
    circ = arc.carrier_circle()
    if circ is None:
        # a diameter: both points collinear with the origin
        assert abs((p.z.conjugate() * q.z).imag) < 1e-9
        return
    c, r = circ
    if r > 1e6:
        return
    assert abs(abs(p.z - c) - r) < 1e-9 * max(1.0, r)
    assert abs(abs(q.z - c) - r) < 1e-9 * max(1.0, r)
    # orthogonal to the unit circle: |c|^2 = 1 + r^2
    assert abs(abs(c) ** 2 - 1.0 - r * r) < 1e-9 * max(1.0, r * r)


def test_diameters_cross_at_origin():
    a = GeodesicArc.through(HPoint(-0.5, 0.0), HPoint(0.5, 0.0))
    b = GeodesicArc.through(HPoint(0.0, -0.5), HPoint(0.0, 0.5))
    c = arc_intersection(a, b)
    assert c is not None
    assert abs(c.point.z) < 1e-14
    assert c.angle == pytest.approx(math.pi / 2)
    assert not c.tangential


def test_identical_arcs_do_not_cross():
    a = GeodesicArc.through(HPoint(-0.5, 0.1), HPoint(0.5, 0.2))
    assert arc_intersection(a, a) is None
    assert arc_intersection(a, a.reversed()) is None


def test_shared_endpoint_only():
    a = GeodesicArc.through(HPoint(0.0, 0.0), HPoint(0.5, 0.0))
    b = GeodesicArc.through(HPoint(0.0, 0.0), HPoint(0.0, 0.5))
    assert arc_intersection(a, b) is None


def _bisect_crossing(a: GeodesicArc, b: GeodesicArc):
    # signed side of b's geodesic along a, in the Klein model where it is a line
    kb0, kb1 = poincare_to_klein(b.start.z), poincare_to_klein(b.end.z)
    d = kb1 - kb0

    def side(s):
        k = poincare_to_klein(a.point_at(s).z) - kb0
        return d.real * k.imag - d.imag * k.real

    lo, hi = 0.0, a.length
    flo = side(lo)
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        fm = side(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return a.point_at(0.5 * (lo + hi))


def test_crossing_matches_bisection(rng):
    found = 0
    while found < 20:
        a = GeodesicArc.through(random_point(rng), random_point(rng))
        b = GeodesicArc.through(random_point(rng), random_point(rng))
        c = arc_intersection(a, b)
        if c is None:
            continue
        found += 1
        ref = _bisect_crossing(a, b)
        assert abs(c.point.z - ref.z) < 1e-10
        assert 0 < c.angle < math.pi


def test_crossing_symmetric(rng):
    found = 0
    while found < 20:
        a = GeodesicArc.through(random_point(rng), random_point(rng))
        b = GeodesicArc.through(random_point(rng), random_point(rng))
        c1, c2 = arc_intersection(a, b), arc_intersection(b, a)
        assert (c1 is None) == (c2 is None)
        if c1 is None:
            continue
        found += 1
        assert abs(c1.point.z - c2.point.z) < 1e-14
        assert c1.angle == pytest.approx(c2.angle, abs=1e-12)


def test_near_tangential_flagged():
    a = GeodesicArc.through(HPoint(-0.5, 0.0), HPoint(0.5, 0.0))
    b = GeodesicArc.through(HPoint(-0.5, -1e-8), HPoint(0.5, 1e-8))
    c = arc_intersection(a, b)
    assert c is not None and c.tangential
