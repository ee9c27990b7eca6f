"""Hyperbolic plane primitives in the Poincare disk model.

Points are :class:`HPoint` values in the open unit disk, isometries are
Mobius maps of the disk kept in SU(1,1) normal form, and geodesics are
described by their ideal endpoints on the unit circle.

Internally some computations go through the Klein (projective) model, where
geodesics are straight chords, and the hyperboloid model, where isometries
act linearly. The helpers ``poincare_to_klein``, ``klein_to_poincare``,
``to_hyperboloid`` and ``from_hyperboloid`` convert between them.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

GEOM_TOL = 1e-9
ALG_TOL = 1e-12
TANGENCY_TOL = 1e-6

TWO_PI = 2.0 * math.pi


class DegenerateIsometryError(ArithmeticError):
    """Raised when Mobius coefficients no longer describe a disk automorphism."""


def _exact_det(a: complex, b: complex, c: complex, d: complex) -> complex:
    """``a d - b c`` evaluated exactly, then rounded once.

    Long products of isometries have coefficients far above 1 whose
    determinant would otherwise be lost to cancellation.
    """
    ar, ai, br, bi = Fraction(a.real), Fraction(a.imag), Fraction(b.real), Fraction(b.imag)
    cr, ci, dr, di = Fraction(c.real), Fraction(c.imag), Fraction(d.real), Fraction(d.imag)
    return complex(float(ar * dr - ai * di - br * cr + bi * ci),
                   float(ar * di + ai * dr - br * ci - bi * cr))


def wrap_angle(theta: float) -> float:
    """Normalize an angle to ``[0, 2*pi)``."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    if t >= TWO_PI:
        t = 0.0
    return t


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (self.x * self.x + self.y * self.y < 1.0):
            raise ValueError(f"point ({self.x}, {self.y}) is not inside the unit disk")

    @classmethod
    def from_complex(cls, z: complex) -> "HPoint":
        return cls(float(z.real), float(z.imag))

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    def euclidean_distance(self, other: "HPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


ORIGIN = HPoint(0.0, 0.0)


def hyp_distance(p: HPoint, q: HPoint) -> float:
    """Hyperbolic distance in the disk model (curvature -1)."""
    num = abs(p.z - q.z)
    if num == 0.0:
        return 0.0
    den = abs(1.0 - p.z.conjugate() * q.z)
    return 2.0 * math.atanh(min(num / den, 1.0 - 1e-17))


@dataclass(frozen=True)
class Isometry:
    """Orientation preserving isometry ``z -> (a z + b) / (c z + d)``.

    Coefficients are kept in SU(1,1) form (``c = conj(b)``, ``d = conj(a)``,
    ``|a|^2 - |b|^2 = 1``); the constructor renormalizes whatever it is given.
    """

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        a, b, c, d = (complex(v) for v in (self.a, self.b, self.c, self.d))
        det = _exact_det(a, b, c, d) if all(map(cmath.isfinite, (a, b, c, d))) else complex("nan")
        if not cmath.isfinite(det) or abs(det) < ALG_TOL:
            raise DegenerateIsometryError(f"degenerate Mobius coefficients (det={det})")
        s = cmath.sqrt(det)
        a, b, c, d = a / s, b / s, c / s, d / s
        # fix the overall sign so that re(a) >= 0, then project onto SU(1,1)
        if a.real < 0.0 or (a.real == 0.0 and a.imag < 0.0):
            a, b, c, d = -a, -b, -c, -d
        a2 = 0.5 * (a + d.conjugate())
        b2 = 0.5 * (b + c.conjugate())
        norm = _exact_det(a2, b2, b2.conjugate(), a2.conjugate()).real
        if not norm > ALG_TOL:
            raise DegenerateIsometryError("coefficients do not preserve the unit disk")
        k = 1.0 / math.sqrt(norm)
        a2, b2 = a2 * k, b2 * k
        object.__setattr__(self, "a", a2)
        object.__setattr__(self, "b", b2)
        object.__setattr__(self, "c", b2.conjugate())
        object.__setattr__(self, "d", a2.conjugate())

    @classmethod
    def identity(cls) -> "Isometry":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def rotation(cls, phi: float) -> "Isometry":
        h = cmath.exp(0.5j * phi)
        return cls(h, 0.0, 0.0, h.conjugate())

    @classmethod
    def translation(cls, distance: float, direction: float = 0.0) -> "Isometry":
        """Translation by ``distance`` along the diameter at angle ``direction``."""
        ch, sh = math.cosh(0.5 * distance), math.sinh(0.5 * distance)
        u = cmath.exp(1j * direction)
        # R(direction) o T o R(-direction) with T = [[ch, sh], [sh, ch]]
        return cls(ch, sh * u, sh * u.conjugate(), ch)

    @classmethod
    def moving_to_origin(cls, p: HPoint) -> "Isometry":
        """The map ``z -> (z - p) / (1 - conj(p) z)``."""
        return cls(1.0, -p.z, -p.z.conjugate(), 1.0)

    @property
    def determinant(self) -> complex:
        return _exact_det(self.a, self.b, self.c, self.d)

    @property
    def trace(self) -> float:
        return 2.0 * self.a.real

    def apply_complex(self, z: complex) -> complex:
        return (self.a * z + self.b) / (self.c * z + self.d)

    def __call__(self, p: HPoint) -> HPoint:
        w = self.apply_complex(p.z)
        r2 = w.real * w.real + w.imag * w.imag
        if r2 >= 1.0:
            # rounding can push far-out images onto the circle
            w = w / math.sqrt(r2) * (1.0 - 1e-16)
        return HPoint.from_complex(w)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        """Composition: ``(self @ other)(p) == self(other(p))``."""
        return Isometry(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> "Isometry":
        return Isometry(self.d, -self.b, -self.c, self.a)

    def translation_length(self) -> float:
        """Translation length; zero for elliptic and parabolic elements."""
        t = abs(self.trace)
        return 2.0 * math.acosh(0.5 * t) if t > 2.0 else 0.0

    def distance_to(self, other: "Isometry") -> float:
        """Coefficient distance, insensitive to the overall sign ambiguity."""
        m1 = np.array([self.a, self.b, self.c, self.d])
        m2 = np.array([other.a, other.b, other.c, other.d])
        return float(min(np.abs(m1 - m2).max(), np.abs(m1 + m2).max()))

    def to_lorentz(self) -> np.ndarray:
        """The 3x3 matrix acting on hyperboloid coordinates ``(x, y, t)``."""
        probes = [0.0, 0.5, 0.5j]
        src = np.column_stack([to_hyperboloid(z) for z in probes])
        dst = np.column_stack([to_hyperboloid(self.apply_complex(z)) for z in probes])
        return dst @ np.linalg.inv(src)


def apply_isometry(g: Isometry, p: HPoint) -> HPoint:
    return g(p)


# --- model conversions -------------------------------------------------

def to_hyperboloid(z: complex) -> np.ndarray:
    r2 = z.real * z.real + z.imag * z.imag
    k = 1.0 / (1.0 - r2)
    return np.array([2.0 * z.real * k, 2.0 * z.imag * k, (1.0 + r2) * k])


def from_hyperboloid(X) -> complex:
    return complex(X[0], X[1]) / (1.0 + X[2])


def poincare_to_klein(z):
    """Works on complex scalars and numpy complex arrays alike."""
    return 2.0 * z / (1.0 + np.abs(z) ** 2)


def klein_to_poincare(k):
    r2 = np.abs(k) ** 2
    return k / (1.0 + np.sqrt(np.maximum(1.0 - r2, 0.0)))


def lorentz_dot(X, Y):
    """Minkowski product ``x1 y1 + x2 y2 - t1 t2`` over the last axis."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    return X[..., 0] * Y[..., 0] + X[..., 1] * Y[..., 1] - X[..., 2] * Y[..., 2]


# --- geodesics ---------------------------------------------------------

@dataclass(frozen=True)
class UnitTangent:
    base: HPoint
    direction: float

    def __post_init__(self):
        object.__setattr__(self, "direction", wrap_angle(float(self.direction)))

    def reversed(self) -> "UnitTangent":
        return UnitTangent(self.base, self.direction + math.pi)


def geodesic_from_tangent(v: UnitTangent) -> tuple[float, float]:
    """Ideal endpoints ``(xi_minus, xi_plus)`` of the geodesic through ``v``.

    The point is moved to the origin, where the geodesic is a diameter, and
    the two ends of the diameter are mapped back.
    """
    p = v.base.z
    u = cmath.exp(1j * v.direction)
    back = lambda w: (w + p) / (1.0 + p.conjugate() * w)
    xi_plus = back(u)
    xi_minus = back(-u)
    return wrap_angle(cmath.phase(xi_minus)), wrap_angle(cmath.phase(xi_plus))


def direction_towards(z: complex, xi: float) -> float:
    """Direction at ``z`` of the geodesic ray heading to the ideal point ``xi``."""
    w = cmath.exp(1j * xi)
    m = (w - z) / (1.0 - z.conjugate() * w)
    return wrap_angle(cmath.phase(m))


def _ideal_endpoints_through(p: complex, q: complex) -> tuple[float, float]:
    # in the Klein model the geodesic is the chord through the two images
    kp, kq = poincare_to_klein(p), poincare_to_klein(q)
    d = kq - kp
    dd = d.real * d.real + d.imag * d.imag
    pd = kp.real * d.real + kp.imag * d.imag
    pp = kp.real * kp.real + kp.imag * kp.imag
    disc = math.sqrt(max(pd * pd - dd * (pp - 1.0), 0.0))
    t_plus = (-pd + disc) / dd
    t_minus = (-pd - disc) / dd
    return cmath.phase(kp + t_minus * d), cmath.phase(kp + t_plus * d)


@dataclass(frozen=True)
class GeodesicArc:
    start: HPoint
    end: HPoint
    xi_minus: float
    xi_plus: float
    length: float

    @classmethod
    def through(cls, start: HPoint, end: HPoint) -> "GeodesicArc":
        if start == end:
            raise ValueError("an arc needs distinct endpoints")
        xm, xp = _ideal_endpoints_through(start.z, end.z)
        return cls(start, end, wrap_angle(xm), wrap_angle(xp), hyp_distance(start, end))

    def carrier_circle(self) -> Optional[tuple[complex, float]]:
        """Euclidean (center, radius) of the carrying circle, ``None`` for diameters."""
        mid = 0.5 * (self.xi_minus + self.xi_plus)
        half = 0.5 * (self.xi_plus - self.xi_minus)
        c = math.cos(half)
        if abs(c) < 1e-15:
            return None
        center = cmath.exp(1j * mid) / c
        return center, abs(math.tan(half))

    def point_at(self, s: float) -> HPoint:
        """Point at hyperbolic distance ``s`` from ``start`` along the arc."""
        g = Isometry.moving_to_origin(self.start)
        phi = direction_towards(self.start.z, self.xi_plus)
        w = math.tanh(0.5 * s) * cmath.exp(1j * phi)
        return g.inverse()(HPoint.from_complex(w))

    def tangent_direction(self, p: HPoint) -> float:
        return direction_towards(p.z, self.xi_plus)

    def reversed(self) -> "GeodesicArc":
        return GeodesicArc(self.end, self.start, self.xi_plus, self.xi_minus, self.length)


class Crossing(NamedTuple):
    point: HPoint
    angle: float
    tangential: bool


def _klein_segment_params(a0: complex, a1: complex, b0: complex, b1: complex):
    da = a1 - a0
    db = b1 - b0
    den = da.real * db.imag - da.imag * db.real
    if den == 0.0:
        return None
    w = b0 - a0
    s = (w.real * db.imag - w.imag * db.real) / den
    t = (w.real * da.imag - w.imag * da.real) / den
    return s, t


def arc_intersection(a: GeodesicArc, b: GeodesicArc) -> Optional[Crossing]:
    """Transversal crossing of two arcs interior to both, if any.

    Identical arcs and arcs meeting only at an endpoint give ``None``. A
    crossing whose angle is below ``TANGENCY_TOL`` is still returned, with
    ``tangential`` set so callers can count it.
    """
    if a == b or a == b.reversed():
        return None
    ka0, ka1 = poincare_to_klein(a.start.z), poincare_to_klein(a.end.z)
    kb0, kb1 = poincare_to_klein(b.start.z), poincare_to_klein(b.end.z)
    st = _klein_segment_params(ka0, ka1, kb0, kb1)
    if st is None:
        return None
    s, t = st
    eps = 1e-12
    if not (eps < s < 1.0 - eps and eps < t < 1.0 - eps):
        return None
    z = klein_to_poincare(ka0 + s * (ka1 - ka0))
    p = HPoint.from_complex(z)
    delta = wrap_angle(a.tangent_direction(p) - b.tangent_direction(p))
    angle = delta if delta <= math.pi else TWO_PI - delta
    tangential = angle < TANGENCY_TOL or math.pi - angle < TANGENCY_TOL
    return Crossing(p, angle, tangential)
