"""The genus-2 surface as a regular octagon with opposite sides glued.

Side ``i`` of the octagon is centered in direction ``i*pi/4`` and runs
counterclockwise from vertex ``i-1`` to vertex ``i``; vertex ``j`` sits in
direction ``j*pi/4 + pi/8``. ``pairings[i]`` is the hyperbolic translation
that carries side ``i`` onto side ``i+4``; it maps the copy of the octagon
across side ``i`` back onto the octagon.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .hypgeom import (
    GeodesicArc,
    HPoint,
    Isometry,
    UnitTangent,
    direction_towards,
    hyp_distance,
    poincare_to_klein,
    wrap_angle,
)

N_SIDES = 8
GENUS = 2


class SurfaceConstructionError(RuntimeError):
    pass


class ReductionError(RuntimeError):
    """No short word in the generators brings the point into the octagon."""


def side_direction(i: int) -> float:
    return (i % N_SIDES) * math.pi / 4.0


def vertex_direction(j: int) -> float:
    return (j % N_SIDES) * math.pi / 4.0 + math.pi / 8.0


def _regular_vertices(circumradius: float) -> list[HPoint]:
    rho = math.tanh(0.5 * circumradius)
    return [HPoint(rho * math.cos(vertex_direction(j)), rho * math.sin(vertex_direction(j)))
            for j in range(N_SIDES)]


def _interior_angle(circumradius: float) -> float:
    v = _regular_vertices(circumradius)
    d_prev = direction_towards(v[0].z, _ray_end(v[0], v[-1]))
    d_next = direction_towards(v[0].z, _ray_end(v[0], v[1]))
    delta = wrap_angle(d_next - d_prev)
    return min(delta, 2.0 * math.pi - delta)


def _ray_end(p: HPoint, q: HPoint) -> float:
    """Ideal endpoint reached by leaving ``p`` through ``q``."""
    return GeodesicArc.through(p, q).xi_plus


@dataclass(frozen=True)
class FundamentalOctagon:
    vertices: tuple
    sides: tuple
    pairings: tuple
    circumradius: float
    inradius: float
    genus: int = GENUS
    area: float = field(default=0.0)

    @property
    def partner(self):
        return [(i + 4) % N_SIDES for i in range(N_SIDES)]

    @cached_property
    def klein_side_distance(self) -> float:
        return math.tanh(self.inradius)

    @cached_property
    def side_normals(self) -> np.ndarray:
        """Spacelike unit normals of the side lines; interior is ``<N, X> < 0``."""
        d = self.klein_side_distance
        k = 1.0 / math.sqrt(1.0 - d * d)
        return np.array([[math.cos(side_direction(i)) * k,
                          math.sin(side_direction(i)) * k,
                          d * k] for i in range(N_SIDES)])

    @cached_property
    def lorentz_pairings(self) -> np.ndarray:
        return np.array([g.to_lorentz() for g in self.pairings])

    def klein_excess(self, z: complex) -> np.ndarray:
        """Signed Klein-model excess over each side line (positive = outside)."""
        k = poincare_to_klein(z)
        d = self.klein_side_distance
        return np.array([k.real * math.cos(side_direction(i)) + k.imag * math.sin(side_direction(i)) - d
                         for i in range(N_SIDES)])

    def contains(self, p: HPoint, tol: float = 0.0) -> bool:
        return bool(self.klein_excess(p.z).max() <= tol)

    def relator(self) -> Isometry:
        """Product of the pairings around the single vertex cycle."""
        word = self.vertex_cycle_word()
        g = Isometry.identity()
        for i in word:
            g = self.pairings[i] @ g
        return g

    def vertex_cycle_word(self) -> list[int]:
        """Sides whose pairings, applied in order, walk once around vertex 0.

        Starting at vertex 0 on side 0, each step applies the pairing of the
        current side and then switches to the other side through the image
        vertex. The walk closes after one full turn.
        """
        word = []
        vertex, side = 0, 0
        for _ in range(4 * N_SIDES):
            word.append(side)
            image = self.pairings[side](self.vertices[vertex])
            target = min(range(N_SIDES), key=lambda j: image.euclidean_distance(self.vertices[j]))
            partner = (side + 4) % N_SIDES
            # the image vertex is an endpoint of the partner side; continue on its other side
            ends = {(partner - 1) % N_SIDES: (partner - 1) % N_SIDES, partner: (partner + 1) % N_SIDES}
            vertex, side = target, ends[target]
            if vertex == 0 and side == 0:
                return word
        raise SurfaceConstructionError("vertex cycle did not close")


def _octagon_area_by_quadrature(inradius: float) -> float:
    # in Klein coordinates the area element integrates radially to (1-k^2)^(-1/2) - 1
    d = math.tanh(inradius)

    def radial(phi: float) -> float:
        # the sector |phi| <= pi/8 is bounded by side 0
        k = d / math.cos(phi)
        return 1.0 / math.sqrt(1.0 - k * k) - 1.0

    val, _ = integrate.quad(radial, -math.pi / 8.0, math.pi / 8.0, epsabs=1e-13, epsrel=1e-13)
    return N_SIDES * val


def build_octagon() -> FundamentalOctagon:
    target = math.pi / 4.0
    circumradius = optimize.brentq(lambda r: _interior_angle(r) - target, 0.5, 5.0, xtol=1e-14)
    vertices = _regular_vertices(circumradius)
    sides = tuple(GeodesicArc.through(vertices[i - 1], vertices[i]) for i in range(N_SIDES))
    mid0 = sides[0].point_at(0.5 * sides[0].length)
    inradius = hyp_distance(HPoint(0.0, 0.0), mid0)
    pairings = tuple(Isometry.translation(2.0 * inradius, side_direction(i) + math.pi)
                     for i in range(N_SIDES))
    area = _octagon_area_by_quadrature(inradius)
    octagon = FundamentalOctagon(tuple(vertices), sides, pairings, circumradius, inradius, GENUS, area)
    _validate_octagon(octagon)
    return octagon


def _validate_octagon(o: FundamentalOctagon) -> None:
    problems = []
    for j in range(N_SIDES):
        v = o.vertices[j]
        d_prev = direction_towards(v.z, _ray_end(v, o.vertices[j - 1]))
        d_next = direction_towards(v.z, _ray_end(v, o.vertices[(j + 1) % N_SIDES]))
        delta = wrap_angle(d_next - d_prev)
        ang = min(delta, 2.0 * math.pi - delta)
        if abs(ang - math.pi / 4.0) > 1e-8:
            problems.append(f"vertex {j} angle {ang}")
    if abs(o.area - 4.0 * math.pi) > 1e-6:
        problems.append(f"area {o.area}")
    for i in range(N_SIDES):
        g, side, other = o.pairings[i], o.sides[i], o.sides[(i + 4) % N_SIDES]
        for p in (side.start, side.end):
            q = g(p)
            if min(q.euclidean_distance(other.start), q.euclidean_distance(other.end)) > 1e-9:
                problems.append(f"pairing {i} endpoint mismatch")
    if o.relator().distance_to(Isometry.identity()) > 1e-8:
        problems.append("relator is not the identity")
    if problems:
        raise SurfaceConstructionError("; ".join(problems))


@dataclass(frozen=True)
class Surface:
    octagon: FundamentalOctagon
    kappa: float
    injectivity_radius: float

    @property
    def genus(self) -> int:
        return self.octagon.genus

    @property
    def area(self) -> float:
        return self.octagon.area

    def contains(self, p: HPoint, tol: float = 0.0) -> bool:
        return self.octagon.contains(p, tol)

    # --- sampling --------------------------------------------------------

    def sample_base_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` points (complex array) uniform for hyperbolic area in the octagon.

        Proposals are uniform in the Euclidean disk circumscribing the octagon
        and are accepted with probability proportional to the area density
        ``4 / (1 - |z|^2)^2``.
        """
        rmax = math.tanh(0.5 * self.octagon.circumradius)
        dmax = 1.0 / (1.0 - rmax * rmax) ** 2
        d = self.octagon.klein_side_distance
        cos_s = np.cos(np.arange(N_SIDES) * math.pi / 4.0)
        sin_s = np.sin(np.arange(N_SIDES) * math.pi / 4.0)
        out = np.empty(n, dtype=complex)
        filled = 0
        while filled < n:
            m = max(64, int(1.3 * (n - filled) / 0.12))
            r = rmax * np.sqrt(rng.random(m))
            phi = 2.0 * math.pi * rng.random(m)
            u = rng.random(m)
            z = r * np.exp(1j * phi)
            keep = u * dmax < 1.0 / (1.0 - r * r) ** 2
            k = 2.0 * z / (1.0 + r * r)
            excess = np.max(np.outer(k.real, cos_s) + np.outer(k.imag, sin_s), axis=1) - d
            keep &= excess < 0.0
            z = z[keep]
            take = min(len(z), n - filled)
            out[filled:filled + take] = z[:take]
            filled += take
        return out

    def sample_liouville(self, rng: np.random.Generator) -> UnitTangent:
        z = self.sample_base_points(rng, 1)[0]
        theta = 2.0 * math.pi * rng.random()
        return UnitTangent(HPoint.from_complex(z), theta)

    # --- reduction -------------------------------------------------------

    def reduce_to_domain(self, p: HPoint, max_word: int = 12, tol: float = 1e-13) -> tuple[HPoint, Isometry]:
        """Return ``(p', g)`` with ``g(p) = p'`` in the closed octagon.

        Boundary points are assigned by half-open ownership: side ``i`` owns
        its counterclockwise-first endpoint, and points owned by sides 4..7
        are moved to their partner side.
        """
        g = Isometry.identity()
        q = p
        for _ in range(max_word + 1):
            excess = self.octagon.klein_excess(q.z)
            i = int(np.argmax(excess))
            if excess[i] > tol:
                g = self.octagon.pairings[i] @ g
                q = self.octagon.pairings[i](q)
                continue
            owner = self._boundary_owner(q, excess, tol)
            if owner is not None and owner >= 4:
                g = self.octagon.pairings[owner] @ g
                q = self.octagon.pairings[owner](q)
                continue
            return q, g
        raise ReductionError(f"point {p} not reduced within {max_word} generators")

    def _boundary_owner(self, q: HPoint, excess: np.ndarray, tol: float):
        on = [i for i in range(N_SIDES) if abs(excess[i]) <= tol]
        if not on:
            return None
        if len(on) == 1:
            return on[0]
        # at a vertex between sides i and i+1 the vertex belongs to side i+1
        a, b = sorted(on)[:2]
        return b if b == a + 1 else a

    # --- group data ------------------------------------------------------

    def neighbor_copies(self, center: HPoint, radius: float, max_word: int = 6) -> list[Isometry]:
        """Group elements ``h`` with ``h(octagon)`` meeting the disk ``D(center, radius)``.

        Breadth-first over words; a copy is kept if ``h^{-1}(center)`` lies
        within ``radius`` of the octagon.
        """
        found = [Isometry.identity()]
        seen = [Isometry.identity()]
        frontier = [Isometry.identity()]
        for _ in range(max_word):
            nxt = []
            for h in frontier:
                for g in self.octagon.pairings:
                    cand = h @ g.inverse()
                    if any(cand.distance_to(s) < 1e-9 for s in seen):
                        continue
                    seen.append(cand)
                    if self._distance_to_octagon(cand.inverse()(center)) < radius:
                        found.append(cand)
                        nxt.append(cand)
            frontier = nxt
            if not frontier:
                break
        return found

    def _distance_to_octagon(self, p: HPoint) -> float:
        if self.contains(p):
            return 0.0
        best = math.inf
        for side in self.octagon.sides:
            best = min(best, _distance_point_to_segment(p, side))
        return best

    def to_json(self) -> str:
        o = self.octagon
        doc = {
            "genus": o.genus,
            "area": o.area,
            "kappa": self.kappa,
            "injectivity_radius": self.injectivity_radius,
            "circumradius": o.circumradius,
            "inradius": o.inradius,
            "vertices": [[v.x, v.y] for v in o.vertices],
            "generators": [
                {"side": i, "partner": (i + 4) % N_SIDES,
                 "a": [g.a.real, g.a.imag], "b": [g.b.real, g.b.imag]}
                for i, g in enumerate(o.pairings)
            ],
            "vertex_cycle": o.vertex_cycle_word(),
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _distance_point_to_segment(p: HPoint, arc: GeodesicArc) -> float:
    g = Isometry.moving_to_origin(p)
    a, b = g(arc.start).z, g(arc.end).z
    # after moving p to the origin, the closest point lies on the Klein chord
    ka, kb = poincare_to_klein(a), poincare_to_klein(b)
    d = kb - ka
    t = -(ka.real * d.real + ka.imag * d.imag) / (abs(d) ** 2)
    t = min(max(t, 0.0), 1.0)
    k = abs(ka + t * d)
    return math.atanh(min(k, 1.0 - 1e-16))


def shortest_translation_length(pairings, max_len: int = 3) -> float:
    best = math.inf
    for n in range(1, max_len + 1):
        for word in itertools.product(range(N_SIDES), repeat=n):
            if any((word[k] - word[k + 1]) % N_SIDES == 4 for k in range(n - 1)):
                continue  # contains g g^-1
            g = Isometry.identity()
            for i in word:
                g = pairings[i] @ g
            ell = g.translation_length()
            if ell > 1e-9:
                best = min(best, ell)
    return best


def build_genus2_surface() -> Surface:
    octagon = build_octagon()
    kappa = 1.0 / (2.0 * math.pi * (2 * octagon.genus - 2))
    rho = 0.5 * shortest_translation_length(octagon.pairings)
    return Surface(octagon, kappa, rho)
