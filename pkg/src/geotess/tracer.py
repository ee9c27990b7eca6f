"""Geodesics on the genus-2 surface, cut into crossings of the octagon.

The flow is integrated exactly in hyperboloid coordinates by the kernel in
:mod:`geotess.kernels`; every crossing of the octagon becomes one arc in
fundamental-domain coordinates. In the Klein model those arcs are straight
chords, so self-intersections reduce to Euclidean segment tests and a disk
centered at the origin is a Euclidean disk.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .hypgeom import (
    TANGENCY_TOL,
    GeodesicArc,
    HPoint,
    Isometry,
    UnitTangent,
    geodesic_from_tangent,
    hyp_distance,
    lorentz_dot,
    to_hyperboloid,
)
from .plp import ChordConfiguration, wrap
from .surface import Surface

VERTEX_TOL = 1e-12
SEGMENT_EPS = 1e-12


class DegenerateTraceError(RuntimeError):
    """The geodesic left the octagon through (numerically) a vertex."""


def _klein(X: np.ndarray) -> np.ndarray:
    return X[..., :2] / X[..., 2:3]


def _poincare(X: np.ndarray) -> np.ndarray:
    return (X[..., 0] + 1j * X[..., 1]) / (1.0 + X[..., 2])


def _from_klein(k: np.ndarray) -> np.ndarray:
    w = 1.0 / np.sqrt(1.0 - (k ** 2).sum(axis=-1))
    return np.stack([k[..., 0] * w, k[..., 1] * w, w], axis=-1)


def _hyp_dist(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Hyperbolic distance from the chord length ``|X - Y|_L = 2 sinh(d/2)``."""
    D = X - Y
    q = np.maximum(lorentz_dot(D, D), 0.0)
    return 2.0 * np.arcsinh(0.5 * np.sqrt(q))


def tangent_vector(v: UnitTangent) -> tuple[np.ndarray, np.ndarray]:
    """Hyperboloid point and unit tangent for ``v``.

    The tangent points toward the forward ideal endpoint ``n``; it is the
    normalized projection ``(n + <n, X> X) / -<n, X>``.
    """
    X = to_hyperboloid(v.base.z)
    _, xi = geodesic_from_tangent(v)
    n = np.array([math.cos(xi), math.sin(xi), 1.0])
    a = lorentz_dot(n, X)
    U = (n + a * X) / (-a)
    return X, U


@dataclass(frozen=True, eq=False)
class GeodesicTrace:
    """A geodesic of length ``T`` as consecutive octagon crossings.

    Arc ``k`` runs from ``starts[k]`` to ``ends[k]`` (hyperboloid points),
    has hyperbolic length ``lengths[k]`` and leaves through side
    ``exit_sides[k]`` (``-1`` for the final arc).
    """

    start: UnitTangent
    T: float
    starts: np.ndarray
    ends: np.ndarray
    lengths: np.ndarray
    exit_sides: np.ndarray
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.lengths)

    @cached_property
    def times(self) -> np.ndarray:
        """Start time of each arc, with the total length appended."""
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    @cached_property
    def klein_starts(self) -> np.ndarray:
        return _klein(self.starts)

    @cached_property
    def klein_ends(self) -> np.ndarray:
        return _klein(self.ends)

    @cached_property
    def arcs(self) -> list[GeodesicArc]:
        ps, pe = _poincare(self.starts), _poincare(self.ends)
        out = []
        for a, b in zip(ps, pe):
            s, e = HPoint.from_complex(complex(a)), HPoint.from_complex(complex(b))
            out.append(GeodesicArc.through(s, e))
        return out

    def end_tangent(self) -> UnitTangent:
        """Unit tangent at time ``T`` in fundamental-domain coordinates."""
        if len(self) == 0:
            return self.start
        arc = GeodesicArc.through(HPoint.from_complex(complex(_poincare(self.starts[-1]))),
                                  HPoint.from_complex(complex(_poincare(self.ends[-1]))))
        return UnitTangent(arc.end, arc.tangent_direction(arc.end))

    def continuity_error(self, surface: Surface) -> float:
        """Largest gap between a mapped arc end and the next arc start."""
        if len(self) < 2:
            return 0.0
        M = surface.octagon.lorentz_pairings
        mapped = np.einsum("kij,kj->ki", M[self.exit_sides[:-1]], self.ends[:-1])
        pa, pb = _poincare(mapped), _poincare(self.starts[1:])
        return float(np.abs(pa - pb).max())

    def to_dict(self, inters: Optional["IntersectionSet"] = None) -> dict:
        ps, pe = _poincare(self.starts), _poincare(self.ends)
        doc = {
            "seed": self.seed,
            "T": self.T,
            "start": {"base": [self.start.base.x, self.start.base.y],
                      "direction": self.start.direction},
            "arcs": [{"start": [a.real, a.imag], "end": [b.real, b.imag], "length": float(L),
                      "exit_side": int(s)}
                     for a, b, L, s in zip(ps, pe, self.lengths, self.exit_sides)],
        }
        if inters is not None:
            doc["intersections"] = [
                {"point": [p.real, p.imag], "angle": float(th), "arcs": [int(i), int(j)]}
                for p, th, i, j in zip(inters.points, inters.angles, inters.arc_i, inters.arc_j)
            ]
        return doc

    def to_json(self, inters: Optional["IntersectionSet"] = None) -> str:
        return json.dumps(self.to_dict(inters), sort_keys=True)


def trace_geodesic(surface: Surface, start: UnitTangent, T: float,
                   seed: Optional[int] = None) -> GeodesicTrace:
    if T < 0:
        raise ValueError("T must be nonnegative")
    if not surface.contains(start.base, tol=1e-12):
        raise ValueError("start must be based in the octagon")
    if T == 0:
        e3 = np.empty((0, 3))
        return GeodesicTrace(start, 0.0, e3, e3.copy(), np.empty(0), np.empty(0, dtype=np.int64), seed)
    X, U = tangent_vector(start)
    o = surface.octagon
    starts, ends, lengths, sides, status, bad = kernels.trace_flow(
        o.side_normals, o.lorentz_pairings, X, U, float(T), VERTEX_TOL)
    if status == kernels.STATUS_VERTEX:
        raise DegenerateTraceError(f"arc {bad} exits within {VERTEX_TOL} of a vertex")
    return GeodesicTrace(start, float(T), starts, ends, lengths, sides, seed)


def random_trace(surface: Surface, T: float, rng: np.random.Generator,
                 seed: Optional[int] = None, max_tries: int = 10) -> GeodesicTrace:
    """Trace from a Liouville-random start, resampling after degenerate exits."""
    for _ in range(max_tries):
        v = surface.sample_liouville(rng)
        try:
            return trace_geodesic(surface, v, T, seed)
        except DegenerateTraceError:
            continue
    raise DegenerateTraceError(f"{max_tries} consecutive degenerate starts")


# --- self-intersections ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IntersectionSet:
    """Transversal self-intersections, one row per unordered arc pair ``i < j``.

    ``dist_i``/``dist_j`` are hyperbolic distances from the arc starts,
    ``signed_angles`` run from arc ``i``'s forward tangent to arc ``j``'s
    (counterclockwise positive) and ``angles`` are their absolute values.
    """

    arc_i: np.ndarray
    arc_j: np.ndarray
    points: np.ndarray
    dist_i: np.ndarray
    dist_j: np.ndarray
    signed_angles: np.ndarray

    def __len__(self) -> int:
        return len(self.arc_i)

    @property
    def angles(self) -> np.ndarray:
        return np.abs(self.signed_angles)

    @property
    def tangential(self) -> np.ndarray:
        a = self.angles
        return (a < TANGENCY_TOL) | (math.pi - a < TANGENCY_TOL)

    @property
    def n_tangential(self) -> int:
        return int(self.tangential.sum())

    def times(self, trace: GeodesicTrace) -> tuple[np.ndarray, np.ndarray]:
        t = trace.times
        return t[self.arc_i] + self.dist_i, t[self.arc_j] + self.dist_j

    def min_separation(self) -> float:
        """Smallest Euclidean distance between two distinct vertices (triple-point check)."""
        if len(self) < 2:
            return math.inf
        pts = np.stack([self.points.real, self.points.imag], axis=1)
        d, _ = cKDTree(pts).query(pts, k=2)
        return float(d[:, 1].min())

    def close_pairs(self, tol: float = 1e-7) -> np.ndarray:
        """Index pairs of distinct vertices closer than ``tol`` (Euclidean)."""
        if len(self) < 2:
            return np.empty((0, 2), dtype=np.int64)
        pts = np.stack([self.points.real, self.points.imag], axis=1)
        return cKDTree(pts).query_pairs(tol, output_type="ndarray")

    def multiple_points(self, tol: float = 1e-7) -> int:
        """Near-concurrencies of three or more strands within ``tol``.

        Two close vertices sharing one arc are successive crossings along
        that arc and are fine on their own. A triple point shows up as three
        mutually close vertices (a triangle in the closeness graph); two
        close vertices on four distinct arcs are counted as well.
        """
        cp = self.close_pairs(tol)
        if len(cp) == 0:
            return 0
        a = np.stack([self.arc_i, self.arc_j], axis=1)
        count = 0
        nbrs: dict[int, set] = {}
        for p, q in cp:
            shared = len(set(a[p]) & set(a[q]))
            if shared == 0:
                count += 1
            nbrs.setdefault(int(p), set()).add(int(q))
            nbrs.setdefault(int(q), set()).add(int(p))
        for p, q in cp:
            count += sum(1 for r in nbrs[int(p)] & nbrs[int(q)] if r > q > p or r > p > q)
        return count

    def vertices(self):
        """Rows as ``(HPoint, angle, (i, j), (dist_i, dist_j))``."""
        for p, a, i, j, di, dj in zip(self.points, self.angles, self.arc_i, self.arc_j,
                                      self.dist_i, self.dist_j):
            yield HPoint.from_complex(complex(p)), float(a), (int(i), int(j)), (float(di), float(dj))


def _grid_cell(k0: np.ndarray, k1: np.ndarray) -> float:
    ext = np.abs(k1 - k0).max(axis=1)
    return max(float(np.mean(ext)), 1e-3)


def _forward_tangents(P: np.ndarray, S: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Unit tangents at ``P`` along the arc from ``S`` to ``E``."""
    D = E - S
    W = D + lorentz_dot(D, P)[:, None] * P
    return W / np.sqrt(lorentz_dot(W, W))[:, None]


def self_intersections(trace: GeodesicTrace, brute: bool = False) -> IntersectionSet:
    k0, k1 = trace.klein_starts, trace.klein_ends
    if len(trace) < 2:
        i = j = np.empty(0, dtype=np.int64)
        s = t = np.empty(0)
    elif brute:
        i, j, s, t = kernels.segment_intersections_brute(k0, k1, SEGMENT_EPS)
    else:
        i, j, s, t = kernels.segment_intersections(k0, k1, _grid_cell(k0, k1), SEGMENT_EPS)
    kp = k0[i] + s[:, None] * (k1[i] - k0[i])
    P = _from_klein(kp)
    Si, Ei = trace.starts[i], trace.ends[i]
    Sj, Ej = trace.starts[j], trace.ends[j]
    Ui = _forward_tangents(P, Si, Ei)
    Uj = _forward_tangents(P, Sj, Ej)
    cos = lorentz_dot(Ui, Uj)
    sin = np.einsum("ki,ki->k", P, np.cross(Ui, Uj)) if len(P) else np.empty(0)
    signed = np.arctan2(sin, cos)
    return IntersectionSet(i, j, _poincare(P), _hyp_dist(Si, P), _hyp_dist(Sj, P), signed)


# --- disk crossings ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiskCrossingRecord:
    """Complete passages of the trace through ``D(center, radius)``.

    ``chords`` lives on the circle of radius ``alpha = radius * T``; each row
    is (entry angle, exit angle) seen from the center. ``entry_times`` and
    ``exit_times`` are along the geodesic.
    """

    center: HPoint
    radius: float
    alpha: float
    chords: ChordConfiguration
    incomplete: int
    entry_times: np.ndarray
    exit_times: np.ndarray
    arcs_hit: tuple


def _disk_pieces(trace: GeodesicTrace, frame: np.ndarray, r_klein: float):
    """Intersections of each arc, seen in ``frame`` (a Lorentz matrix), with the Klein disk.

    Returns arc index, entry/exit Klein points, and whether each end lies on
    the circle (``True``) or inside the disk (``False``).
    """
    S = trace.starts @ frame.T
    E = trace.ends @ frame.T
    a, b = _klein(S), _klein(E)
    d = b - a
    dd = (d ** 2).sum(axis=1)
    ad = (a * d).sum(axis=1)
    aa = (a ** 2).sum(axis=1)
    disc = ad * ad - dd * (aa - r_klein * r_klein)
    hit = np.flatnonzero((disc > 0) & (dd > 0))
    if len(hit) == 0:
        return None
    sq = np.sqrt(disc[hit])
    t1 = (-ad[hit] - sq) / dd[hit]
    t2 = (-ad[hit] + sq) / dd[hit]
    ok = (t2 > 0.0) & (t1 < 1.0)
    hit, t1, t2 = hit[ok], t1[ok], t2[ok]
    t_in, t_out = np.maximum(t1, 0.0), np.minimum(t2, 1.0)
    p_in = a[hit] + t_in[:, None] * d[hit]
    p_out = a[hit] + t_out[:, None] * d[hit]
    S_h = S[hit]
    time_in = trace.times[hit] + _hyp_dist(S_h, _from_klein(p_in))
    time_out = trace.times[hit] + _hyp_dist(S_h, _from_klein(p_out))
    return hit, p_in, p_out, t1 >= 0.0, t2 <= 1.0, time_in, time_out


def disk_crossings(trace: GeodesicTrace, x: HPoint, alpha: float,
                   surface: Optional[Surface] = None, radius: Optional[float] = None) -> DiskCrossingRecord:
    """Chords cut by the trace on ``D(x, alpha / T)``.

    Passages that cross a side of the octagon inside the disk are stitched
    together across the pairing; pass ``surface`` to enable this (needed
    only when the disk meets the octagon boundary). Passages that begin or
    end inside the disk, at the ends of the trace, are counted as
    incomplete and dropped.
    """
    rho = alpha / trace.T if radius is None else radius
    to_origin = Isometry.moving_to_origin(x)
    if surface is not None:
        copies = surface.neighbor_copies(x, rho)
    else:
        copies = [Isometry.identity()]
    r_klein = math.tanh(rho)
    rows = []
    for h in copies:
        # h maps the octagon onto a neighbour copy; see it from x at the origin
        frame = (to_origin @ h).to_lorentz()
        got = _disk_pieces(trace, frame, r_klein)
        if got is not None:
            rows.append(got)
    if not rows:
        return DiskCrossingRecord(x, rho, alpha, ChordConfiguration.empty(alpha, True), 0,
                                  np.empty(0), np.empty(0), ())
    arc = np.concatenate([r[0] for r in rows])
    p_in = np.concatenate([r[1] for r in rows])
    p_out = np.concatenate([r[2] for r in rows])
    on_in = np.concatenate([r[3] for r in rows])
    on_out = np.concatenate([r[4] for r in rows])
    tin = np.concatenate([r[5] for r in rows])
    tout = np.concatenate([r[6] for r in rows])
    order = np.lexsort((tin, arc))
    chords, entries, exits, arcs_hit = [], [], [], []
    incomplete = 0
    open_chord = None
    for k in order:
        if on_in[k]:
            if open_chord is not None:
                incomplete += 1  # an unmatched interior exit; should not happen
            open_chord = (math.atan2(p_in[k, 1], p_in[k, 0]), tin[k], [int(arc[k])])
        elif open_chord is None:
            # continues a passage we never saw enter: the trace started inside
            open_chord = (None, tin[k], [int(arc[k])])
        else:
            open_chord[2].append(int(arc[k]))
        if on_out[k]:
            if open_chord[0] is None:
                incomplete += 1
            else:
                chords.append((open_chord[0], math.atan2(p_out[k, 1], p_out[k, 0])))
                entries.append(open_chord[1])
                exits.append(tout[k])
                arcs_hit.append(tuple(open_chord[2]))
            open_chord = None
    if open_chord is not None:
        incomplete += 1
    ang = wrap(np.array(chords, dtype=float).reshape(-1, 2))
    return DiskCrossingRecord(x, rho, alpha, ChordConfiguration(ang, alpha, directed=True),
                              incomplete, np.array(entries), np.array(exits), tuple(arcs_hit))


@dataclass(frozen=True)
class EntryDiagnostics:
    first_entry: float
    gaps: np.ndarray
    double_hits: int


def entry_time_diagnostics(trace: GeodesicTrace, x: HPoint, alpha: float,
                           x2: Optional[HPoint] = None,
                           surface: Optional[Surface] = None) -> EntryDiagnostics:
    """First entry time, return gaps, and arcs that meet both disks.

    A return gap is the time from leaving the disk to entering it again.
    """
    rec = disk_crossings(trace, x, alpha, surface)
    first = float(rec.entry_times[0]) if len(rec.entry_times) else math.inf
    gaps = rec.entry_times[1:] - rec.exit_times[:-1] if len(rec.entry_times) > 1 else np.empty(0)
    double = 0
    if x2 is not None:
        rho = alpha / trace.T
        if hyp_distance(x, x2) <= 4.0 * rho:
            raise ValueError("disk centers must be more than 4 alpha / T apart")
        rec2 = disk_crossings(trace, x2, alpha, surface)
        a1 = {a for arcs in rec.arcs_hit for a in arcs}
        a2 = {a for arcs in rec2.arcs_hit for a in arcs}
        double = len(a1 & a2)
    return EntryDiagnostics(first, gaps, double)
