"""Planar arrangements of chords and the combinatorial map of a surface geodesic.

Both structures are stored as half-edge (dart) permutations and faces are
found as cycles of a permutation, so counting is exact integer work and
geometry is attached afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .plp import ChordConfiguration, DiskWindow, LineSample, SquareWindow, Window
from .tracer import GeodesicTrace, IntersectionSet

GEOM_TOL = 1e-9
TWO_PI = 2.0 * math.pi

# vertex kinds
CROSSING, ENDPOINT, CORNER = 0, 1, 2


class DegeneracyError(RuntimeError):
    def __init__(self, flags):
        super().__init__(f"{len(flags)} near-degenerate configurations: {flags[:5]}")
        self.flags = flags


class MapTraversalError(RuntimeError):
    """Face traversal of a surface map did not close up."""


def _cycles(perm: np.ndarray) -> tuple[int, np.ndarray]:
    n = len(perm)
    if n == 0:
        return 0, np.empty(0, dtype=np.int64)
    g = coo_matrix((np.ones(n), (np.arange(n), perm)), shape=(n, n)).tocsr()
    return connected_components(g, directed=True, connection="weak")


# --- arrangements ----------------------------------------------------------------

def _segments_of(source, window: Window):
    if isinstance(source, LineSample):
        return source.segments()
    if isinstance(source, ChordConfiguration):
        if not isinstance(window, DiskWindow):
            raise ValueError("chords need a disk window")
        cx, cy = window.center
        a = source.angles
        R = window.radius
        p0 = np.stack([cx + R * np.cos(a[:, 0]), cy + R * np.sin(a[:, 0])], axis=1)
        p1 = np.stack([cx + R * np.cos(a[:, 1]), cy + R * np.sin(a[:, 1])], axis=1)
        return p0, p1
    p0, p1 = source
    return np.asarray(p0, dtype=float).reshape(-1, 2), np.asarray(p1, dtype=float).reshape(-1, 2)


def _boundary_coordinate(p: np.ndarray, window: Window) -> np.ndarray:
    """Counterclockwise position along the window boundary."""
    cx, cy = window.center
    x, y = p[:, 0] - cx, p[:, 1] - cy
    if isinstance(window, DiskWindow):
        return np.mod(np.arctan2(y, x), TWO_PI)
    a = window.half_width
    d = np.stack([np.abs(y + a), np.abs(x - a), np.abs(y - a), np.abs(x + a)], axis=1)
    side = np.argmin(d, axis=1)
    u = np.choose(side, [x + a, 2 * a + (y + a), 4 * a + (a - x), 6 * a + (a - y)])
    return np.mod(u, 8 * a)


def _boundary_gap(p: np.ndarray, window: Window) -> np.ndarray:
    cx, cy = window.center
    x, y = p[:, 0] - cx, p[:, 1] - cy
    if isinstance(window, DiskWindow):
        return np.abs(np.hypot(x, y) - window.radius)
    return np.abs(np.maximum(np.abs(x), np.abs(y)) - window.half_width)


def all_crossings(p0: np.ndarray, p1: np.ndarray, eps: float = 1e-12, block: int = 512):
    """All transversal crossings ``(i, j, s, t)`` with ``i < j``, in row blocks."""
    n = len(p0)
    d = p1 - p0
    out = [[], [], [], []]
    for lo in range(0, n, block):
        i = np.arange(lo, min(lo + block, n))
        ii, jj = np.meshgrid(i, np.arange(n), indexing="ij")
        keep = jj > ii
        ii, jj = ii[keep], jj[keep]
        den = d[ii, 0] * d[jj, 1] - d[ii, 1] * d[jj, 0]
        w = p0[jj] - p0[ii]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (w[:, 0] * d[jj, 1] - w[:, 1] * d[jj, 0]) / den
            t = (w[:, 0] * d[ii, 1] - w[:, 1] * d[ii, 0]) / den
        ok = (s > eps) & (s < 1 - eps) & (t > eps) & (t < 1 - eps)
        for acc, v in zip(out, (ii[ok], jj[ok], s[ok], t[ok])):
            acc.append(v)
    if not out[0]:
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0), np.empty(0)
    return tuple(np.concatenate(v) for v in out)


@dataclass(frozen=True, eq=False)
class Arrangement:
    """Subdivision of a window by segments whose ends lie on its boundary.

    Half-edge ``2e`` runs along edge ``e`` from ``edges[e, 0]`` to
    ``edges[e, 1]`` and ``2e + 1`` runs back. ``he_next`` walks each face
    counterclockwise (face on the left); the outer face is ``outer_face``.
    """

    window: Window
    segments: tuple
    vertices: np.ndarray
    vertex_kind: np.ndarray
    crossing_segments: np.ndarray
    edges: np.ndarray
    edge_carrier: np.ndarray
    he_angle: np.ndarray
    he_next: np.ndarray
    he_face: np.ndarray
    n_faces: int
    outer_face: int
    n_components: int
    flags: tuple = ()

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_crossings(self) -> int:
        return int((self.vertex_kind == CROSSING).sum())

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def euler_holds(self) -> bool:
        return self.euler_characteristic() == 1 + self.n_components

    # per half-edge geometry ------------------------------------------------------

    def _he_endpoints(self):
        e = np.arange(2 * self.n_edges) // 2
        back = np.arange(2 * self.n_edges) % 2 == 1
        u = np.where(back, self.edges[e, 1], self.edges[e, 0])
        v = np.where(back, self.edges[e, 0], self.edges[e, 1])
        return u, v, e, back

    def _arc_sweep(self) -> np.ndarray:
        """Counterclockwise angle swept by each boundary edge of a disk window (0 otherwise)."""
        sweep = np.zeros(self.n_edges)
        if not isinstance(self.window, DiskWindow):
            return sweep
        b = self.edge_carrier < 0
        u = _boundary_coordinate(self.vertices[self.edges[b, 0]], self.window)
        v = _boundary_coordinate(self.vertices[self.edges[b, 1]], self.window)
        d = np.mod(v - u, TWO_PI)
        d[d == 0] = TWO_PI
        sweep[b] = d
        return sweep

    def he_lengths(self) -> np.ndarray:
        u, v, e, _ = self._he_endpoints()
        L = np.hypot(*(self.vertices[v] - self.vertices[u]).T)
        sweep = self._arc_sweep()[e]
        arc = sweep > 0
        return np.where(arc, self.window.radius * sweep if arc.any() else 0.0, L)

    def face_areas(self) -> np.ndarray:
        """Signed areas; bounded faces positive, the outer face negative."""
        u, v, e, back = self._he_endpoints()
        P, Q = self.vertices[u], self.vertices[v]
        contrib = 0.5 * (P[:, 0] * Q[:, 1] - Q[:, 0] * P[:, 1])
        sweep = self._arc_sweep()[e]
        if isinstance(self.window, DiskWindow):
            seg = 0.5 * self.window.radius ** 2 * (sweep - np.sin(sweep))
            contrib = contrib + np.where(back, -seg, seg)
        return np.bincount(self.he_face, weights=contrib, minlength=self.n_faces)

    def corner_angles(self) -> np.ndarray:
        """Interior angle at the head of each half-edge, inside that half-edge's face."""
        twin = np.arange(2 * self.n_edges) ^ 1
        return np.mod(self.he_angle[twin] - self.he_angle[self.he_next], TWO_PI)

    def boundary_faces(self) -> np.ndarray:
        """Mask of faces that have an edge on the window boundary."""
        on_b = np.repeat(self.edge_carrier < 0, 2)
        mask = np.zeros(self.n_faces, dtype=bool)
        mask[self.he_face[on_b]] = True
        return mask


def build_arrangement(source, window: Window, tol: float = GEOM_TOL,
                      on_degenerate: str = "raise") -> Arrangement:
    """Arrangement of clipped lines, disk chords, or ``(p0, p1)`` segment arrays.

    Segments must end on the window boundary. Crossings closer than ``tol``
    to each other or to the boundary, and coinciding boundary endpoints,
    are collected as flags; with ``on_degenerate="raise"`` they abort the
    build so the caller can jitter and retry.
    """
    p0, p1 = _segments_of(source, window)
    if len(p0) and max(_boundary_gap(p0, window).max(), _boundary_gap(p1, window).max()) > 1e-7:
        raise ValueError("segment endpoints must lie on the window boundary")
    # canonical orientation and order so permuted input gives identical output
    swap = (p0[:, 0] > p1[:, 0]) | ((p0[:, 0] == p1[:, 0]) & (p0[:, 1] > p1[:, 1]))
    a = np.where(swap[:, None], p1, p0)
    b = np.where(swap[:, None], p0, p1)
    order = np.lexsort((b[:, 1], b[:, 0], a[:, 1], a[:, 0]))
    p0, p1 = a[order], b[order]
    n = len(p0)

    ci, cj, cs, ct = all_crossings(p0, p1)
    X = p0[ci] + cs[:, None] * (p1[ci] - p0[ci])

    # vertices: segment ends, then window corners (or a disk anchor), then crossings
    if isinstance(window, SquareWindow):
        cx, cy = window.center
        h = window.half_width
        extra = np.array([[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]])
    elif n == 0:
        extra = np.array([[window.center[0] + window.radius, window.center[1]]])
    else:
        extra = np.empty((0, 2))
    ends = np.empty((2 * n, 2))
    ends[0::2], ends[1::2] = p0, p1
    vertices = np.concatenate([ends, extra, X]) if n or len(extra) else np.empty((0, 2))
    kind = np.concatenate([np.full(2 * n, ENDPOINT), np.full(len(extra), CORNER),
                           np.full(len(X), CROSSING)]).astype(np.int8)
    vx0 = 2 * n + len(extra)

    flags = _degeneracy_flags(X, ci, cj, ends, window, tol)
    if flags and on_degenerate == "raise":
        raise DegeneracyError(flags)

    # edges along each segment, ordered by the parameter
    seg = np.concatenate([np.arange(n), np.arange(n), ci, cj])
    par = np.concatenate([np.zeros(n), np.ones(n), cs, ct])
    vid = np.concatenate([2 * np.arange(n), 2 * np.arange(n) + 1,
                          vx0 + np.arange(len(ci)), vx0 + np.arange(len(ci))])
    o = np.lexsort((par, seg))
    seg, vid = seg[o], vid[o]
    same = seg[:-1] == seg[1:]
    seg_edges = np.stack([vid[:-1][same], vid[1:][same]], axis=1)
    seg_carrier = seg[:-1][same]

    # boundary edges between consecutive boundary vertices
    bidx = np.arange(vx0)
    bpos = _boundary_coordinate(vertices[:vx0], window) if vx0 else np.empty(0)
    bo = bidx[np.argsort(bpos, kind="stable")]
    if len(bo) > 1 and np.any(np.diff(np.sort(bpos)) < tol):
        flags = flags + (("shared_boundary_point",),)
        if on_degenerate == "raise":
            raise DegeneracyError(list(flags))
    b_edges = np.stack([bo, np.roll(bo, -1)], axis=1) if len(bo) else np.empty((0, 2), dtype=np.int64)

    edges = np.concatenate([seg_edges, b_edges]).astype(np.int64)
    carrier = np.concatenate([seg_carrier, np.full(len(b_edges), -1)]).astype(np.int64)
    E = len(edges)

    # outgoing direction of every half-edge
    u = np.empty(2 * E, dtype=np.int64)
    v = np.empty(2 * E, dtype=np.int64)
    u[0::2], v[0::2] = edges[:, 0], edges[:, 1]
    u[1::2], v[1::2] = edges[:, 1], edges[:, 0]
    dvec = vertices[v] - vertices[u]
    angle = np.arctan2(dvec[:, 1], dvec[:, 0])
    if isinstance(window, DiskWindow) and len(b_edges):
        cx, cy = window.center
        radial = np.arctan2(vertices[:, 1] - cy, vertices[:, 0] - cx)
        bmask = np.repeat(carrier < 0, 2)
        fwd = bmask & (np.arange(2 * E) % 2 == 0)
        bwd = bmask & (np.arange(2 * E) % 2 == 1)
        angle[fwd] = radial[u[fwd]] + 0.5 * math.pi
        angle[bwd] = radial[u[bwd]] - 0.5 * math.pi
    angle = np.mod(angle, TWO_PI)

    # next half-edge: clockwise neighbour of the twin around the head vertex
    order = np.lexsort((angle, u))
    pos = np.empty(2 * E, dtype=np.int64)
    pos[order] = np.arange(2 * E)
    first = np.searchsorted(u[order], np.arange(len(vertices)), side="left")
    last = np.searchsorted(u[order], np.arange(len(vertices)), side="right")
    twin = np.arange(2 * E) ^ 1
    pt = pos[twin]
    vt = u[twin]
    prev = np.where(pt > first[vt], pt - 1, last[vt] - 1)
    nxt = order[prev]

    nf, face = _cycles(nxt)
    # the clockwise walk along the window boundary bounds the outer face
    b_he = np.flatnonzero(np.repeat(carrier < 0, 2) & (np.arange(2 * E) % 2 == 1))
    outer = int(face[b_he[0]]) if len(b_he) else -1
    if len(vertices):
        g = coo_matrix((np.ones(E), (edges[:, 0], edges[:, 1])), shape=(len(vertices),) * 2)
        ncomp, _ = connected_components(g, directed=False)
    else:
        ncomp = 0
    pairs = np.stack([ci, cj], axis=1)
    return Arrangement(window, (p0, p1), vertices, kind, pairs, edges, carrier, angle, nxt,
                       face, int(nf), outer, int(ncomp), tuple(flags))


def _degeneracy_flags(X, ci, cj, ends, window, tol) -> tuple:
    flags = []
    if len(X) > 1:
        for a, b in sorted(cKDTree(X).query_pairs(tol)):
            flags.append(("near_vertex", tuple(sorted({int(ci[a]), int(cj[a]), int(ci[b]), int(cj[b])}))))
    if len(X):
        near_b = np.flatnonzero(_boundary_gap(X, window) < tol)
        flags.extend(("near_boundary", (int(ci[k]), int(cj[k]))) for k in near_b)
    return tuple(flags)


# --- censuses ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FaceCensus:
    """Counts and per-face geometry of a tessellation.

    Face arrays cover the bounded faces (all faces for a closed surface):
    side count ``k``, area, a ``boundary`` tag (window-touching faces for an
    arrangement, trace-end faces for a surface map) and an ``anchor``, the
    lowest vertex, used for unbiased window sampling. Side lengths and
    corner angles are ragged lists stored flat with offsets. ``edge_lengths``
    and ``vertex_angles`` hold one entry per interior edge and per crossing;
    the latter are unoriented, folded into ``(0, pi/2]``. ``face_points``
    lists each face's corners in order, aligned with ``side_offsets``.
    """

    n_vertices: int
    n_edges: int
    n_faces: int
    face_k: np.ndarray
    face_area: np.ndarray
    face_boundary: np.ndarray
    face_anchor: np.ndarray
    side_offsets: np.ndarray
    side_lengths: np.ndarray
    corner_angles: np.ndarray
    edge_lengths: np.ndarray
    edge_anchor: np.ndarray
    vertex_angles: np.ndarray
    vertex_points: np.ndarray
    face_points: Optional[np.ndarray] = None
    scale: float = 1.0
    n_crossings: int = 0

    @property
    def k_counts(self) -> dict[int, int]:
        ks, cs = np.unique(self.face_k, return_counts=True)
        return {int(k): int(c) for k, c in zip(ks, cs)}

    def sides_of(self, f: int) -> np.ndarray:
        return self.side_lengths[self.side_offsets[f]:self.side_offsets[f + 1]]

    def angles_of(self, f: int) -> np.ndarray:
        return self.corner_angles[self.side_offsets[f]:self.side_offsets[f + 1]]

    def interior_mask(self) -> np.ndarray:
        return ~self.face_boundary

    def anchored_mask(self, inner: SquareWindow) -> np.ndarray:
        """Non-boundary faces whose lowest vertex lies in the half-open ``inner`` square."""
        return ~self.face_boundary & _in_square(self.face_anchor, inner)

    def to_csv_rows(self, replicate: int = 0):
        """``(replicate, k, count)`` rows, then per-face rows."""
        counts = [(replicate, k, c) for k, c in sorted(self.k_counts.items())]
        faces = []
        for f in range(len(self.face_k)):
            s = self.sides_of(f)
            faces.append((replicate, f, int(self.face_k[f]), float(self.face_area[f]),
                           float(s.min()) if len(s) else 0.0, float(s.max()) if len(s) else 0.0,
                           " ".join(f"{a:.9g}" for a in self.angles_of(f))))
        return counts, faces


def _fold(a: np.ndarray) -> np.ndarray:
    a = np.abs(a)
    return np.minimum(a, math.pi - a)


def _in_square(p: np.ndarray, w: SquareWindow) -> np.ndarray:
    cx, cy = w.center
    h = w.half_width
    x, y = p[:, 0] - cx, p[:, 1] - cy
    return (x >= -h) & (x < h) & (y >= -h) & (y < h)


def _ragged_by_face(face: np.ndarray, values: Sequence[np.ndarray], walk: np.ndarray):
    """Order per-half-edge values face by face, following the walk inside each face."""
    n = len(face)
    # rank within the cycle: start each face at its smallest half-edge id
    start = np.full(face.max() + 1 if n else 0, n, dtype=np.int64)
    np.minimum.at(start, face, np.arange(n))
    rank = np.zeros(n, dtype=np.int64)
    order = []
    for f0 in start:
        h, r = f0, 0
        while True:
            order.append(h)
            rank[h] = r
            r += 1
            h = walk[h]
            if h == f0:
                break
    order = np.array(order, dtype=np.int64)
    return order, [v[order] for v in values]


def face_census(arr: Arrangement, scale: float = 1.0) -> FaceCensus:
    """Census of the bounded faces of an arrangement, lengths and areas scaled by ``scale``."""
    lengths = arr.he_lengths()
    corners = arr.corner_angles()
    area = arr.face_areas()
    bmask = arr.boundary_faces()
    nxt = arr.he_next
    u, v, _, _ = arr._he_endpoints()
    order, (face_seq, len_seq, ang_seq, head_seq) = _ragged_by_face(
        arr.he_face, [arr.he_face, lengths, corners, v], nxt)
    keep_face = np.ones(arr.n_faces, dtype=bool)
    if arr.outer_face >= 0:
        keep_face[arr.outer_face] = False
    # renumber bounded faces in order of their first appearance
    firsts = face_seq[np.r_[True, face_seq[1:] != face_seq[:-1]]] if len(face_seq) else face_seq
    bounded = [f for f in firsts if keep_face[f]]
    new_id = {int(f): i for i, f in enumerate(bounded)}
    sel = np.array([keep_face[f] for f in face_seq], dtype=bool) if len(face_seq) else face_seq.astype(bool)
    fs, ls, as_, hs = face_seq[sel], len_seq[sel], ang_seq[sel], head_seq[sel]
    remap = np.array([new_id[int(f)] for f in fs], dtype=np.int64)
    nb = len(bounded)
    k = np.bincount(remap, minlength=nb)
    offsets = np.concatenate([[0], np.cumsum(k)])
    # anchor: lowest vertex of each face (ties by x)
    pts = arr.vertices[hs] if len(hs) else np.empty((0, 2))
    anchor = np.zeros((nb, 2))
    if nb:
        o = np.lexsort((pts[:, 0], pts[:, 1], remap))
        firsts_idx = np.r_[0, np.flatnonzero(np.diff(remap[o])) + 1]
        anchor = pts[o[firsts_idx]]
    face_area = np.array([area[f] for f in bounded]) * scale ** 2
    face_b = np.array([bmask[f] for f in bounded], dtype=bool)

    # interior edges (both ends at crossings) with their lower endpoint, and crossing angles
    ek = arr.vertex_kind[arr.edges]
    inner_e = (arr.edge_carrier >= 0) & (ek[:, 0] == CROSSING) & (ek[:, 1] == CROSSING)
    e_len = lengths[0::2][inner_e] * scale
    ea, eb = arr.vertices[arr.edges[inner_e, 0]], arr.vertices[arr.edges[inner_e, 1]]
    lower = np.where(((ea[:, 1] < eb[:, 1]) | ((ea[:, 1] == eb[:, 1]) & (ea[:, 0] < eb[:, 0])))[:, None], ea, eb)
    cross = arr.vertex_kind == CROSSING
    p0, p1 = arr.segments
    ci, cj = arr.crossing_segments[:, 0], arr.crossing_segments[:, 1]
    di, dj = p1[ci] - p0[ci], p1[cj] - p0[cj]
    va = _fold(np.arctan2(di[:, 0] * dj[:, 1] - di[:, 1] * dj[:, 0], (di * dj).sum(axis=1)))
    return FaceCensus(
        n_vertices=arr.n_vertices, n_edges=arr.n_edges, n_faces=nb, face_k=k, face_area=face_area,
        face_boundary=face_b, face_anchor=anchor * scale, side_offsets=offsets,
        side_lengths=ls * scale, corner_angles=as_, edge_lengths=e_len, edge_anchor=lower * scale,
        vertex_angles=va, vertex_points=arr.vertices[cross] * scale, face_points=pts * scale,
        scale=scale, n_crossings=int(cross.sum()))


# --- surface maps ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceMap:
    """Rotation system of a geodesic segment drawn on the surface.

    Vertices are the self-intersections plus the two trace ends (degree 1).
    ``alpha`` is the edge involution on darts, ``sigma`` the counterclockwise
    successor at a vertex, and faces are the cycles of ``sigma o alpha``.
    ``corner[d]`` is the angle swept from dart ``d`` to ``sigma[d]``.
    """

    alpha: np.ndarray
    sigma: np.ndarray
    dart_vertex: np.ndarray
    dart_length: np.ndarray
    corner: np.ndarray
    face: np.ndarray
    n_vertices: int
    n_edges: int
    n_faces: int
    end_darts: tuple
    crossing_angles: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_crossings(self) -> int:
        return self.n_vertices - len(self.end_darts)

    @property
    def n_segments(self) -> int:
        """Edges between consecutive crossings, the two dangling ends excluded."""
        return self.n_edges - len(self.end_darts)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def end_faces(self) -> np.ndarray:
        return np.unique(self.face[list(self.end_darts)]).astype(np.int64)

    def face_areas(self) -> np.ndarray:
        """Gauss-Bonnet areas, ``sum over corners (pi - angle) - 2 pi`` per face."""
        per_dart = math.pi - self.corner[self.alpha]
        return np.bincount(self.face, weights=per_dart, minlength=self.n_faces) - TWO_PI

    def canonical_faces(self) -> list[tuple]:
        """Faces as sorted tuples of edge ids, independent of dart labels."""
        edge_id = np.minimum(np.arange(len(self.alpha)), self.alpha)
        groups: dict[int, list] = {}
        for d, f in enumerate(self.face):
            groups.setdefault(int(f), []).append(int(edge_id[d]))
        return sorted(tuple(sorted(g)) for g in groups.values())


def build_surface_map(events_i: np.ndarray, events_j: np.ndarray, signed_angles: np.ndarray,
                      T: float, closed: bool = False) -> SurfaceMap:
    """Surface map from the two passage times of each crossing.

    Crossing ``c`` is passed first at time ``events_i[c]`` and again at
    ``events_j[c]``; ``signed_angles[c]`` runs from the first passage's
    forward direction to the second's. An open curve gets a degree-one
    vertex at each end; with ``closed=True`` time ``T`` is glued back to 0.
    """
    v = len(events_i)
    if closed and v == 0:
        raise ValueError("a closed curve needs at least one crossing")
    times = np.concatenate([events_i, events_j])
    order = np.argsort(times, kind="stable")
    pos = np.empty(2 * v, dtype=np.int64)
    pos[order] = np.arange(2 * v)
    t_sorted = times[order]
    nd = 4 * v if closed else 4 * v + 2
    ends = () if closed else (4 * v, 4 * v + 1)

    def back(p):
        return 2 * p

    def fwd(p):
        return 2 * p + 1

    alpha = np.empty(nd, dtype=np.int64)
    length = np.empty(nd)
    if v:
        p = np.arange(2 * v - 1)
        alpha[fwd(p)] = back(p + 1)
        alpha[back(p + 1)] = fwd(p)
        seg = np.diff(t_sorted)
        length[fwd(p)] = seg
        length[back(p + 1)] = seg
        last = fwd(2 * v - 1)
        if closed:
            alpha[last], alpha[back(0)] = back(0), last
            length[last] = length[back(0)] = T - t_sorted[-1] + t_sorted[0]
        else:
            S, E = ends
            alpha[S], alpha[back(0)] = back(0), S
            alpha[E], alpha[last] = last, E
            length[S] = length[back(0)] = t_sorted[0]
            length[E] = length[last] = T - t_sorted[-1]
    else:
        S, E = ends
        alpha[S], alpha[E] = E, S
        length[S] = length[E] = T

    sigma = np.arange(nd, dtype=np.int64)
    corner = np.full(nd, TWO_PI)
    vertex = np.empty(nd, dtype=np.int64)
    vertex[list(ends)] = v + np.arange(len(ends))
    if v:
        pi_ = pos[:v]        # first passage of each crossing
        pj = pos[v:]         # second passage
        th = signed_angles
        pos_th = th > 0
        # counterclockwise rotation at each crossing
        r0 = fwd(pi_)
        r1 = np.where(pos_th, fwd(pj), back(pj))
        r2 = back(pi_)
        r3 = np.where(pos_th, back(pj), fwd(pj))
        ring = np.stack([r0, r1, r2, r3], axis=1)
        a = np.abs(th)
        gaps = np.where(pos_th[:, None],
                        np.stack([a, math.pi - a, a, math.pi - a], axis=1),
                        np.stack([math.pi - a, a, math.pi - a, a], axis=1))
        for k in range(4):
            sigma[ring[:, k]] = ring[:, (k + 1) % 4]
            corner[ring[:, k]] = gaps[:, k]
            vertex[ring[:, k]] = np.arange(v)
    phi = sigma[alpha]
    nf, face = _cycles(phi)
    # every dart must return to itself under phi
    if not np.array_equal(np.sort(phi), np.arange(nd)):
        raise MapTraversalError("face permutation is not a bijection")
    angles = np.abs(signed_angles).copy()
    return SurfaceMap(alpha, sigma, vertex, length, corner, face, v + len(ends), nd // 2, int(nf),
                      ends, angles)


def surface_map_from_trace(trace: GeodesicTrace, inters: IntersectionSet) -> SurfaceMap:
    if inters.n_tangential:
        raise MapTraversalError(f"{inters.n_tangential} tangential crossings flagged")
    ti, tj = inters.times(trace)
    return build_surface_map(ti, tj, inters.signed_angles, trace.T)


def surface_census(smap: SurfaceMap, scale: float = 1.0) -> FaceCensus:
    """Census of all faces of a surface map; trace-end faces are tagged as boundary."""
    phi = smap.sigma[smap.alpha]
    order, (fs, ls, cs) = _ragged_by_face(smap.face, [smap.face, smap.dart_length, smap.corner[smap.alpha]], phi)
    firsts = fs[np.r_[True, fs[1:] != fs[:-1]]] if len(fs) else fs
    new_id = np.empty(smap.n_faces, dtype=np.int64)
    new_id[firsts] = np.arange(len(firsts))
    remap = new_id[fs]
    k = np.bincount(remap, minlength=smap.n_faces)
    offsets = np.concatenate([[0], np.cumsum(k)])
    areas = smap.face_areas()[firsts]
    ends = np.zeros(smap.n_faces, dtype=bool)
    ends[smap.end_faces] = True
    inner = np.ones(len(smap.alpha), dtype=bool)
    for d in smap.end_darts:
        inner[[d, smap.alpha[d]]] = False
    darts = np.flatnonzero(inner & (np.arange(len(smap.alpha)) < smap.alpha))
    return FaceCensus(
        n_vertices=smap.n_vertices, n_edges=smap.n_edges, n_faces=smap.n_faces, face_k=k,
        face_area=areas * scale ** 2, face_boundary=ends[firsts], face_anchor=np.zeros((smap.n_faces, 2)),
        side_offsets=offsets, side_lengths=ls * scale, corner_angles=cs,
        edge_lengths=smap.dart_length[darts] * scale, edge_anchor=np.zeros((len(darts), 2)),
        vertex_angles=_fold(smap.crossing_angles), vertex_points=np.zeros((smap.n_crossings, 2)),
        scale=scale, n_crossings=smap.n_crossings)


# --- scaled statistics ------------------------------------------------------------------

SIDE_BINS = np.concatenate([np.arange(0.0, 80.0 + 1e-9, 4.0), [np.inf]])
ANGLE_BINS = np.linspace(0.0, 0.5 * math.pi, 19)


@dataclass(frozen=True)
class PolygonStats:
    k_fractions: dict
    side_hist: np.ndarray
    angle_hist: np.ndarray
    side_bins: np.ndarray
    angle_bins: np.ndarray
    n_faces: int
    n_edges: int
    n_vertices: int


def k_fractions(face_k: np.ndarray) -> dict[int, float]:
    n = len(face_k)
    if n == 0:
        return {}
    ks, cs = np.unique(face_k, return_counts=True)
    return {int(k): c / n for k, c in zip(ks, cs)}


def scaled_polygon_stats(census: FaceCensus, scale: float = 1.0,
                         face_mask: Optional[np.ndarray] = None,
                         edge_mask: Optional[np.ndarray] = None,
                         vertex_mask: Optional[np.ndarray] = None,
                         side_bins: np.ndarray = SIDE_BINS,
                         angle_bins: np.ndarray = ANGLE_BINS) -> PolygonStats:
    """k-gon fractions plus side-length and angle histograms on fixed bins.

    Side lengths are multiplied by ``scale`` (``T`` for the rescaled surface
    tessellation). By default trace-end or window-touching faces are left
    out of the k-fractions.
    """
    fm = census.interior_mask() if face_mask is None else face_mask
    em = np.ones(len(census.edge_lengths), dtype=bool) if edge_mask is None else edge_mask
    vm = np.ones(len(census.vertex_angles), dtype=bool) if vertex_mask is None else vertex_mask
    side_hist, _ = np.histogram(census.edge_lengths[em] * scale, bins=side_bins)
    angle_hist, _ = np.histogram(census.vertex_angles[vm], bins=angle_bins)
    return PolygonStats(k_fractions(census.face_k[fm]), side_hist, angle_hist, side_bins, angle_bins,
                        int(fm.sum()), int(em.sum()), int(vm.sum()))


# --- SVG -------------------------------------------------------------------------------

_K_COLORS = {3: "#e41a1c", 4: "#377eb8", 5: "#4daf4a", 6: "#984ea3"}


def arrangement_svg(arr: Arrangement, size: int = 480, color_faces: bool = False,
                    show_vertices: bool = False) -> str:
    """Deterministic SVG: the window, one polyline per segment, optional k-coloured faces."""
    w = arr.window
    cx, cy = w.center
    half = w.radius if isinstance(w, DiskWindow) else w.half_width
    k = size / (2.0 * half * 1.05)

    def xy(p):
        return f"{(p[0] - cx) * k + size / 2:.3f},{size / 2 - (p[1] - cy) * k:.3f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>']
    if color_faces and arr.n_faces:
        cen = face_census(arr)
        bounded = [f for f in range(arr.n_faces) if f != arr.outer_face]
        heads = arr._he_endpoints()[1]
        for f in bounded:
            walk = [h for h in np.flatnonzero(arr.he_face == f)]
            h0 = walk[0]
            pts, h = [], h0
            while True:
                pts.append(arr.vertices[heads[h]])
                h = arr.he_next[h]
                if h == h0:
                    break
            color = _K_COLORS.get(len(pts), "#bbbbbb")
            out.append(f'<polygon points="{" ".join(xy(p) for p in pts)}" fill="{color}" '
                       f'fill-opacity="0.35" stroke="none"/>')
        del cen
    if isinstance(w, DiskWindow):
        out.append(f'<circle cx="{size / 2:.3f}" cy="{size / 2:.3f}" r="{w.radius * k:.3f}" '
                   f'fill="none" stroke="black"/>')
    else:
        s = 2 * w.half_width * k
        o = size / 2 - w.half_width * k
        out.append(f'<rect x="{o:.3f}" y="{o:.3f}" width="{s:.3f}" height="{s:.3f}" '
                   f'fill="none" stroke="black"/>')
    p0, p1 = arr.segments
    for a, b in zip(p0, p1):
        out.append(f'<polyline points="{xy(a)} {xy(b)}" fill="none" stroke="#333" stroke-width="1"/>')
    if show_vertices:
        for p in arr.vertices[arr.vertex_kind == CROSSING]:
            x, y = xy(p).split(",")
            out.append(f'<circle cx="{x}" cy="{y}" r="1.5" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
