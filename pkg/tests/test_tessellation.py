import math
import re

import numpy as np
import pytest

from geotess.plp import ChordConfiguration, DiskWindow, SquareWindow, sample_plp
from geotess.tessellation import (arrangement_svg, build_arrangement, build_surface_map, face_census,
                                  k_fractions, scaled_polygon_stats, surface_census,
                                  surface_map_from_trace)
from geotess.tracer import random_trace, self_intersections


def _square_faces_oracle(p0, p1, w: SquareWindow):
    """Bounded faces of segments in a square by an explicit dict-based walk.

    Returns sorted (area, corner count) pairs, where a corner is a vertex
    at which the boundary actually turns.
    """
    pts: list = []
    index: dict = {}

    def vid(p):
        key = (round(p[0], 9), round(p[1], 9))
        if key not in index:
            index[key] = len(pts)
            pts.append(np.asarray(p, dtype=float))
        return index[key]

    n = len(p0)
    on_seg = [[(0.0, vid(p0[k])), (1.0, vid(p1[k]))] for k in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            d1, d2 = p1[a] - p0[a], p1[b] - p0[b]
            den = d1[0] * d2[1] - d1[1] * d2[0]
            if den == 0:
                continue
            r = p0[b] - p0[a]
            s = (r[0] * d2[1] - r[1] * d2[0]) / den
            t = (r[0] * d1[1] - r[1] * d1[0]) / den
            if 0 < s < 1 and 0 < t < 1:
                v = vid(p0[a] + s * d1)
                on_seg[a].append((s, v))
                on_seg[b].append((t, v))
    adj: dict = {}

    def link(u, v):
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)

    for row in on_seg:
        row.sort()
        for (_, u), (_, v) in zip(row, row[1:]):
            link(u, v)
    cx, cy = w.center
    h = w.half_width
    corners = [(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)]
    for c in corners:
        vid(c)

    def perim(p):
        x, y = p[0] - (cx - h), p[1] - (cy - h)
        s = 2 * h
        if abs(y) < 1e-9:
            return x
        if abs(x - s) < 1e-9:
            return s + y
        if abs(y - s) < 1e-9:
            return 3 * s - x
        return 4 * s - y

    ring = sorted((perim(p), i) for i, p in enumerate(pts)
                  if min(abs(p[0] - cx) - h, abs(p[1] - cy) - h, key=abs) > -1e-9
                  and max(abs(p[0] - cx), abs(p[1] - cy)) > h - 1e-9)
    for (_, u), (_, v) in zip(ring, ring[1:] + ring[:1]):
        link(u, v)

    def ang(u, v):
        d = pts[v] - pts[u]
        return math.atan2(d[1], d[0])

    seen, faces = set(), []
    for u in adj:
        for v in adj[u]:
            if (u, v) in seen:
                continue
            walk = []
            a, b = u, v
            while (a, b) not in seen:
                seen.add((a, b))
                walk.append(a)
                # next edge: first one clockwise from the way back
                back = ang(b, a)
                c = min((x for x in adj[b]), key=lambda x: (back - ang(b, x)) % (2 * math.pi) or 2 * math.pi)
                a, b = b, c
            poly = np.array([pts[k] for k in walk])
            area = 0.5 * float(np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1]))
            if area > 1e-12:
                turns = 0
                m = len(poly)
                for k in range(m):
                    e1, e2 = poly[k] - poly[k - 1], poly[(k + 1) % m] - poly[k]
                    if abs(e1[0] * e2[1] - e1[1] * e2[0]) > 1e-12 * np.linalg.norm(e1) * np.linalg.norm(e2):
                        turns += 1
                faces.append((area, turns))
    return sorted(faces)


def test_empty_disk_window():
    arr = build_arrangement(ChordConfiguration.empty(1.0, False), DiskWindow(1.0))
    bounded = [a for f, a in enumerate(arr.face_areas()) if f != arr.outer_face]
    assert len(bounded) == 1 and bounded[0] == pytest.approx(math.pi)
    assert arr.euler_holds()


def test_two_diameters():
    arr = build_arrangement(ChordConfiguration(np.array([[0, math.pi], [math.pi / 2, 1.5 * math.pi]]), 1.0),
                            DiskWindow(1.0))
    assert arr.n_vertices == 5 and arr.n_faces - 1 == 4
    cen = face_census(arr)
    assert cen.k_counts == {3: 4}
    assert cen.face_area == pytest.approx([math.pi / 4] * 4)
    assert cen.vertex_angles == pytest.approx([math.pi / 2])


def test_vertical_chord_in_unit_square():
    w = SquareWindow(0.5, (0.5, 0.5))
    arr = build_arrangement((np.array([[0.5, 0.0]]), np.array([[0.5, 1.0]])), w)
    cen = face_census(arr)
    assert len(cen.face_area) == 2
    assert cen.face_area == pytest.approx([0.5, 0.5])
    assert cen.k_counts == {4: 2}


def test_plp_matches_face_walk_oracle():
    w = SquareWindow(3.0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        lines = sample_plp(4.0, w, rng)
        p0, p1 = lines.segments()
        assert len(p0) > 20
        arr = build_arrangement(lines, w)
        cen = face_census(arr)
        got = sorted(zip(cen.face_area.tolist(), cen.face_k.tolist()))
        ref = _square_faces_oracle(p0, p1, w)
        assert len(got) == len(ref)
        assert [k for _, k in got] == [k for _, k in ref]
        assert np.allclose([a for a, _ in got], [a for a, _ in ref], atol=1e-9)
        # lines in general position in a convex window: 1 + n + crossings bounded faces
        assert len(got) == 1 + len(p0) + arr.n_crossings


def test_euler_and_total_area():
    rng = np.random.default_rng(4)
    for w in (SquareWindow(2.0), DiskWindow(2.0)):
        for _ in range(10):
            arr = build_arrangement(sample_plp(3.0, w, rng), w)
            assert arr.euler_holds()
            assert arr.n_vertices - arr.n_edges + arr.n_faces == 1 + arr.n_components
            cen = face_census(arr)
            area = 16.0 if isinstance(w, SquareWindow) else 4 * math.pi
            assert cen.face_area.sum() == pytest.approx(area, rel=1e-10)


def test_permutation_invariance():
    w = SquareWindow(2.0)
    p0, p1 = sample_plp(3.0, w, np.random.default_rng(6)).segments()
    perm = np.random.default_rng(7).permutation(len(p0))
    a = face_census(build_arrangement((p0, p1), w))
    b = face_census(build_arrangement((p1[perm], p0[perm]), w))
    assert np.array_equal(a.face_k, b.face_k)
    assert np.array_equal(a.face_area, b.face_area)


def test_endpoint_off_boundary_rejected():
    with pytest.raises(ValueError):
        build_arrangement((np.array([[0.0, 0.0]]), np.array([[0.5, 1.0]])), SquareWindow(1.0))


def test_figure_eight():
    smap = build_surface_map(np.array([0.25]), np.array([0.75]), np.array([1.0]), 1.0, closed=True)
    assert (smap.n_vertices, smap.n_edges) == (1, 2)
    assert smap.euler_characteristic() == 2
    assert smap.n_faces == 3


def test_closed_map_needs_crossing():
    with pytest.raises(ValueError):
        build_surface_map(np.empty(0), np.empty(0), np.empty(0), 1.0, closed=True)


def test_surface_map_from_trace(surf):
    rng = np.random.default_rng(8)
    for _ in range(5):
        tr = random_trace(surf, 100.0, rng)
        inter = self_intersections(tr)
        smap = surface_map_from_trace(tr, inter)
        assert smap.euler_characteristic() == -2
        assert smap.n_segments == 2 * smap.n_crossings - 1
        assert smap.face_areas().sum() == pytest.approx(4 * math.pi, abs=1e-8)
        cen = surface_census(smap, scale=surf.kappa)
        assert cen.face_k.sum() == 2 * smap.n_edges


def test_canonical_faces_ignore_crossing_order(surf):
    tr = random_trace(surf, 60.0, np.random.default_rng(10))
    inter = self_intersections(tr)
    ti, tj = inter.times(tr)
    a = build_surface_map(ti, tj, inter.signed_angles, tr.T)
    perm = np.random.default_rng(11).permutation(len(ti))
    b = build_surface_map(ti[perm], tj[perm], inter.signed_angles[perm], tr.T)
    assert a.canonical_faces() == b.canonical_faces()
    assert a.n_faces == b.n_faces


def test_scale_and_fractions():
    w = SquareWindow(3.0)
    arr = build_arrangement(sample_plp(3.0, w, np.random.default_rng(12)), w)
    c1, c2 = face_census(arr), face_census(arr, scale=2.0)
    assert np.array_equal(c1.face_area * 4.0, c2.face_area)
    st = scaled_polygon_stats(c1)
    assert sum(st.k_fractions.values()) == pytest.approx(1.0)
    assert st.side_hist.sum() == st.n_edges
    assert k_fractions(np.array([3, 3, 4, 5])) == {3: 0.5, 4: 0.25, 5: 0.25}
    assert k_fractions(np.empty(0, dtype=int)) == {}


def test_csv_rows():
    w = SquareWindow(2.0)
    cen = face_census(build_arrangement(sample_plp(2.0, w, np.random.default_rng(13)), w))
    counts, faces = cen.to_csv_rows(replicate=4)
    assert sum(c for _, _, c in counts) == len(faces) == len(cen.face_k)
    assert all(r[0] == 4 for r in faces)


def test_svg():
    w = SquareWindow(2.0)
    lines = sample_plp(2.0, w, np.random.default_rng(14))
    arr = build_arrangement(lines, w)
    svg = arrangement_svg(arr)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert len(re.findall("<polyline", svg)) == len(lines.segments()[0])
    assert svg == arrangement_svg(arr)
