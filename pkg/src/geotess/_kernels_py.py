"""Pure-Python implementations of the hot kernels.

These mirror ``_kernels.pyx`` statement for statement and are used when the
compiled extension is unavailable (or when ``GEOTESS_PURE_PYTHON`` is set).
"""

import math

import numpy as np

STATUS_OK = 0
STATUS_VERTEX = 1


def trace_flow(normals, pairings, x0, u0, T, vertex_tol):
    """Follow the geodesic flow on the hyperboloid through the octagon.

    State is a point ``x`` on the hyperboloid and a unit tangent ``u``. Each
    step finds the first side line ``<N, x cosh s + u sinh s> = 0`` ahead,
    records the arc, and maps point and tangent through that side's pairing.

    Returns ``(starts, ends, lengths, exit_sides, status, bad_index)``; the
    last arc has exit side ``-1``.
    """
    normals = [tuple(float(v) for v in row) for row in np.asarray(normals)]
    mats = [tuple(tuple(float(v) for v in r) for r in m) for m in np.asarray(pairings)]
    nsides = len(normals)
    x = [float(v) for v in x0]
    u = [float(v) for v in u0]
    starts, ends, lengths, sides = [], [], [], []
    remaining = float(T)
    status, bad = STATUS_OK, -1
    while remaining > 0.0:
        best_s = math.inf
        best_j = -1
        for j in range(nsides):
            n = normals[j]
            a = n[0] * x[0] + n[1] * x[1] - n[2] * x[2]
            b = n[0] * u[0] + n[1] * u[1] - n[2] * u[2]
            if b <= 0.0 or -a >= b:
                continue
            r = -a / b
            s = 0.0 if r <= 0.0 else math.atanh(r)
            if s < best_s:
                best_s = s
                best_j = j
        starts.append(tuple(x))
        if best_j < 0 or best_s >= remaining:
            ch, sh = math.cosh(remaining), math.sinh(remaining)
            ends.append((ch * x[0] + sh * u[0], ch * x[1] + sh * u[1], ch * x[2] + sh * u[2]))
            lengths.append(remaining)
            sides.append(-1)
            break
        s = best_s
        ch, sh = math.cosh(s), math.sinh(s)
        xe = (ch * x[0] + sh * u[0], ch * x[1] + sh * u[1], ch * x[2] + sh * u[2])
        ue = (sh * x[0] + ch * u[0], sh * x[1] + ch * u[1], sh * x[2] + ch * u[2])
        ends.append(xe)
        lengths.append(s)
        sides.append(best_j)
        remaining -= s
        for k in ((best_j + nsides - 1) % nsides, (best_j + 1) % nsides):
            n = normals[k]
            if abs(n[0] * xe[0] + n[1] * xe[1] - n[2] * xe[2]) < vertex_tol:
                status, bad = STATUS_VERTEX, len(ends) - 1
        if status != STATUS_OK:
            break
        m = mats[best_j]
        x = [m[i][0] * xe[0] + m[i][1] * xe[1] + m[i][2] * xe[2] for i in range(3)]
        u = [m[i][0] * ue[0] + m[i][1] * ue[1] + m[i][2] * ue[2] for i in range(3)]
        # back onto the hyperboloid, then make u a unit tangent at x
        q = x[2] * x[2] - x[0] * x[0] - x[1] * x[1]
        k = 1.0 / math.sqrt(q)
        x = [x[0] * k, x[1] * k, x[2] * k]
        xu = x[0] * u[0] + x[1] * u[1] - x[2] * u[2]
        u = [u[0] + xu * x[0], u[1] + xu * x[1], u[2] + xu * x[2]]
        uu = u[0] * u[0] + u[1] * u[1] - u[2] * u[2]
        k = 1.0 / math.sqrt(uu)
        u = [u[0] * k, u[1] * k, u[2] * k]
    return (np.array(starts, dtype=float).reshape(-1, 3),
            np.array(ends, dtype=float).reshape(-1, 3),
            np.array(lengths, dtype=float),
            np.array(sides, dtype=np.int64),
            status, bad)


def _pair_params(p0, p1, i, j):
    d1 = p1[i] - p0[i]
    d2 = p1[j] - p0[j]
    den = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    w = p0[j] - p0[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (w[..., 0] * d2[..., 1] - w[..., 1] * d2[..., 0]) / den
        t = (w[..., 0] * d1[..., 1] - w[..., 1] * d1[..., 0]) / den
    return s, t


def segment_intersections_brute(p0, p1, eps):
    """All-pairs O(K^2) crossing test; returns ``(i, j, s, t)`` with ``i < j``."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    k = len(p0)
    i, j = np.triu_indices(k, 1)
    s, t = _pair_params(p0, p1, i, j)
    ok = (s > eps) & (s < 1.0 - eps) & (t > eps) & (t < 1.0 - eps)
    return i[ok].astype(np.int64), j[ok].astype(np.int64), s[ok], t[ok]


def segment_intersections(p0, p1, cell, eps):
    """Grid-pruned crossing test with the same output as the brute-force one.

    Segments are registered in every cell their bounding box touches and
    candidate pairs are the distinct pairs sharing a cell.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    k = len(p0)
    if k < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0), np.empty(0)
    lo = np.minimum(p0, p1)
    hi = np.maximum(p0, p1)
    origin = lo.min(axis=0)
    c0 = np.floor((lo - origin) / cell).astype(np.int64)
    c1 = np.floor((hi - origin) / cell).astype(np.int64)
    buckets = {}
    for idx in range(k):
        for cx in range(c0[idx, 0], c1[idx, 0] + 1):
            for cy in range(c0[idx, 1], c1[idx, 1] + 1):
                buckets.setdefault((cx, cy), []).append(idx)
    pairs = set()
    for members in buckets.values():
        m = len(members)
        for a in range(m):
            for b in range(a + 1, m):
                pairs.add((members[a], members[b]))
    if not pairs:
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0), np.empty(0)
    ij = np.array(sorted(pairs), dtype=np.int64)
    i, j = ij[:, 0], ij[:, 1]
    s, t = _pair_params(p0, p1, i, j)
    ok = (s > eps) & (s < 1.0 - eps) & (t > eps) & (t < 1.0 - eps)
    return i[ok], j[ok], s[ok], t[ok]
