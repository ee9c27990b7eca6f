# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_kernels_py`` for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atanh, cosh, sinh, sqrt, fabs, floor, INFINITY

cnp.import_array()

STATUS_OK = 0
STATUS_VERTEX = 1


cdef inline double _ldot(double a0, double a1, double a2,
                         double b0, double b1, double b2) nogil:
    return a0 * b0 + a1 * b1 - a2 * b2


def trace_flow(normals, pairings, x0, u0, double T, double vertex_tol):
    cdef const double[:, ::1] N = np.ascontiguousarray(normals, dtype=np.float64)
    cdef const double[:, :, ::1] M = np.ascontiguousarray(pairings, dtype=np.float64)
    cdef int nsides = N.shape[0]
    cdef double x[3]
    cdef double u[3]
    cdef double xe[3]
    cdef double ue[3]
    cdef double nx[3]
    cdef double nu[3]
    cdef Py_ssize_t cap = 64, count = 0
    cdef int i, j, k, best_j, status = 0
    cdef Py_ssize_t bad = -1
    cdef double remaining = T, a, b, r, s, best_s, ch, sh, q, xu, uu, scale

    for i in range(3):
        x[i] = float(x0[i])
        u[i] = float(u0[i])

    starts_a = np.empty((cap, 3))
    ends_a = np.empty((cap, 3))
    lengths_a = np.empty(cap)
    sides_a = np.empty(cap, dtype=np.int64)
    cdef double[:, ::1] starts = starts_a
    cdef double[:, ::1] ends = ends_a
    cdef double[::1] lengths = lengths_a
    cdef cnp.int64_t[::1] sides = sides_a

    while remaining > 0.0:
        if count == cap:
            cap *= 2
            starts_a = np.resize(starts_a, (cap, 3))
            ends_a = np.resize(ends_a, (cap, 3))
            lengths_a = np.resize(lengths_a, cap)
            sides_a = np.resize(sides_a, cap)
            starts = starts_a
            ends = ends_a
            lengths = lengths_a
            sides = sides_a
        best_s = INFINITY
        best_j = -1
        for j in range(nsides):
            a = _ldot(N[j, 0], N[j, 1], N[j, 2], x[0], x[1], x[2])
            b = _ldot(N[j, 0], N[j, 1], N[j, 2], u[0], u[1], u[2])
            if b <= 0.0 or -a >= b:
                continue
            r = -a / b
            s = 0.0 if r <= 0.0 else atanh(r)
            if s < best_s:
                best_s = s
                best_j = j
        for i in range(3):
            starts[count, i] = x[i]
        if best_j < 0 or best_s >= remaining:
            ch = cosh(remaining)
            sh = sinh(remaining)
            for i in range(3):
                ends[count, i] = ch * x[i] + sh * u[i]
            lengths[count] = remaining
            sides[count] = -1
            count += 1
            break
        s = best_s
        ch = cosh(s)
        sh = sinh(s)
        for i in range(3):
            xe[i] = ch * x[i] + sh * u[i]
            ue[i] = sh * x[i] + ch * u[i]
            ends[count, i] = xe[i]
        lengths[count] = s
        sides[count] = best_j
        count += 1
        remaining -= s
        for k in ((best_j + nsides - 1) % nsides, (best_j + 1) % nsides):
            if fabs(_ldot(N[k, 0], N[k, 1], N[k, 2], xe[0], xe[1], xe[2])) < vertex_tol:
                status = STATUS_VERTEX
                bad = count - 1
        if status != 0:
            break
        for i in range(3):
            nx[i] = M[best_j, i, 0] * xe[0] + M[best_j, i, 1] * xe[1] + M[best_j, i, 2] * xe[2]
            nu[i] = M[best_j, i, 0] * ue[0] + M[best_j, i, 1] * ue[1] + M[best_j, i, 2] * ue[2]
        q = nx[2] * nx[2] - nx[0] * nx[0] - nx[1] * nx[1]
        scale = 1.0 / sqrt(q)
        for i in range(3):
            x[i] = nx[i] * scale
        xu = x[0] * nu[0] + x[1] * nu[1] - x[2] * nu[2]
        for i in range(3):
            u[i] = nu[i] + xu * x[i]
        uu = u[0] * u[0] + u[1] * u[1] - u[2] * u[2]
        scale = 1.0 / sqrt(uu)
        for i in range(3):
            u[i] = u[i] * scale

    return (starts_a[:count].copy(), ends_a[:count].copy(), lengths_a[:count].copy(),
            sides_a[:count].copy(), status, bad)


def segment_intersections(p0, p1, double cell, double eps):
    """Grid-pruned crossing test; a pair is tested once, in the lowest shared cell."""
    cdef const double[:, ::1] P = np.ascontiguousarray(p0, dtype=np.float64)
    cdef const double[:, ::1] Q = np.ascontiguousarray(p1, dtype=np.float64)
    cdef Py_ssize_t k = P.shape[0]
    if k < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0), np.empty(0)
    cdef Py_ssize_t idx, m, a, b, c, cx, cy, total, pos
    cdef double ox = INFINITY, oy = INFINITY
    for idx in range(k):
        ox = min(ox, P[idx, 0], Q[idx, 0])
        oy = min(oy, P[idx, 1], Q[idx, 1])
    c0_a = np.empty((k, 2), dtype=np.int64)
    c1_a = np.empty((k, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] c0 = c0_a
    cdef cnp.int64_t[:, ::1] c1 = c1_a
    cdef cnp.int64_t nx = 0, ny = 0
    for idx in range(k):
        c0[idx, 0] = <cnp.int64_t>floor((min(P[idx, 0], Q[idx, 0]) - ox) / cell)
        c0[idx, 1] = <cnp.int64_t>floor((min(P[idx, 1], Q[idx, 1]) - oy) / cell)
        c1[idx, 0] = <cnp.int64_t>floor((max(P[idx, 0], Q[idx, 0]) - ox) / cell)
        c1[idx, 1] = <cnp.int64_t>floor((max(P[idx, 1], Q[idx, 1]) - oy) / cell)
        nx = max(nx, c1[idx, 0] + 1)
        ny = max(ny, c1[idx, 1] + 1)

    # counting sort of (segment, cell) memberships into CSR buckets
    start_a = np.zeros(nx * ny + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] start = start_a
    for idx in range(k):
        for cx in range(c0[idx, 0], c1[idx, 0] + 1):
            for cy in range(c0[idx, 1], c1[idx, 1] + 1):
                start[cx * ny + cy + 1] += 1
    for c in range(nx * ny):
        start[c + 1] += start[c]
    total = start[nx * ny]
    fill_a = start_a[:-1].copy()
    cdef cnp.int64_t[::1] fill = fill_a
    members_a = np.empty(total, dtype=np.int64)
    cdef cnp.int64_t[::1] members = members_a
    for idx in range(k):
        for cx in range(c0[idx, 0], c1[idx, 0] + 1):
            for cy in range(c0[idx, 1], c1[idx, 1] + 1):
                c = cx * ny + cy
                members[fill[c]] = idx
                fill[c] += 1

    out_i, out_j, out_s, out_t = [], [], [], []
    cdef Py_ssize_t si, sj
    cdef double d1x, d1y, d2x, d2y, wx, wy, den, s, t
    for cx in range(nx):
        for cy in range(ny):
            c = cx * ny + cy
            for a in range(start[c], start[c + 1]):
                for b in range(a + 1, start[c + 1]):
                    si = members[a]
                    sj = members[b]
                    if si > sj:
                        si, sj = sj, si
                    if max(c0[si, 0], c0[sj, 0]) != cx or max(c0[si, 1], c0[sj, 1]) != cy:
                        continue
                    d1x = Q[si, 0] - P[si, 0]
                    d1y = Q[si, 1] - P[si, 1]
                    d2x = Q[sj, 0] - P[sj, 0]
                    d2y = Q[sj, 1] - P[sj, 1]
                    den = d1x * d2y - d1y * d2x
                    if den == 0.0:
                        continue
                    wx = P[sj, 0] - P[si, 0]
                    wy = P[sj, 1] - P[si, 1]
                    s = (wx * d2y - wy * d2x) / den
                    t = (wx * d1y - wy * d1x) / den
                    if s > eps and s < 1.0 - eps and t > eps and t < 1.0 - eps:
                        out_i.append(si)
                        out_j.append(sj)
                        out_s.append(s)
                        out_t.append(t)
    ii = np.array(out_i, dtype=np.int64)
    jj = np.array(out_j, dtype=np.int64)
    ss = np.array(out_s, dtype=float)
    tt = np.array(out_t, dtype=float)
    order = np.lexsort((jj, ii))
    return ii[order], jj[order], ss[order], tt[order]
