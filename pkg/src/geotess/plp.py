"""Poisson line processes in the Euclidean plane.

A line is stored by its normal angle ``theta`` in ``[0, pi)`` and signed
offset ``r``: the set ``x cos(theta) + y sin(theta) = r``. A process of
intensity ``lam`` puts a Poisson point process of intensity ``lam / pi``
on the strip of ``(r, theta)`` pairs, so that ``2 lam R`` lines hit a disk
of radius ``R`` on average and crossings with any fixed line form a
Poisson process of intensity ``2 lam / pi``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

TWO_PI = 2.0 * math.pi
INF_DISTANCE = math.inf


# --- windows -------------------------------------------------------------

@dataclass(frozen=True)
class DiskWindow:
    radius: float
    center: tuple = (0.0, 0.0)

    def support(self, theta):
        """Half-width of the window's projection on the normal ``theta``."""
        return np.full_like(np.asarray(theta, dtype=float), self.radius)

    @property
    def bound(self) -> float:
        return self.radius

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2


@dataclass(frozen=True)
class SquareWindow:
    """The square ``center + [-half_width, half_width]^2``."""

    half_width: float
    center: tuple = (0.0, 0.0)

    def support(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.half_width * (np.abs(np.cos(theta)) + np.abs(np.sin(theta)))

    @property
    def bound(self) -> float:
        # every line meeting the square has |r - c.n| <= n sqrt(2)
        return self.half_width * math.sqrt(2.0)

    @property
    def area(self) -> float:
        return (2.0 * self.half_width) ** 2


Window = Union[DiskWindow, SquareWindow]


def _center_offset(window: Window, theta) -> np.ndarray:
    cx, cy = window.center
    theta = np.asarray(theta, dtype=float)
    return cx * np.cos(theta) + cy * np.sin(theta)


# --- samples -------------------------------------------------------------

@dataclass(frozen=True)
class LineSample:
    r: np.ndarray
    theta: np.ndarray
    intensity: float
    window: Window

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if r.shape != theta.shape or r.ndim != 1:
            raise ValueError("r and theta must be matching vectors")
        if len(theta) and (theta.min() < 0.0 or theta.max() >= math.pi):
            raise ValueError("theta must lie in [0, pi)")
        hits = np.abs(r - _center_offset(self.window, theta)) <= self.window.support(theta) + 1e-12
        if not hits.all():
            raise ValueError("every line must meet the window")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", theta)

    def __len__(self) -> int:
        return len(self.r)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints ``(p0, p1)`` of each line clipped to the window."""
        return clip_lines(self.r, self.theta, self.window)


def sample_plp(lam: float, window: Window, rng: np.random.Generator) -> LineSample:
    """Lines of an intensity-``lam`` process that meet ``window``.

    Offsets are drawn uniformly from the band ``|r - c.n| <= bound`` and
    lines missing the window are rejected, which is exact for the disk and
    conservative for the square.
    """
    if lam < 0:
        raise ValueError("intensity must be nonnegative")
    bound = window.bound
    n = rng.poisson(2.0 * lam * bound) if lam > 0 else 0
    theta = math.pi * rng.random(n)
    r = _center_offset(window, theta) + bound * (2.0 * rng.random(n) - 1.0)
    keep = np.abs(r - _center_offset(window, theta)) <= window.support(theta)
    return LineSample(r[keep], theta[keep], lam, window)


def clip_lines(r, theta, window: Window) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    cx, cy = window.center
    rr = r - (cx * c + cy * s)
    if isinstance(window, DiskWindow):
        h = np.sqrt(np.maximum(window.radius ** 2 - rr * rr, 0.0))
        foot = np.stack([rr * c, rr * s], axis=1)
        d = np.stack([-s, c], axis=1)
        p0 = foot - h[:, None] * d
        p1 = foot + h[:, None] * d
    else:
        # Liang-Barsky style clipping of the line foot + t (-s, c)
        a = window.half_width
        foot = np.stack([rr * c, rr * s], axis=1)
        d = np.stack([-s, c], axis=1)
        lo = np.full(len(r), -np.inf)
        hi = np.full(len(r), np.inf)
        for axis in range(2):
            dk = d[:, axis]
            fk = foot[:, axis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (-a - fk) / dk
                t2 = (a - fk) / dk
            flat = np.abs(dk) < 1e-300
            tmin = np.where(flat, -np.inf, np.minimum(t1, t2))
            tmax = np.where(flat, np.inf, np.maximum(t1, t2))
            lo = np.maximum(lo, tmin)
            hi = np.minimum(hi, tmax)
        p0 = foot + lo[:, None] * d
        p1 = foot + hi[:, None] * d
    shift = np.array([cx, cy])
    return p0 + shift, p1 + shift


def axis_crossings(sample: LineSample) -> np.ndarray:
    """x-coordinates where the lines cross the x-axis inside the window."""
    c = np.cos(sample.theta)
    ok = np.abs(c) > 1e-15
    x = sample.r[ok] / c[ok]
    w = sample.window
    cx, cy = w.center
    if isinstance(w, DiskWindow):
        half = math.sqrt(max(w.radius ** 2 - cy * cy, 0.0))
    else:
        half = w.half_width if abs(cy) <= w.half_width else 0.0
    return np.sort(x[np.abs(x - cx) <= half])


def apply_isometry_to_sample(sample: LineSample, rotation: float = 0.0,
                             translation: Sequence[float] = (0.0, 0.0)) -> LineSample:
    """Rotate about the origin, then translate; keep the lines still meeting the window."""
    theta = sample.theta + rotation
    r = sample.r.copy()
    theta = np.mod(theta, TWO_PI)
    flip = theta >= math.pi
    theta = np.where(flip, theta - math.pi, theta)
    r = np.where(flip, -r, r)
    theta = np.where(theta >= math.pi, 0.0, theta)
    tx, ty = translation
    r = r + tx * np.cos(theta) + ty * np.sin(theta)
    w = sample.window
    keep = np.abs(r - _center_offset(w, theta)) <= w.support(theta)
    return LineSample(r[keep], theta[keep], sample.intensity, w)


# --- chords and arcs -------------------------------------------------------

@dataclass(frozen=True)
class ChordConfiguration:
    """Chords of the circle of radius ``alpha`` as endpoint-angle pairs.

    When ``directed`` is set, each row reads (entry angle, exit angle).
    """

    angles: np.ndarray
    alpha: float
    directed: bool = False

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float).reshape(-1, 2)
        if len(a) and (a.min() < 0.0 or a.max() >= TWO_PI):
            raise ValueError("chord angles must lie in [0, 2 pi)")
        object.__setattr__(self, "angles", a)

    def __len__(self) -> int:
        return len(self.angles)

    @classmethod
    def empty(cls, alpha: float, directed: bool = False) -> "ChordConfiguration":
        return cls(np.empty((0, 2)), alpha, directed)


def wrap(theta):
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def chords_from_lines(sample: LineSample, alpha: float,
                      rng: Optional[np.random.Generator] = None) -> ChordConfiguration:
    """Endpoint angles of the lines that meet the disk of radius ``alpha``.

    The disk is centered on the window center. A line with normal ``theta``
    at distance ``r`` meets the circle at ``theta +- arccos(r / alpha)``.
    With ``rng`` each chord gets a uniformly random orientation.
    """
    rr = sample.r - _center_offset(sample.window, sample.theta)
    hit = np.abs(rr) < alpha
    phi = np.arccos(rr[hit] / alpha)
    th = sample.theta[hit]
    ang = np.stack([wrap(th + phi), wrap(th - phi)], axis=1)
    if rng is not None:
        swap = rng.random(len(ang)) < 0.5
        ang[swap] = ang[swap][:, ::-1]
        return ChordConfiguration(ang, alpha, directed=True)
    return ChordConfiguration(ang, alpha)


def lines_from_chords(config: ChordConfiguration) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`chords_from_lines`: ``(r, theta)`` with ``theta`` in ``[0, pi)``."""
    a, b = config.angles[:, 0], config.angles[:, 1]
    mid = np.angle(np.exp(1j * a) + np.exp(1j * b))
    half = 0.5 * np.abs(np.angle(np.exp(1j * (a - b))))
    r = config.alpha * np.cos(half)
    theta = np.mod(mid, TWO_PI)
    flip = theta >= math.pi
    return np.where(flip, -r, r), np.where(flip, theta - math.pi, theta)


def _in_arc(x, lo: float, hi: float):
    """Membership of angles ``x`` in the half-open arc ``[lo, hi)`` taken mod 2 pi."""
    width = hi - lo
    return np.mod(np.asarray(x) - lo, TWO_PI) < width


@dataclass(frozen=True)
class ArcPair:
    """Two disjoint half-open arcs ``A = [a0, a1)`` and ``B = [b0, b1)``."""

    a0: float
    a1: float
    b0: float
    b1: float
    alpha: float = 1.0

    def __post_init__(self):
        la, lb = self.a1 - self.a0, self.b1 - self.b0
        if la < 0 or lb < 0:
            raise ValueError("arcs must run counterclockwise")
        if la + lb > TWO_PI + 1e-12:
            raise ValueError("arcs overlap")
        # B must start after A ends and end before A starts again
        gap = math.fmod(self.b0 - self.a1, TWO_PI)
        gap = gap + TWO_PI if gap < -1e-12 else gap
        if gap + lb > TWO_PI - la + 1e-12:
            raise ValueError("arcs overlap")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def scaled(self, c: float) -> "ArcPair":
        return ArcPair(self.a0, self.a1, self.b0, self.b1, self.alpha * c)

    def contains_a(self, x):
        return _in_arc(x, self.a0, self.a1)

    def contains_b(self, x):
        return _in_arc(x, self.b0, self.b1)

    def arcs(self):
        return (self.a0, self.a1), (self.b0, self.b1)


def _arcs_meet(p: tuple, q: tuple) -> bool:
    (p0, p1), (q0, q1) = p, q
    if p1 - p0 <= 0 or q1 - q0 <= 0:
        return False
    return bool(_in_arc(q0, p0, p1) or _in_arc(p0, q0, q1))


def pairs_compatible(pairs: Sequence[ArcPair]) -> bool:
    """True when no line can cross both arcs of two different pairs."""
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            a, b = pairs[i].arcs()
            c, d = pairs[j].arcs()
            if (_arcs_meet(a, c) and _arcs_meet(b, d)) or (_arcs_meet(a, d) and _arcs_meet(b, c)):
                return False
    return True


def partition_pairs(m: int, alpha: float = 1.0) -> list[ArcPair]:
    """All unordered pairs of an ``m``-arc equal partition of the circle."""
    edges = np.arange(m + 1) * TWO_PI / m
    return [ArcPair(edges[i], edges[i + 1], edges[j], edges[j + 1], alpha)
            for i in range(m) for j in range(i + 1, m)]


def opposite_pairs(m: int, alpha: float = 1.0) -> list[ArcPair]:
    """Pairs of diametrically opposite arcs from an even ``m``-arc partition."""
    if m % 2:
        raise ValueError("m must be even")
    edges = np.arange(m + 1) * TWO_PI / m
    h = m // 2
    return [ArcPair(edges[i], edges[i + 1], edges[i + h], edges[i + h + 1], alpha) for i in range(h)]


# --- the beta integral -----------------------------------------------------

def _phi_set(theta: float, lo: float, hi: float, sign: int) -> list[tuple[float, float]]:
    """``{phi in (0, pi): theta + sign * phi in [lo, hi)}`` as a list of intervals."""
    if hi - lo <= 0:
        return []
    if hi - lo >= TWO_PI:
        return [(0.0, math.pi)]
    # the endpoint sweeps from theta (phi = 0) in direction ``sign``
    if sign > 0:
        start = math.fmod(lo - theta, TWO_PI)
    else:
        start = math.fmod(theta - hi, TWO_PI)
    if start < 0:
        start += TWO_PI
    width = hi - lo
    out = []
    for shift in (-TWO_PI, 0.0):
        a = start + shift
        b = a + width
        a, b = max(a, 0.0), min(b, math.pi)
        if b > a:
            out.append((a, b))
    return out


def _intersect(u: list, v: list) -> list:
    out = []
    for a0, a1 in u:
        for b0, b1 in v:
            lo, hi = max(a0, b0), min(a1, b1)
            if hi > lo:
                out.append((lo, hi))
    return out


def psi(theta: float, pair: ArcPair) -> float:
    """Measure of offsets ``r`` whose line with normal ``theta`` crosses both arcs.

    The chord of a line at distance ``r = alpha cos(phi)`` ends at angles
    ``theta + phi`` and ``theta - phi``; we collect the ``phi`` for which one
    end lies in ``A`` and the other in ``B`` and integrate ``alpha sin(phi)``.
    """
    (a0, a1), (b0, b1) = pair.arcs()
    sets = _intersect(_phi_set(theta, a0, a1, +1), _phi_set(theta, b0, b1, -1))
    sets += _intersect(_phi_set(theta, b0, b1, +1), _phi_set(theta, a0, a1, -1))
    return pair.alpha * sum(math.cos(lo) - math.cos(hi) for lo, hi in sets)


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 50) -> float:
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def beta_integral(pair: ArcPair, tol: float = 1e-7) -> float:
    """``(1/pi) * integral over [0, pi) of psi``; lines crossing both arcs are Poisson(lam beta)."""
    if pair.a1 - pair.a0 <= 0 or pair.b1 - pair.b0 <= 0:
        return 0.0
    # psi changes form where the chord from an endpoint of A to an endpoint
    # of B has normal theta, i.e. at the folded midpoints of those endpoints
    mids = {0.5 * (x + y) for x in (pair.a0, pair.a1) for y in (pair.b0, pair.b1)}
    cuts = sorted({0.0, math.pi} | {math.fmod(math.fmod(m, math.pi) + math.pi, math.pi) for m in mids})
    total = 0.0
    pieces = [(lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:]) if hi > lo]
    for lo, hi in pieces:
        total += _adaptive_simpson(lambda t: psi(t, pair), lo, hi, tol / len(pieces))
    return max(total / math.pi, 0.0)


def beta_crofton(pair: ArcPair) -> float:
    """Closed form: diagonals minus sides of the chord quadrilateral, over pi."""
    def chord(x, y):
        return 2.0 * pair.alpha * abs(math.sin(0.5 * (y - x)))

    if pair.a1 - pair.a0 <= 0 or pair.b1 - pair.b0 <= 0:
        return 0.0
    a0, a1, b0, b1 = pair.a0, pair.a1, pair.b0, pair.b1
    val = chord(a0, b0) + chord(a1, b1) - chord(a1, b0) - chord(a0, b1)
    return max(val / math.pi, 0.0)


# --- counts and the configuration metric -----------------------------------

@dataclass(frozen=True)
class CrossingCountTable:
    """``directed[p] = (N_{A,B}, N_{B,A})`` for each arc pair ``p``."""

    directed: np.ndarray
    replicate: int = 0

    @property
    def undirected(self) -> np.ndarray:
        return self.directed.sum(axis=1)


def crossing_counts(config: ChordConfiguration, pairs: Sequence[ArcPair],
                    replicate: int = 0) -> CrossingCountTable:
    out = np.zeros((len(pairs), 2), dtype=np.int64)
    if len(config):
        y, z = config.angles[:, 0], config.angles[:, 1]
        for k, p in enumerate(pairs):
            out[k, 0] = np.count_nonzero(p.contains_a(y) & p.contains_b(z))
            out[k, 1] = np.count_nonzero(p.contains_b(y) & p.contains_a(z))
    return CrossingCountTable(out, replicate)


def _circ(x, y):
    d = np.abs(np.mod(np.asarray(x) - np.asarray(y) + math.pi, TWO_PI) - math.pi)
    return d


def chord_cost_matrix(f: ChordConfiguration, g: ChordConfiguration) -> np.ndarray:
    a = f.angles[:, None, :]
    b = g.angles[None, :, :]
    same = _circ(a[..., 0], b[..., 0]) + _circ(a[..., 1], b[..., 1])
    cross = _circ(a[..., 0], b[..., 1]) + _circ(a[..., 1], b[..., 0])
    return f.alpha * np.minimum(same, cross)


def config_distance(f: ChordConfiguration, g: ChordConfiguration) -> float:
    """Optimal-matching distance; infinite for different chord counts."""
    if len(f) != len(g):
        return INF_DISTANCE
    if len(f) == 0:
        return 0.0
    cost = chord_cost_matrix(f, g)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


# --- serialization -----------------------------------------------------------

def lines_to_csv(samples: Iterable[tuple[int, LineSample]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "r", "theta"])
    for rep, s in samples:
        for r, t in zip(s.r, s.theta):
            w.writerow([rep, repr(float(r)), repr(float(t))])
    return buf.getvalue()


def chords_to_csv(configs: Iterable[tuple[int, ChordConfiguration]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "angle1", "angle2", "direction"])
    for rep, c in configs:
        tag = "entry_exit" if c.directed else "none"
        for a, b in c.angles:
            w.writerow([rep, repr(float(a)), repr(float(b)), tag])
    return buf.getvalue()


def lines_from_csv(text: str, intensity: float, window: Window) -> dict[int, LineSample]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out: dict[int, list] = {}
    for row in rows:
        out.setdefault(int(row["replicate"]), []).append((float(row["r"]), float(row["theta"])))
    return {rep: LineSample(np.array([a for a, _ in v]), np.array([b for _, b in v]), intensity, window)
            for rep, v in out.items()}
