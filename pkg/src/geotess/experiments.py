"""End-to-end experiments: configuration, seeding, the replicate scheduler and reports.

Every replicate draws from its own stream ``default_rng([seed, stream, i])``
so results depend only on the master seed, never on how replicates are
split across workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .hypgeom import HPoint, hyp_distance
from .kernels import BACKEND
from .plp import (ArcPair, DiskWindow, LineSample, SquareWindow, axis_crossings, beta_crofton,
                  beta_integral, chords_from_lines, crossing_counts, lines_to_csv, opposite_pairs,
                  pairs_compatible, partition_pairs, sample_plp)
from .stats import (DiscreteDistribution, InsufficientDataError, chi_square_gof, chi_square_two_sample,
                    independence_test, poisson_pmf, tv_distance)
from .surface import Surface, build_genus2_surface
from .tessellation import (SIDE_BINS, ANGLE_BINS, DegeneracyError, FaceCensus, all_crossings,
                           build_arrangement, face_census, surface_census, surface_map_from_trace, _in_square)
from .tracer import disk_crossings, entry_time_diagnostics, random_trace, self_intersections

CONFIG_VERSION = 1
DEFAULT_SEED = 12345
OUTPUT_ENV = "GEOTESS_OUTPUT"
EXPERIMENTS = ("plp-sanity", "local", "two-point", "global", "selfint")
MAX_K = 12  # k-gon census columns; larger faces share the last one

# per-battery stream tags
STREAM_HITS, STREAM_AXIS, STREAM_PAIRS, STREAM_VERTEX, STREAM_WINDOW, STREAM_LARGE = 1, 2, 3, 4, 5, 6

TRIANGLE_LIMIT = 2.0 - math.pi ** 2 / 6.0


class ConfigError(ValueError):
    """Invalid configuration text or override."""


class MissingDataError(FileNotFoundError):
    pass


# --- configuration --------------------------------------------------------------

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")


def parse_decimal(text: str) -> float:
    s = text.strip()
    if not _DECIMAL.match(s):
        raise ConfigError(f"not a plain decimal number: {text!r}")
    return float(s)


def parse_int(text: str) -> int:
    s = text.strip()
    if not re.match(r"^[+-]?\d+$", s):
        raise ConfigError(f"not an integer: {text!r}")
    return int(s)


def _list(parse):
    def f(text: str) -> tuple:
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise ConfigError("empty list")
        return tuple(parse(p) for p in parts)
    return f


def _point(text: str) -> tuple:
    v = _list(parse_decimal)(text)
    if len(v) != 2:
        raise ConfigError(f"expected 'x, y', got {text!r}")
    return v


def _arcs(text: str) -> tuple:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            v = tuple(parse_decimal(p) for p in chunk.split(":"))
            if len(v) != 4:
                raise ConfigError(f"arc pair needs a0:a1:b0:b1, got {chunk!r}")
            out.append(v)
    return tuple(out)


def _fmt(v) -> str:
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(":".join(repr(float(x)) for x in a) for a in v)
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment's parameters.

    ``replicates`` has one entry per ``T`` (or a single shared entry); for
    ``plp-sanity`` it is the number of window seeds. ``arcs`` lists arc
    pairs as ``(a0, a1, b0, b1)`` in radians; ``center`` and ``center2`` are
    Poincare-disk coordinates.
    """

    experiment: str
    T: tuple = ()
    alpha: float = 10.0
    replicates: tuple = (1,)
    seed: int = DEFAULT_SEED
    workers: int = 1
    center: tuple = (0.0, 0.0)
    center2: Optional[tuple] = None
    arcs: tuple = ()
    lam: float = 1.0
    half_width: float = 25.0
    pad: float = 15.0
    large_half_width: float = 250.0
    hit_replicates: int = 100_000
    axis_replicates: int = 1000
    pair_replicates: int = 100_000
    vertex_replicates: int = 20_000
    output: Optional[str] = None
    label: str = "default"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if any(r < 1 for r in self.replicates):
            raise ConfigError("replicate counts must be at least 1")
        if any(t <= 0 for t in self.T):
            raise ConfigError("T must be positive")
        if self.T and len(self.replicates) not in (1, len(self.T)):
            raise ConfigError("give one replicate count, or one per T")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.alpha <= 0 or self.lam < 0 or self.half_width <= 0:
            raise ConfigError("alpha and half_width must be positive, lam nonnegative")
        if min(self.hit_replicates, self.axis_replicates, self.pair_replicates,
               self.vertex_replicates) < 1:
            raise ConfigError("battery sizes must be at least 1")
        try:
            pairs = self.arc_pairs()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not pairs_compatible(pairs):
            raise ConfigError("arc pairs declared jointly must not share lines")
        if self.experiment == "two-point":
            c2 = self.second_center()
            d = hyp_distance(self.first_center(), c2)
            if any(d <= 4.0 * self.alpha / t for t in self.T):
                raise ConfigError("disk centers must be more than 4 alpha / T apart")

    def replicates_for(self, k: int) -> int:
        return self.replicates[k] if len(self.replicates) > 1 else self.replicates[0]

    def arc_pairs(self) -> list[ArcPair]:
        return [ArcPair(*a, alpha=self.alpha) for a in self.arcs]

    def first_center(self) -> HPoint:
        return HPoint(*self.center)

    def second_center(self) -> HPoint:
        c = self.center2 if self.center2 is not None else (math.tanh(0.5), 0.0)
        return HPoint(*c)

    def to_text(self) -> str:
        lines = [f"version = {CONFIG_VERSION}"]
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or v == ():
                continue
            lines.append(f"{f.name} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Replace fields given as strings (CLI flags) or typed values."""
        typed = {}
        for k, v in kw.items():
            if v is None:
                continue
            if k not in _SCHEMA:
                raise ConfigError(f"unknown key {k!r}")
            typed[k] = _SCHEMA[k](v) if isinstance(v, str) else v
        return replace(self, **typed)


_SCHEMA: dict[str, Callable] = {
    "experiment": str.strip,
    "T": _list(parse_decimal),
    "alpha": parse_decimal,
    "replicates": _list(parse_int),
    "seed": parse_int,
    "workers": parse_int,
    "center": _point,
    "center2": _point,
    "arcs": _arcs,
    "lam": parse_decimal,
    "half_width": parse_decimal,
    "pad": parse_decimal,
    "large_half_width": parse_decimal,
    "hit_replicates": parse_int,
    "axis_replicates": parse_int,
    "pair_replicates": parse_int,
    "vertex_replicates": parse_int,
    "output": str.strip,
    "label": str.strip,
}

CONFIG_KEYS = tuple(_SCHEMA)

_QUADRANTS = tuple((i * math.pi / 2, (i + 1) * math.pi / 2, j * math.pi / 2, (j + 1) * math.pi / 2)
                   for i in range(4) for j in range(i + 1, 4))

DEFAULTS = {
    "plp-sanity": dict(replicates=(20,)),
    "local": dict(T=(500.0, 1500.0, 3000.0), alpha=10.0, replicates=(2000,), arcs=_QUADRANTS),
    "two-point": dict(T=(3000.0,), alpha=10.0, replicates=(2000,)),
    "global": dict(T=(300.0, 400.0), replicates=(100, 50)),
    "selfint": dict(T=(100.0, 200.0, 300.0), replicates=(20,)),
}


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    base = dict(DEFAULTS[experiment])
    base.update(overrides)
    return ExperimentConfig(experiment=experiment, **base)


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; ``version`` is required."""
    values: dict[str, str] = {}
    version = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "version":
            version = parse_int(val)
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = val
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {version}")
    if "experiment" not in values:
        raise ConfigError("missing 'experiment'")
    exp = values.pop("experiment")
    return default_config(exp).with_overrides(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# --- reports ----------------------------------------------------------------------

@dataclass
class Metric:
    """One checked quantity. ``provenance`` says where the reference comes from:
    ``formula`` (closed form), ``oracle`` (independent computation) or ``exact``."""

    name: str
    estimate: Optional[float]
    reference: Optional[float]
    provenance: str
    rule: str
    passed: bool
    stderr: Optional[float] = None
    gating: bool = True
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


@dataclass
class ExperimentReport:
    experiment: str
    label: str
    seed: int
    config: dict
    metrics: list
    raw_files: list = field(default_factory=list)
    wall_clock: float = 0.0
    versions: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics if m.gating)

    def metric(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "files"}
        d["passed"] = self.passed
        return _clean(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        d = json.loads(text)
        d.pop("passed", None)
        d["metrics"] = [Metric(**m) for m in d["metrics"]]
        return cls(**d)


def _versions() -> dict:
    return {"geotess": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernels": BACKEND}


def _report(config: ExperimentConfig, metrics: list, files: dict, t0: float) -> ExperimentReport:
    cfg = {k: _fmt(v) for k, v in asdict(config).items() if v is not None and v != ()}
    return ExperimentReport(config.experiment, config.label, config.seed, cfg, metrics,
                            sorted(files), round(time.perf_counter() - t0, 3), _versions(), files)


def output_dir(config: ExperimentConfig) -> Path:
    base = config.output or os.environ.get(OUTPUT_ENV) or "results"
    return Path(base) / config.experiment / config.label


def save_report(report: ExperimentReport, config: ExperimentConfig) -> Path:
    """Write ``config.echo``, ``report.json`` and the raw files; returns the directory."""
    d = output_dir(config)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.echo").write_text(config.to_text())
    for name, text in report.files.items():
        (d / name).write_text(text)
    (d / "report.json").write_text(report.to_json())
    return d


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


# --- scheduling -------------------------------------------------------------------

def replicate_rng(seed: int, stream: int, i: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, i])


def trace_stream(T: float) -> int:
    return 1000 + int(round(T * 1000))


def _chunks(n: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def run_replicates(job: Callable, args: tuple, n: int, workers: int = 1, chunk: int = 256) -> list:
    """Apply ``job(args, lo, hi)`` to replicate ranges and concatenate in order."""
    parts = _chunks(n, chunk)
    if workers <= 1 or len(parts) == 1:
        results = [job(args, lo, hi) for lo, hi in parts]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, [args] * len(parts), [p[0] for p in parts],
                                  [p[1] for p in parts]))
    out = []
    for r in results:
        out.extend(r)
    return out


@lru_cache(maxsize=1)
def surface() -> Surface:
    return build_genus2_surface()


def _within(est, ref, rel) -> bool:
    if ref == 0:
        return est == 0
    return abs(est - ref) <= rel * abs(ref)


# --- PLP battery -------------------------------------------------------------------

HIT_CENTER = (0.3, -0.2)
HIT_RADIUS = 1.0
HIT_SQUARE = 1.5
AXIS_HALF_WIDTH = 50.0


def _job_hits(args, lo, hi):
    seed, lam = args
    w = SquareWindow(HIT_SQUARE, (0.0, 0.0))
    cx, cy = HIT_CENTER
    out = []
    for i in range(lo, hi):
        s = sample_plp(lam, w, replicate_rng(seed, STREAM_HITS, i))
        d = np.abs(s.r - cx * np.cos(s.theta) - cy * np.sin(s.theta))
        out.append(int(np.count_nonzero(d < HIT_RADIUS)))
    return out


def _job_axis(args, lo, hi):
    seed, lam = args
    w = SquareWindow(AXIS_HALF_WIDTH, (0.0, 0.0))
    return [len(axis_crossings(sample_plp(lam, w, replicate_rng(seed, STREAM_AXIS, i))))
            for i in range(lo, hi)]


def _job_pairs(args, lo, hi):
    seed, lam, pairs = args
    w = DiskWindow(1.0, (0.0, 0.0))
    out = []
    for i in range(lo, hi):
        rng = replicate_rng(seed, STREAM_PAIRS, i)
        chords = chords_from_lines(sample_plp(lam, w, rng), 1.0)
        out.append(crossing_counts(chords, pairs, i).undirected)
    return out


def _job_vertex(args, lo, hi):
    seed, lam = args
    w = SquareWindow(0.5, (0.5, 0.5))
    out = []
    for i in range(lo, hi):
        s = sample_plp(lam, w, replicate_rng(seed, STREAM_VERTEX, i))
        p0, p1 = s.segments()
        out.append(len(all_crossings(p0, p1)[0]))
    return out


def _clip_area(poly: np.ndarray, inner: SquareWindow) -> float:
    """Area of a convex polygon intersected with an axis-aligned square."""
    cx, cy = inner.center
    h = inner.half_width
    pts = [tuple(p) for p in poly]
    for axis, bound, keep_less in ((0, cx + h, True), (0, cx - h, False),
                                   (1, cy + h, True), (1, cy - h, False)):
        if not pts:
            return 0.0
        out = []
        for k in range(len(pts)):
            a, b = pts[k - 1], pts[k]
            ina = a[axis] <= bound if keep_less else a[axis] >= bound
            inb = b[axis] <= bound if keep_less else b[axis] >= bound
            if inb:
                if not ina:
                    out.append(_cut(a, b, axis, bound))
                out.append(b)
            elif ina:
                out.append(_cut(a, b, axis, bound))
        pts = out
    if len(pts) < 3:
        return 0.0
    p = np.array(pts)
    return 0.5 * abs(float(np.dot(p[:, 0], np.roll(p[:, 1], -1)) - np.dot(p[:, 1], np.roll(p[:, 0], -1))))


def _cut(a, b, axis, bound):
    t = (bound - a[axis]) / (b[axis] - a[axis])
    return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))


def inner_area_weights(census: FaceCensus, inner: SquareWindow) -> np.ndarray:
    """Fraction of each bounded face's area that lies inside ``inner``."""
    n = census.n_faces
    w = np.zeros(n)
    if n == 0:
        return w
    off = census.side_offsets
    pts = census.face_points
    lo = np.minimum.reduceat(pts, off[:-1], axis=0)
    hi = np.maximum.reduceat(pts, off[:-1], axis=0)
    cx, cy = inner.center
    h = inner.half_width
    inside = (lo[:, 0] >= cx - h) & (hi[:, 0] <= cx + h) & (lo[:, 1] >= cy - h) & (hi[:, 1] <= cy + h)
    outside = (hi[:, 0] <= cx - h) | (lo[:, 0] >= cx + h) | (hi[:, 1] <= cy - h) | (lo[:, 1] >= cy + h)
    w[inside] = 1.0
    for f in np.flatnonzero(~inside & ~outside):
        w[f] = _clip_area(pts[off[f]:off[f + 1]], inner) / census.face_area[f]
    return w


def build_with_retry(sample: LineSample, window, rng: np.random.Generator, attempts: int = 5):
    """Build the arrangement, jittering offsets by 1e-8 after a degeneracy."""
    for _ in range(attempts):
        try:
            return build_arrangement(sample, window), sample
        except DegeneracyError:
            jitter = 1e-8 * rng.standard_normal(len(sample.r))
            sample = LineSample(sample.r + jitter, sample.theta, sample.intensity, window)
    return build_arrangement(sample, window, on_degenerate="flag"), sample


def window_census(lam: float, half_width: float, pad: float, rng: np.random.Generator) -> dict:
    """Unbiased window statistics from a PLP on the padded square.

    Faces are weighted by the fraction of their area inside ``[-n, n]^2``
    (zero for faces cut by the outer boundary), so the weighted face count
    estimates the number of faces per area times ``(2n)^2`` without edge
    effects. Vertices, edges (by lower
    endpoint) and crossing angles are counted inside the inner square.
    """
    inner = SquareWindow(half_width, (0.0, 0.0))
    outer = SquareWindow(half_width + pad, (0.0, 0.0))
    sample = sample_plp(lam, outer, rng)
    arr, sample = build_with_retry(sample, outer, rng)
    cen = face_census(arr)
    wts = inner_area_weights(cen, inner)
    # faces cut by the padded boundary are truncated, not cells of the process
    wts[cen.face_boundary] = 0.0
    k = np.minimum(cen.face_k, MAX_K)
    in_e = _in_square(cen.edge_anchor, inner)
    in_v = _in_square(cen.vertex_points, inner)
    return {
        "lines": len(sample.r),
        "V": int(in_v.sum()),
        "F": float(wts.sum()),
        "k_weighted": np.bincount(k, weights=wts, minlength=MAX_K + 1)[3:],
        "euler": arr.euler_holds(),
        "flags": len(arr.flags),
        "edge_lengths": cen.edge_lengths[in_e],
        "angles": cen.vertex_angles[in_v],
        "sample": sample,
    }


def _job_windows(args, lo, hi):
    seed, lam, n, pad, stream = args
    out = []
    for i in range(lo, hi):
        c = window_census(lam, n, pad, replicate_rng(seed, stream, i))
        if i > 0 or stream != STREAM_WINDOW:
            c.pop("sample")
        out.append(c)
    return out


@dataclass(frozen=True)
class PlpReference:
    """Large-window triangle fraction and the window edge/angle census."""

    phi3: float
    phi3_stderr: float
    phi3_faces: float
    windows: tuple
    lengths: np.ndarray
    angles: np.ndarray

    def side_hist(self, intensity: float) -> np.ndarray:
        """Edge-length counts on ``SIDE_BINS`` for a process of the given intensity."""
        return np.histogram(self.lengths / intensity, bins=SIDE_BINS)[0]

    def angle_hist(self) -> np.ndarray:
        return np.histogram(self.angles, bins=ANGLE_BINS)[0]


@lru_cache(maxsize=4)
def plp_reference(seed: int, lam: float = 1.0, half_width: float = 25.0, pad: float = 15.0,
                  replicates: int = 20, large_half_width: float = 250.0,
                  workers: int = 1) -> PlpReference:
    """PLP reference statistics, identical wherever they are computed from the same seed.

    Side lengths are rescaled to unit intensity (multiplied by ``lam``) so
    they can be compared with any other intensity after scaling.
    """
    windows = run_replicates(_job_windows, (seed, lam, half_width, pad, STREAM_WINDOW),
                             replicates, workers, chunk=1)
    if lam > 0:
        big = window_census(lam, large_half_width, pad, replicate_rng(seed, STREAM_LARGE, 0))
        kw = big["k_weighted"]
        F = big["F"]
        phi3 = float(kw[0] / F) if F > 0 else math.nan
        se = math.sqrt(phi3 * (1 - phi3) / F) if F > 0 else math.nan
    else:
        phi3, se, F = math.nan, math.nan, 0.0
    lengths = np.concatenate([w["edge_lengths"] for w in windows]) * lam
    angles = np.concatenate([w["angles"] for w in windows])
    return PlpReference(phi3, se, F, tuple(windows), lengths, angles)


def run_plp_sanity(config: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    seed, lam, w = config.seed, config.lam, config.workers
    metrics = []
    files = {}

    # hitting counts of a unit disk
    hits = np.array(run_replicates(_job_hits, (seed, lam), config.hit_replicates, w, chunk=5000))
    ref = poisson_pmf(2.0 * lam * HIT_RADIUS)
    emp = DiscreteDistribution.from_counts(hits)
    tv = tv_distance(emp, ref)
    metrics.append(Metric("hits.tv", tv, 0.0, "formula", "TV to Poisson(2 lam R) < 0.02", tv < 0.02,
                          detail={"mean": float(hits.mean()), "expected": 2.0 * lam * HIT_RADIUS,
                                  "replicates": len(hits)}))
    if lam > 0:
        gof = chi_square_gof(hits, ref, seed=seed)
        metrics.append(Metric("hits.chi2_p", gof.p_value, None, "formula", "p > 1e-3 (diagnostic)",
                              bool(gof.passed), gating=False, detail={"statistic": gof.statistic,
                                                                      "dof": gof.dof}))
    files["hits.csv"] = _csv(["k", "count"], enumerate(np.bincount(hits)))

    # crossings with the x-axis
    ax = np.array(run_replicates(_job_axis, (seed, lam), config.axis_replicates, w, chunk=250))
    length = 2.0 * AXIS_HALF_WIDTH * len(ax)
    est = ax.sum() / length
    expect = 2.0 * lam / math.pi
    metrics.append(Metric("axis.intensity", est, expect, "formula", "within 2%", _within(est, expect, 0.02),
                          stderr=math.sqrt(ax.sum()) / length))

    # crossing counts for three opposite arc pairs
    pairs = opposite_pairs(6, 1.0)
    counts = np.array(run_replicates(_job_pairs, (seed, lam, pairs), config.pair_replicates, w,
                                     chunk=5000)).reshape(-1, len(pairs))
    for p, pair in enumerate(pairs):
        beta = lam * beta_crofton(pair)
        tvp = tv_distance(DiscreteDistribution.from_counts(counts[:, p]), poisson_pmf(beta))
        metrics.append(Metric(f"pairs.tv[{p}]", tvp, 0.0, "formula", "TV to Poisson(lam beta) < 0.02",
                              tvp < 0.02, detail={"beta": beta, "mean": float(counts[:, p].mean())}))
    for p in range(len(pairs)):
        for q in range(p + 1, len(pairs)):
            if counts[:, p].std() > 0 and counts[:, q].std() > 0:
                r = float(np.corrcoef(counts[:, p], counts[:, q])[0, 1])
            else:
                r = 0.0
            metrics.append(Metric(f"pairs.corr[{p},{q}]", r, 0.0, "formula", "|rho| < 0.02", abs(r) < 0.02))
    files["pair_counts.csv"] = _csv(["count"] + [f"n{p}" for p in range(len(pairs))],
                                    ([k] + [int(np.count_nonzero(counts[:, p] == k)) for p in range(len(pairs))]
                                     for k in range(int(counts.max()) + 1 if counts.size else 1)))

    # the beta identities
    part = partition_pairs(64, 1.0)
    total = sum(beta_crofton(p) for p in part)
    metrics.append(Metric("beta.partition_sum", total, 2.0, "oracle", "in [1.98, 2]",
                          1.98 <= total <= 2.0 + 1e-12))
    lin = 0.0
    for pair in (pairs[0], part[5], part[100]):
        b1 = beta_integral(pair)
        for c in (0.5, 2.0, 10.0):
            lin = max(lin, abs(beta_integral(pair.scaled(c)) - c * b1))
    metrics.append(Metric("beta.linearity", lin, 0.0, "exact", "|beta(c pair) - c beta| < 1e-6", lin < 1e-6))

    # vertices in the unit square
    vc = np.array(run_replicates(_job_vertex, (seed, lam), config.vertex_replicates, w, chunk=2000))
    ev = float(vc.mean())
    metrics.append(Metric("vertex.mean_unit_square", ev, lam ** 2 / math.pi, "formula", "within 3%",
                          _within(ev, lam ** 2 / math.pi, 0.03), stderr=float(vc.std() / math.sqrt(len(vc)))))
    files["vertex_counts.csv"] = _csv(["k", "count"], enumerate(np.bincount(vc)))

    # window densities and k-gon fractions
    n = config.half_width
    R = config.replicates[0]
    ref3 = plp_reference(seed, lam, n, config.pad, R, config.large_half_width, w)
    wins = ref3.windows
    area = (2.0 * n) ** 2
    V = np.array([c["V"] for c in wins], dtype=float)
    F = np.array([c["F"] for c in wins])
    dens = lam ** 2 / math.pi
    metrics.append(Metric("window.V_density", V.mean() / area, dens, "formula", "within 5%",
                          _within(V.mean() / area, dens, 0.05), stderr=float(V.std(ddof=1) / area / math.sqrt(R)) if R > 1 else None))
    metrics.append(Metric("window.F_density", F.mean() / area, dens, "formula", "within 5%",
                          _within(F.mean() / area, dens, 0.05), stderr=float(F.std(ddof=1) / area / math.sqrt(R)) if R > 1 else None))
    euler_ok = all(c["euler"] for c in wins)
    metrics.append(Metric("window.euler", float(euler_ok), 1.0, "exact", "V - E + F = 1 + C on every build",
                          euler_ok))
    kw = np.sum([c["k_weighted"] for c in wins], axis=0)
    tri = float(kw[0] / F.sum()) if F.sum() > 0 else math.nan
    ok7 = abs(tri - ref3.phi3) <= 0.01 if lam > 0 else True
    metrics.append(Metric("window.triangle_fraction", tri, ref3.phi3, "oracle", "within 0.01 of phi3*", ok7,
                          detail={"faces": float(F.sum())}))
    metrics.append(Metric("phi3.large_window", ref3.phi3, TRIANGLE_LIMIT, "formula",
                          "within 4 standard errors of 2 - pi^2/6 (diagnostic)",
                          bool(abs(ref3.phi3 - TRIANGLE_LIMIT) <= 4 * ref3.phi3_stderr) if lam > 0 else True,
                          stderr=ref3.phi3_stderr, gating=False, detail={"faces": ref3.phi3_faces}))
    files["raw.csv"] = _csv(["replicate", "lines", "V", "F_weighted", "flags"] + [f"k{k}" for k in range(3, MAX_K + 1)],
                            ([i, c["lines"], c["V"], c["F"], c["flags"]] + list(c["k_weighted"])
                             for i, c in enumerate(wins)))
    files["edge_census.csv"] = _csv(["bin_lo", "bin_hi", "edges", "angle_lo", "angle_hi", "angles"],
                                    _census_rows(ref3))
    if wins and "sample" in wins[0]:
        files["lines.csv"] = lines_to_csv([(0, wins[0]["sample"])])
    return _report(config, metrics, files, t0)


UNIT_BINS = np.concatenate([np.arange(0.0, 10.0 + 1e-9, 0.5), [np.inf]])


def _census_rows(ref: PlpReference):
    sh = np.histogram(ref.lengths, bins=UNIT_BINS)[0]
    ah = ref.angle_hist()
    for i in range(max(len(sh), len(ah))):
        s = (UNIT_BINS[i], UNIT_BINS[i + 1], int(sh[i])) if i < len(sh) else ("", "", "")
        a = (ANGLE_BINS[i], ANGLE_BINS[i + 1], int(ah[i])) if i < len(ah) else ("", "", "")
        yield (*s, *a)


# --- local convergence and two-point ---------------------------------------------------

def _job_local(args, lo, hi):
    seed, T, alpha, center, center2, pairs = args
    S = surface()
    x = HPoint(*center)
    out = []
    for i in range(lo, hi):
        tr = random_trace(S, T, replicate_rng(seed, trace_stream(T), i))
        rec = disk_crossings(tr, x, alpha, S)
        row = {"n": len(rec.chords), "incomplete": rec.incomplete,
               "directed": crossing_counts(rec.chords, pairs, i).directed.ravel(),
               "entries": rec.entry_times, "exits": rec.exit_times, "arcs": len(tr)}
        if center2 is not None:
            d = entry_time_diagnostics(tr, x, alpha, HPoint(*center2), S)
            rec2 = disk_crossings(tr, HPoint(*center2), alpha, S)
            row["n2"] = len(rec2.chords)
            row["double"] = d.double_hits
            row["first_entry"] = d.first_entry
            row["gaps"] = d.gaps
        out.append(row)
    return out


def _directed_tv(counts: np.ndarray, mean: float) -> float:
    return tv_distance(DiscreteDistribution.from_counts(counts), poisson_pmf(mean))


def run_local_convergence(config: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    S = surface()
    pairs = config.arc_pairs()
    kappa = S.kappa
    metrics, rows = [], []
    mean_tv = []
    files = {}
    target = 2.0 * kappa * config.alpha
    for k, T in enumerate(config.T):
        n = config.replicates_for(k)
        recs = run_replicates(_job_local, (config.seed, T, config.alpha, config.center, None, pairs),
                              n, config.workers, chunk=100)
        N = np.array([r["n"] for r in recs])
        D = np.array([r["directed"] for r in recs]).reshape(n, 2 * len(pairs))
        last = k == len(config.T) - 1
        m = float(N.mean())
        metrics.append(Metric(f"T={T:g}.chord_mean", m, target, "formula", "within 5% of 2 kappa alpha",
                              _within(m, target, 0.05), stderr=float(N.std() / math.sqrt(n)), gating=last,
                              detail={"incomplete": int(sum(r["incomplete"] for r in recs))}))
        tvs = []
        for p, pair in enumerate(pairs):
            mu = kappa * beta_crofton(pair) / 2.0
            for d in range(2):
                tv = _directed_tv(D[:, 2 * p + d], mu)
                tvs.append(tv)
                metrics.append(Metric(f"T={T:g}.tv[{p}{'ab'[d]}]", tv, 0.0, "formula",
                                      "TV to Poisson(kappa beta / 2) < 0.05", tv < 0.05, gating=last,
                                      detail={"mean": float(D[:, 2 * p + d].mean()), "expected": mu}))
        mean_tv.append(float(np.mean(tvs)) if tvs else math.nan)
        if len(pairs) > 1 and n >= 3:
            U = D[:, 0::2] + D[:, 1::2]
            worst_r, worst_p = 0.0, 1.0
            for p in range(len(pairs)):
                for q in range(p + 1, len(pairs)):
                    rep = independence_test(U[:, p], U[:, q], seed=config.seed)
                    worst_r = max(worst_r, abs(rep.extra["correlation"]))
                    worst_p = min(worst_p, rep.p_value)
            metrics.append(Metric(f"T={T:g}.pair_independence", worst_r, 0.0, "formula",
                                  "max |rho| across pairs (diagnostic)", True, gating=False,
                                  detail={"min_p": worst_p}))
        for i, r in enumerate(recs):
            rows.append([T, i, r["n"], r["incomplete"]] + list(r["directed"]))
    if len(config.T) > 1:
        dec = all(a > b for a, b in zip(mean_tv, mean_tv[1:]))
        metrics.append(Metric("tv_trend", mean_tv[-1], 0.0, "oracle",
                              "mean directed TV strictly decreasing in T", dec,
                              detail={"T": list(config.T), "mean_tv": mean_tv}))
    header = ["T", "replicate", "chords", "incomplete"] + [f"p{p}{d}" for p in range(len(pairs)) for d in "ab"]
    files["raw.csv"] = _csv(header, rows)
    return _report(config, metrics, files, t0)


def run_two_point(config: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    S = surface()
    metrics, rows = [], []
    c2 = config.second_center()
    target = 2.0 * S.kappa * config.alpha
    for k, T in enumerate(config.T):
        n = config.replicates_for(k)
        recs = run_replicates(_job_local, (config.seed, T, config.alpha, config.center, (c2.x, c2.y), []),
                              n, config.workers, chunk=100)
        N = np.array([r["n"] for r in recs])
        N2 = np.array([r["n2"] for r in recs])
        dh = np.array([r["double"] for r in recs])
        for name, v in (("N", N), ("N2", N2)):
            tv = _directed_tv(v, target)
            metrics.append(Metric(f"T={T:g}.{name}.tv", tv, 0.0, "formula", "TV to Poisson(2 kappa alpha) < 0.05",
                                  tv < 0.05, detail={"mean": float(v.mean()), "expected": target}))
        if n >= 3:
            ind = independence_test(N, N2, seed=config.seed)
            r = ind.extra["correlation"]
            metrics.append(Metric(f"T={T:g}.corr", r, 0.0, "oracle", "|corr(N, N')| < 0.05", abs(r) < 0.05,
                                  stderr=ind.extra["correlation_se"],
                                  detail={"chi2": ind.statistic, "p": ind.p_value, "dof": ind.dof}))
        metrics.append(Metric(f"T={T:g}.double_hits", float(dh.mean()), 0.0, "oracle", "mean < 0.01 per trace",
                              float(dh.mean()) < 0.01))
        crossing = float(np.mean([T / r["arcs"] for r in recs]))
        horizon = math.log(T) ** 3 * crossing
        quick = float(np.mean([bool(len(r["gaps"]) and r["gaps"].min() < horizon) for r in recs]))
        metrics.append(Metric(f"T={T:g}.quick_returns", quick, None, "oracle",
                              "fraction with a return gap below (log T)^3 mean crossing length (diagnostic)",
                              True, gating=False, detail={"horizon": horizon}))
        for i, r in enumerate(recs):
            g = r["gaps"]
            rows.append([T, i, r["n"], r["n2"], r["double"], r["first_entry"],
                         float(g.min()) if len(g) else math.inf])
    files = {"raw.csv": _csv(["T", "replicate", "N", "N2", "double_hits", "first_entry", "min_gap"], rows)}
    return _report(config, metrics, files, t0)


# --- global statistics ----------------------------------------------------------------

def _job_global(args, lo, hi):
    seed, T = args
    S = surface()
    out = []
    for i in range(lo, hi):
        tr = random_trace(S, T, replicate_rng(seed, trace_stream(T), i))
        inter = self_intersections(tr)
        smap = surface_map_from_trace(tr, inter)
        cen = surface_census(smap)
        keep = cen.interior_mask()
        close = inter.close_pairs()
        out.append({
            "v": smap.n_crossings, "e": smap.n_segments, "f": smap.n_faces,
            "euler": smap.euler_characteristic(),
            "tangential": inter.n_tangential,
            "min_sep": inter.min_separation(),
            "close_pairs": [(int(inter.arc_i[a]), int(inter.arc_j[a]), int(inter.arc_i[b]), int(inter.arc_j[b]))
                            for a, b in close],
            "multiple": inter.multiple_points(),
            "area_error": abs(float(smap.face_areas().sum()) - 4.0 * math.pi),
            "k": np.bincount(np.minimum(cen.face_k[keep], MAX_K), minlength=MAX_K + 1)[3:],
            "side_hist": np.histogram(cen.edge_lengths * T, bins=SIDE_BINS)[0],
            "angle_hist": np.histogram(cen.vertex_angles, bins=ANGLE_BINS)[0],
        })
    return out


def _histogram_metric(name: str, hist: np.ndarray, ref_hist: np.ndarray, seed: int, rule: str,
                      gating: bool) -> Metric:
    """Two-sample chi-square against the PLP census; too few counts is a recorded failure."""
    try:
        chi = chi_square_two_sample(hist, ref_hist, seed=seed, name=name)
    except InsufficientDataError as exc:
        return Metric(name, None, 1e-3, "oracle", rule, False, gating=gating, detail={"error": str(exc)})
    return Metric(name, chi.p_value, 1e-3, "oracle", rule, bool(chi.passed), gating=gating,
                  detail={"statistic": chi.statistic, "dof": chi.dof, **chi.extra})


def run_global(config: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    S = surface()
    kappa = S.kappa
    metrics, rows = [], []
    ref = plp_reference(config.seed, 1.0, 25.0, config.pad, 20, config.large_half_width, config.workers)
    files = {}
    for k, T in enumerate(config.T):
        n = config.replicates_for(k)
        recs = run_replicates(_job_global, (config.seed, T), n, config.workers, chunk=10)
        v = np.array([r["v"] for r in recs], dtype=float)
        e = np.array([r["e"] for r in recs], dtype=float)
        f = np.array([r["f"] for r in recs], dtype=float)
        T2 = T * T
        for name, x, ref_v in (("v", v, kappa / math.pi), ("e", e, 2 * kappa / math.pi), ("f", f, kappa / math.pi)):
            est = float((x / T2).mean())
            metrics.append(Metric(f"T={T:g}.{name}_density", est, ref_v, "formula", "within 10%",
                                  _within(est, ref_v, 0.10), stderr=float((x / T2).std() / math.sqrt(n))))
        euler = [r["euler"] for r in recs]
        metrics.append(Metric(f"T={T:g}.euler", float(all(x == -2 for x in euler)), 1.0, "exact",
                              "v - e + f = -2 on every trace", all(x == -2 for x in euler),
                              detail={"values": sorted(set(euler))}))
        gap = float(np.abs(e - 2 * v).max())
        metrics.append(Metric(f"T={T:g}.edge_vertex", gap, 2.0, "formula", "|e - 2v| <= 2 on every trace", gap <= 2))
        mult = int(sum(r["multiple"] for r in recs))
        tang = int(sum(r["tangential"] for r in recs))
        metrics.append(Metric(f"T={T:g}.triple_points", float(mult + tang), 0.0, "exact",
                              "no concurrent strands or tangencies within 1e-7", mult + tang == 0,
                              detail={"multiple": mult, "tangential": tang}))
        ms = [r["min_sep"] for r in recs]
        below = [(i, r["min_sep"], r["close_pairs"]) for i, r in enumerate(recs) if r["min_sep"] <= 1e-7]
        metrics.append(Metric(f"T={T:g}.min_vertex_separation", float(min(ms)), 1e-7, "exact",
                              "smallest distance between distinct vertices (logged, diagnostic)",
                              not below, gating=False, detail={"below_1e-7": below}))
        bound = T2 / S.injectivity_radius ** 2
        metrics.append(Metric(f"T={T:g}.v_bound", float(v.max()), bound, "formula", "v <= T^2 / rho^2",
                              bool(v.max() <= bound)))
        aerr = max(r["area_error"] for r in recs)
        metrics.append(Metric(f"T={T:g}.face_area_total", aerr, 0.0, "exact",
                              "Gauss-Bonnet face areas sum to 4 pi within 1e-6", aerr < 1e-6))
        kc = np.sum([r["k"] for r in recs], axis=0)
        tri = float(kc[0] / kc.sum()) if kc.sum() else math.nan
        metrics.append(Metric(f"T={T:g}.triangle_fraction", tri, ref.phi3, "oracle", "within 0.03 of phi3*",
                              abs(tri - ref.phi3) <= 0.03, detail={"faces": int(kc.sum()),
                                                                   "k_counts": kc.tolist()}))
        sh = np.sum([r["side_hist"] for r in recs], axis=0)
        ref_sh = ref.side_hist(kappa)
        metrics.append(_histogram_metric(f"T={T:g}.side_length_chi2", sh, ref_sh, config.seed,
                                         "two-sample chi-square p > 1e-3 against the PLP census", True))
        ah = np.sum([r["angle_hist"] for r in recs], axis=0)
        metrics.append(_histogram_metric(f"T={T:g}.angle_chi2", ah, ref.angle_hist(), config.seed,
                                         "two-sample chi-square p > 1e-3 against the PLP census (diagnostic)",
                                         False))
        for i, r in enumerate(recs):
            rows.append([T, i, r["v"], r["e"], r["f"], r["euler"], r["tangential"], r["multiple"],
                         r["min_sep"], r["area_error"]] + list(r["k"]) + list(r["side_hist"]))
        files[f"hist_T{T:g}.csv"] = _csv(["bin_lo", "bin_hi", "surface", "plp"],
                                          zip(SIDE_BINS[:-1], SIDE_BINS[1:], sh, ref_sh))
    header = (["T", "replicate", "v", "e", "f", "euler", "tangential", "multiple", "min_sep", "area_error"]
              + [f"k{k}" for k in range(3, MAX_K + 1)] + [f"s{b}" for b in range(len(SIDE_BINS) - 1)])
    files["raw.csv"] = _csv(header, rows)
    return _report(config, metrics, files, t0)


def _job_selfint(args, lo, hi):
    seed, T = args
    S = surface()
    out = []
    for i in range(lo, hi):
        tr = random_trace(S, T, replicate_rng(seed, trace_stream(T), i))
        out.append(len(self_intersections(tr)))
    return out


def run_selfint(config: ExperimentConfig) -> ExperimentReport:
    """Self-intersection density sweep over the configured lengths."""
    t0 = time.perf_counter()
    S = surface()
    ref = S.kappa / math.pi
    metrics, rows = [], []
    for k, T in enumerate(config.T):
        n = config.replicates_for(k)
        v = np.array(run_replicates(_job_selfint, (config.seed, T), n, config.workers, chunk=10), dtype=float)
        d = v / (T * T)
        metrics.append(Metric(f"T={T:g}.v_density", float(d.mean()), ref, "formula", "within 10% (diagnostic)",
                              _within(float(d.mean()), ref, 0.10), stderr=float(d.std() / math.sqrt(n)),
                              gating=False))
        bound = T * T / S.injectivity_radius ** 2
        metrics.append(Metric(f"T={T:g}.v_bound", float(v.max()), bound, "formula", "v <= T^2 / rho^2",
                              bool(v.max() <= bound)))
        rows.extend([T, i, int(x)] for i, x in enumerate(v))
    files = {"raw.csv": _csv(["T", "replicate", "v"], rows)}
    return _report(config, metrics, files, t0)


RUNNERS = {
    "plp-sanity": run_plp_sanity,
    "local": run_local_convergence,
    "two-point": run_two_point,
    "global": run_global,
    "selfint": run_selfint,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[config.experiment](config)


# --- plots -----------------------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plots(result_dir) -> list[Path]:
    """Render the SVG figures for a saved run; returns the written paths."""
    from .plp import lines_from_csv
    from .svgplot import histogram_svg, trend_svg
    from .tessellation import arrangement_svg

    d = Path(result_dir)
    rep_path = d / "report.json"
    raw_path = d / "raw.csv"
    if not rep_path.exists() or not raw_path.exists():
        raise MissingDataError(f"no report.json/raw.csv in {d}")
    report = ExperimentReport.from_json(rep_path.read_text())
    raw = _read_csv(raw_path)
    out = {}
    exp = report.experiment
    if exp == "plp-sanity":
        hits = _read_csv(d / "hits.csv") if (d / "hits.csv").exists() else []
        counts = [float(r["count"]) for r in hits]
        total = sum(counts) or 1.0
        mean = report.metric("hits.tv").detail.get("expected", 0.0)
        ref = poisson_pmf(mean, max(len(counts) - 1, 0)).probs[:len(counts)]
        out["hits.svg"] = histogram_svg([c / total for c in counts], ref, title="lines hitting a unit disk")
        if (d / "lines.csv").exists():
            lam = float(report.config.get("lam", "1.0"))
            hw = float(report.config.get("half_width", "25.0")) + float(report.config.get("pad", "15.0"))
            win = SquareWindow(hw, (0.0, 0.0))
            samples = lines_from_csv((d / "lines.csv").read_text(), lam, win)
            if samples:
                s = samples[min(samples)]
                out["arrangement.svg"] = arrangement_svg(build_arrangement(s, win, on_degenerate="flag"))
    elif exp == "local":
        Ts = sorted({float(r["T"]) for r in raw})
        tv = {}
        for m in report.metrics:
            if ".tv[" in m.name:
                T = float(m.name.split(".")[0][2:])
                tv.setdefault(m.name.split(".", 1)[1], {})[T] = m.estimate
        out["tv_trend.svg"] = trend_svg(Ts, {k: [v.get(T, math.nan) for T in Ts] for k, v in sorted(tv.items())},
                                        title="directed TV to the Poisson limit")
        if Ts:
            last = [r for r in raw if float(r["T"]) == Ts[-1]]
            n = np.array([int(r["chords"]) for r in last])
            h = np.bincount(n) / max(len(n), 1)
            mean = report.metric(f"T={Ts[-1]:g}.chord_mean").reference
            out["chords.svg"] = histogram_svg(h, poisson_pmf(mean, len(h) - 1).probs[:len(h)],
                                              title=f"chords per trace, T={Ts[-1]:g}")
        else:
            out["chords.svg"] = histogram_svg([], title="chords per trace")
    elif exp == "two-point":
        n = np.array([int(r["N"]) for r in raw], dtype=np.int64)
        h = np.bincount(n) / max(len(n), 1) if len(n) else np.zeros(0)
        out["two_point.svg"] = histogram_svg(h, title="chords in the first disk")
    elif exp == "global":
        Ts = sorted({float(r["T"]) for r in raw})
        for T in Ts:
            hist = _read_csv(d / f"hist_T{T:g}.csv")
            a = np.array([float(r["surface"]) for r in hist])
            b = np.array([float(r["plp"]) for r in hist])
            out[f"sides_T{T:g}.svg"] = histogram_svg(a / max(a.sum(), 1), b / max(b.sum(), 1),
                                                     title=f"scaled side lengths, T={T:g}")
        if not Ts:
            out["sides.svg"] = histogram_svg([], title="scaled side lengths")
    elif exp == "selfint":
        Ts = sorted({float(r["T"]) for r in raw})
        dens = [np.mean([int(r["v"]) / (T * T) for r in raw if float(r["T"]) == T]) for T in Ts]
        out["selfint.svg"] = trend_svg(Ts, {"v/T^2": dens}, title="self-intersection density")
    paths = []
    for name, text in sorted(out.items()):
        p = d / name
        p.write_text(text)
        paths.append(p)
    return paths
