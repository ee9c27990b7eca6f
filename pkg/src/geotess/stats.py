"""Discrete laws, distances between them, and the goodness-of-fit tests.

Everything here is exact on finite supports: Poisson pmfs come from a
log-space recurrence, Bernoulli sums and multinomial occupancies from
convolution dynamic programs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special
from scipy.stats import chi2_contingency

PROB_TOL = 1e-12
TAIL_CUTOFF = 1e-12


class InsufficientDataError(ValueError):
    pass


class StateSpaceError(ValueError):
    """The exact joint table would exceed the configured cell cap."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """``probs[k] = P(X = k)`` for ``k <= k_max`` plus the mass beyond."""

    probs: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("probs must be a non-empty vector")
        if (p < 0).any() or self.tail < 0:
            raise ValueError("probabilities must be nonnegative")
        total = p.sum() + self.tail
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"total mass {total!r} is not 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail", float(self.tail))

    @property
    def k_max(self) -> int:
        return len(self.probs) - 1

    def mean(self) -> float:
        """Mean of the explicit part (exact when ``tail`` is zero)."""
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def folded(self, k_max: int) -> np.ndarray:
        """Vector of length ``k_max + 2``: masses at 0..k_max then everything above."""
        out = np.zeros(k_max + 2)
        n = min(len(self.probs), k_max + 1)
        out[:n] = self.probs[:n]
        out[k_max + 1] = self.probs[n:].sum() + self.tail
        return out

    @classmethod
    def from_counts(cls, values) -> "DiscreteDistribution":
        """Empirical law of a sample of nonnegative integers."""
        v = np.asarray(values, dtype=np.int64)
        if len(v) == 0:
            raise InsufficientDataError("empty sample")
        if (v < 0).any():
            raise ValueError("counts must be nonnegative")
        h = np.bincount(v).astype(float)
        return cls(h / h.sum())


def poisson_pmf(mean: float, k_max: Optional[int] = None) -> DiscreteDistribution:
    """Poisson law truncated at ``k_max`` with the remaining mass as tail.

    The pmf is built outward from the mode in log space, which stays
    accurate for means up to 1e3 where ``exp(-mean)`` underflows.
    """
    if mean < 0:
        raise ValueError("mean must be nonnegative")
    if mean == 0:
        return DiscreteDistribution(np.array([1.0]), 0.0)
    if k_max is None:
        k_max = int(math.ceil(mean + 12.0 * math.sqrt(mean) + 30.0))
        while special.pdtrc(k_max, mean) > TAIL_CUTOFF:
            k_max += 10
    mode = min(int(math.floor(mean)), k_max)
    logp = np.empty(k_max + 1)
    logp[mode] = mode * math.log(mean) - mean - math.lgamma(mode + 1)
    for k in range(mode + 1, k_max + 1):
        logp[k] = logp[k - 1] + math.log(mean / k)
    for k in range(mode - 1, -1, -1):
        logp[k] = logp[k + 1] - math.log(mean / (k + 1))
    probs = np.exp(logp)
    return DiscreteDistribution(probs, float(special.pdtrc(k_max, mean)))


def bernoulli_sum_distribution(p: Sequence[float]) -> DiscreteDistribution:
    """Exact law of a sum of independent Bernoulli(p_i) variables."""
    p = np.asarray(p, dtype=float)
    if ((p < 0) | (p > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    dist = np.zeros(len(p) + 1)
    dist[0] = 1.0
    for i, pi in enumerate(p):
        # after i trials only entries 0..i can be nonzero
        head = dist[: i + 2].copy()
        dist[1: i + 2] = head[1:] * (1.0 - pi) + head[:-1] * pi
        dist[0] = head[0] * (1.0 - pi)
    return DiscreteDistribution(_renorm(dist))


def _renorm(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def multinomial_occupancy_distribution(p, max_cells: int = 10**7) -> np.ndarray:
    """Exact joint law of the occupancy counts ``(T_1, ..., T_K)``.

    ``p`` has one row per trial holding the probabilities of categories
    ``0..K``, where category 0 means the trial lands nowhere. Returns a
    ``K``-dimensional table ``t[k1, ..., kK]``.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n, width = p.shape
    k = width - 1
    if k < 1:
        raise ValueError("need at least one counted category")
    if (p < 0).any() or np.abs(p.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValueError("each trial's probabilities must sum to 1")
    if (n + 1) ** k > max_cells:
        raise StateSpaceError(f"{(n + 1) ** k} cells exceed the cap {max_cells}")
    table = np.zeros((n + 1,) * k)
    table[(0,) * k] = 1.0
    for i in range(n):
        view = tuple(slice(0, i + 2) for _ in range(k))
        cur = table[view].copy()
        new = cur * p[i, 0]
        for j in range(k):
            src = [slice(0, i + 1)] * k
            dst = [slice(0, i + 1)] * k
            dst[j] = slice(1, i + 2)
            new[tuple(dst)] += cur[tuple(src)] * p[i, j + 1]
        table[view] = new
    return table / table.sum()


def product_poisson_table(means: Sequence[float], shape: Sequence[int]) -> np.ndarray:
    """Product of independent Poisson pmfs evaluated on a box of the given shape."""
    out = np.ones(())
    for m, size in zip(means, shape):
        pm = poisson_pmf(m).folded(size)[:size]
        out = np.multiply.outer(out, pm)
    return out


def tv_distance(d1: DiscreteDistribution, d2: DiscreteDistribution) -> float:
    return 0.5 * l1_distance(d1, d2)


def l1_distance(d1: DiscreteDistribution, d2: DiscreteDistribution) -> float:
    k = max(d1.k_max, d2.k_max)
    return float(np.abs(d1.folded(k) - d2.folded(k)).sum())


# --- tests ---------------------------------------------------------------

@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    p_value: Optional[float] = None
    distance: Optional[float] = None
    dof: Optional[int] = None
    sample_size: Optional[int] = None
    threshold: Optional[float] = None
    passed: Optional[bool] = None
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")
        if self.distance is not None and self.distance < 0:
            raise ValueError("negative distance")

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        return cls(**json.loads(text))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _pool(observed: np.ndarray, expected: np.ndarray, min_expected: float):
    """Merge adjacent bins left to right until each has ``min_expected``."""
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    return np.array(obs_out), np.array(exp_out)


def chi_square_gof(counts, reference: DiscreteDistribution, min_expected: float = 5.0,
                   alpha: float = 1e-3, name: str = "chi_square_gof",
                   seed: Optional[int] = None) -> TestReport:
    """Pooled Pearson test of a sample of nonnegative integers against ``reference``."""
    v = np.asarray(counts, dtype=np.int64)
    n = len(v)
    if n < 50:
        raise InsufficientDataError(f"need at least 50 observations, got {n}")
    k = max(int(v.max()), reference.k_max)
    observed = np.bincount(v, minlength=k + 2).astype(float)[: k + 2]
    expected = n * reference.folded(k)
    obs, exp = _pool(observed, expected, min_expected)
    if len(obs) < 2:
        raise InsufficientDataError("fewer than two bins after pooling")
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(obs) - 1
    p = float(special.gammaincc(dof / 2.0, stat / 2.0))
    return TestReport(name, stat, p_value=p, dof=dof, sample_size=n, threshold=alpha,
                      passed=p > alpha, seed=seed, extra={"bins": len(obs)})


def chi_square_two_sample(hist_a, hist_b, min_expected: float = 5.0, alpha: float = 1e-3,
                          name: str = "chi_square_two_sample",
                          seed: Optional[int] = None) -> TestReport:
    """Homogeneity test of two histograms on shared bins, with pooling."""
    a = np.asarray(hist_a, dtype=float)
    b = np.asarray(hist_b, dtype=float)
    na, nb = a.sum(), b.sum()
    if na < 50 or nb < 50:
        raise InsufficientDataError("each sample needs at least 50 observations")
    # pool on the smaller of the two expected counts per bin
    total = a + b
    exp_small = total * min(na, nb) / (na + nb)
    groups, acc = [], []
    e_acc = 0.0
    for i, e in enumerate(exp_small):
        acc.append(i)
        e_acc += e
        if e_acc >= min_expected:
            groups.append(acc)
            acc, e_acc = [], 0.0
    if acc:
        if groups:
            groups[-1].extend(acc)
        else:
            groups.append(acc)
    if len(groups) < 2:
        raise InsufficientDataError("fewer than two bins after pooling")
    table = np.array([[a[g].sum() for g in groups], [b[g].sum() for g in groups]])
    stat, p, dof, _ = chi2_contingency(table, correction=False)
    return TestReport(name, float(stat), p_value=float(p), dof=int(dof),
                      sample_size=int(na + nb), threshold=alpha, passed=bool(p > alpha),
                      seed=seed, extra={"n_a": int(na), "n_b": int(nb), "bins": len(groups)})


def _cap_levels(x: np.ndarray, min_count: int) -> np.ndarray:
    """Merge the upper values of ``x`` into one level holding ``min_count`` points."""
    x = np.asarray(x, dtype=np.int64)
    values = np.unique(x)
    cap = values[-1]
    for c in values[::-1]:
        if (x >= c).sum() >= min_count:
            cap = c
            break
    return np.minimum(x, cap)


def independence_test(n1, n2, alpha: float = 1e-3, name: str = "independence",
                      seed: Optional[int] = None, min_level: int = 20) -> TestReport:
    """Pearson correlation and a pooled contingency chi-square for paired counts."""
    x = np.asarray(n1, dtype=float)
    y = np.asarray(n2, dtype=float)
    n = len(x)
    if n != len(y):
        raise ValueError("paired samples must have equal length")
    if n < 3:
        raise InsufficientDataError("need at least three pairs")
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        r = 1.0 if np.array_equal(x, y) else 0.0
    else:
        r = float(np.clip(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy), -1.0, 1.0))
    se = 1.0 / math.sqrt(n)
    xc = _cap_levels(x, min_level)
    yc = _cap_levels(y, min_level)
    ux, ix = np.unique(xc, return_inverse=True)
    uy, iy = np.unique(yc, return_inverse=True)
    extra = {"correlation": r, "correlation_se": se, "levels": [len(ux), len(uy)]}
    if len(ux) < 2 or len(uy) < 2:
        stat, p, dof = 0.0, 1.0, 0
        extra["contingency"] = "degenerate"
    else:
        table = np.zeros((len(ux), len(uy)))
        np.add.at(table, (ix, iy), 1.0)
        stat, p, dof, _ = chi2_contingency(table, correction=False)
    return TestReport(name, float(stat), p_value=float(p), dof=int(dof), sample_size=n,
                      threshold=alpha, passed=bool(p > alpha), seed=seed, extra=extra)
