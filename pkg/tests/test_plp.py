import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from geotess.plp import (INF_DISTANCE, ArcPair, ChordConfiguration, DiskWindow, LineSample,
                         SquareWindow, apply_isometry_to_sample, axis_crossings, beta_crofton,
                         beta_integral, chords_from_lines, chords_to_csv, config_distance,
                         crossing_counts, lines_from_chords, lines_from_csv, lines_to_csv,
                         opposite_pairs, pairs_compatible, partition_pairs, psi, sample_plp)
from geotess.stats import DiscreteDistribution, chi_square_two_sample, poisson_pmf, tv_distance

TWO_PI = 2 * math.pi


def strip_monte_carlo(pair: ArcPair, n: int, rng):
    """beta from uniform (r, theta) on the strip: beta = 2 alpha P(line crosses A and B)."""
    a = pair.alpha
    r = rng.uniform(-a, a, n)
    th = rng.uniform(0, math.pi, n)
    phi = np.arccos(r / a)
    y, z = np.mod(th + phi, TWO_PI), np.mod(th - phi, TWO_PI)
    hit = (pair.contains_a(y) & pair.contains_b(z)) | (pair.contains_b(y) & pair.contains_a(z))
    p = hit.mean()
    return 2 * a * p, 2 * a * math.sqrt(p * (1 - p) / n)


def psi_grid(theta: float, pair: ArcPair, m: int = 10_000) -> float:
    a = pair.alpha
    r = -a + (np.arange(m) + 0.5) * (2 * a / m)
    phi = np.arccos(r / a)
    y, z = np.mod(theta + phi, TWO_PI), np.mod(theta - phi, TWO_PI)
    hit = (pair.contains_a(y) & pair.contains_b(z)) | (pair.contains_b(y) & pair.contains_a(z))
    return hit.sum() * 2 * a / m


@st.composite
def arc_pairs(draw, alpha=None):
    a0 = draw(st.floats(0.0, TWO_PI, exclude_max=True))
    la = draw(st.floats(0.01, 2.5))
    gap = draw(st.floats(0.01, 1.5))
    lb = draw(st.floats(0.01, TWO_PI - la - gap - 0.01)) if TWO_PI - la - gap > 0.03 else 0.01
    b0 = a0 + la + gap
    al = alpha if alpha is not None else draw(st.floats(0.1, 20.0))
    return ArcPair(a0, a0 + la, b0, b0 + lb, al)


# --- sampling -----------------------------------------------------------------------

def test_zero_intensity_is_empty(rng):
    assert len(sample_plp(0.0, DiskWindow(1.0), rng)) == 0
    assert len(sample_plp(0.0, SquareWindow(3.0), rng)) == 0


def test_negative_intensity(rng):
    with pytest.raises(ValueError):
        sample_plp(-1.0, DiskWindow(1.0), rng)


def test_sample_invariants(rng):
    for w in (DiskWindow(2.0, (0.5, -1.0)), SquareWindow(3.0, (1.0, 2.0))):
        s = sample_plp(3.0, w, rng)
        assert ((s.theta >= 0) & (s.theta < math.pi)).all()
        p0, p1 = s.segments()
        cx, cy = w.center
        if isinstance(w, DiskWindow):
            assert np.allclose(np.hypot(p0[:, 0] - cx, p0[:, 1] - cy), w.radius)
        else:
            m0 = np.maximum(np.abs(p0[:, 0] - cx), np.abs(p0[:, 1] - cy))
            assert np.allclose(m0, w.half_width)


def test_line_sample_rejects_misses():
    with pytest.raises(ValueError):
        LineSample(np.array([2.0]), np.array([0.0]), 1.0, DiskWindow(1.0))
    with pytest.raises(ValueError):
        LineSample(np.array([0.0]), np.array([math.pi]), 1.0, DiskWindow(1.0))


def test_hitting_law_disk():
    w = DiskWindow(1.0)
    n = np.array([len(sample_plp(1.0, w, np.random.default_rng([99, i]))) for i in range(100_000)])
    assert abs(n.mean() - 2.0) < 0.015
    assert tv_distance(DiscreteDistribution.from_counts(n), poisson_pmf(2.0)) < 0.02


def test_nested_radii_means():
    rng = np.random.default_rng(5)
    counts = {0.25: [], 0.5: [], 1.0: []}
    for _ in range(20_000):
        s = sample_plp(1.0, DiskWindow(1.0), rng)
        for r in counts:
            counts[r].append(int(np.count_nonzero(np.abs(s.r) < r)))
    for r, c in counts.items():
        c = np.array(c)
        assert abs(c.mean() - 2 * r) < 3 * math.sqrt(2 * r / len(c))


def test_axis_intensity():
    w = SquareWindow(50.0)
    rng = np.random.default_rng(8)
    total = sum(len(axis_crossings(sample_plp(1.0, w, rng))) for _ in range(300))
    assert total / (300 * 100.0) == pytest.approx(2 / math.pi, rel=0.02)


# --- chords ---------------------------------------------------------------------------

def test_vertical_diameter_chord():
    s = LineSample(np.array([0.0]), np.array([0.0]), 1.0, DiskWindow(1.0))
    c = chords_from_lines(s, 1.0)
    assert sorted(c.angles[0]) == pytest.approx([math.pi / 2, 3 * math.pi / 2])


def test_line_missing_disk_dropped():
    s = LineSample(np.array([1.5]), np.array([0.3]), 1.0, DiskWindow(2.0))
    assert len(chords_from_lines(s, 1.0)) == 0


def test_chord_round_trip(rng):
    r = rng.uniform(-0.999, 0.999, 1000) * 2.0
    th = rng.uniform(0, math.pi, 1000)
    s = LineSample(r, th, 1.0, DiskWindow(2.0))
    r2, th2 = lines_from_chords(chords_from_lines(s, 2.0))
    assert ((th2 >= 0) & (th2 < math.pi)).all()
    assert np.allclose(np.abs(r2), np.abs(r), atol=1e-9)
    # the foot of the perpendicular from the center identifies the line
    foot = r * np.exp(1j * th)
    foot2 = r2 * np.exp(1j * th2)
    assert np.abs(foot - foot2).max() < 1e-9
    # a line through the center: compare normals modulo pi
    dth = np.abs(np.mod(th2 - th + math.pi / 2, math.pi) - math.pi / 2)
    assert dth.max() < 1e-9


def test_random_orientation_flags_directed(rng):
    s = sample_plp(2.0, DiskWindow(1.0), rng)
    assert chords_from_lines(s, 1.0, rng).directed


def test_chord_angles_validated():
    with pytest.raises(ValueError):
        ChordConfiguration(np.array([[0.0, 7.0]]), 1.0)


# --- beta -------------------------------------------------------------------------------

def test_beta_zero_width():
    assert beta_integral(ArcPair(0.3, 0.3, 2.0, 2.0)) == 0.0
    assert beta_crofton(ArcPair(0.3, 0.3, 2.0, 2.5)) == 0.0


def test_beta_partition_sum():
    total = sum(beta_integral(p) for p in partition_pairs(64, 1.0))
    assert 2 * 0.99 <= total <= 2.0 + 1e-9


def test_beta_matches_strip_monte_carlo():
    pair = ArcPair(-0.2, 0.2, math.pi - 0.2, math.pi + 0.2, 1.0)
    est, se = strip_monte_carlo(pair, 1_000_000, np.random.default_rng(3))
    assert abs(beta_integral(pair) - est) < 3 * se


def test_psi_matches_grid_scan(rng):
    for _ in range(20):
        a0 = rng.uniform(0, TWO_PI)
        pair = ArcPair(a0, a0 + rng.uniform(0.1, 2), a0 + 2.5, a0 + 2.5 + rng.uniform(0.1, 2), 1.3)
        theta = rng.uniform(0, math.pi)
        assert psi(theta, pair) == pytest.approx(psi_grid(theta, pair), abs=2 * 2.6 / 10_000)


@given(arc_pairs())
def test_quadrature_matches_closed_form(pair):
    assert beta_integral(pair) == pytest.approx(beta_crofton(pair), abs=1e-6)


@given(arc_pairs(alpha=1.0), st.floats(0.1, 10.0))
def test_beta_linear_in_alpha(pair, c):
    assert abs(beta_integral(pair.scaled(c)) - c * beta_integral(pair)) < 1e-6


@given(arc_pairs(), st.floats(0.0, 0.3))
def test_beta_monotone(pair, extra):
    # grow A backwards into the free gap before it
    assume(extra < (pair.a0 + TWO_PI - pair.b1) - 1e-9)
    bigger = ArcPair(pair.a0 - extra, pair.a1, pair.b0, pair.b1, pair.alpha)
    assert beta_crofton(bigger) >= beta_crofton(pair) - 1e-12
    assert beta_integral(bigger) >= beta_integral(pair) - 2e-7


def test_arc_pair_validation():
    with pytest.raises(ValueError):
        ArcPair(0.0, 2.0, 1.0, 3.0)
    with pytest.raises(ValueError):
        ArcPair(1.0, 0.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        ArcPair(0.0, 1.0, 2.0, 3.0, alpha=0.0)
    ArcPair(0.0, 1.0, 1.0, 2.0)


def test_pairs_compatible():
    assert pairs_compatible(opposite_pairs(6))
    assert not pairs_compatible([ArcPair(0, 1, 3, 4), ArcPair(0.5, 1.5, 3.5, 4.5)])


# --- counts -----------------------------------------------------------------------------

def test_counts_empty():
    t = crossing_counts(ChordConfiguration.empty(1.0), opposite_pairs(6))
    assert not t.directed.any()


def test_counts_single_chord():
    pairs = opposite_pairs(6)
    c = ChordConfiguration(np.array([[0.5, 0.5 + math.pi]]), 1.0)
    t = crossing_counts(c, pairs)
    assert t.undirected.tolist() == [1, 0, 0]
    assert t.directed[0].tolist() == [1, 0]


@given(st.lists(st.tuples(st.floats(0, TWO_PI, exclude_max=True), st.floats(0, TWO_PI, exclude_max=True)),
                max_size=30),
       arc_pairs(alpha=1.0), st.floats(0.05, 0.95))
def test_count_additivity(chords, pair, frac):
    c = ChordConfiguration(np.array(chords, dtype=float).reshape(-1, 2), 1.0)
    cut = pair.a0 + frac * (pair.a1 - pair.a0)
    p1 = ArcPair(pair.a0, cut, pair.b0, pair.b1, 1.0)
    p2 = ArcPair(cut, pair.a1, pair.b0, pair.b1, 1.0)
    t = crossing_counts(c, [pair, p1, p2])
    assert t.undirected[0] == t.undirected[1] + t.undirected[2]
    assert (t.undirected == t.directed.sum(axis=1)).all()


def test_counts_poisson_and_independent():
    pairs = opposite_pairs(6)
    w = DiskWindow(1.0)
    rng = np.random.default_rng(17)
    n = np.array([crossing_counts(chords_from_lines(sample_plp(1.0, w, rng), 1.0), pairs).undirected
                  for _ in range(30_000)])
    for p, pair in enumerate(pairs):
        assert tv_distance(DiscreteDistribution.from_counts(n[:, p]), poisson_pmf(beta_crofton(pair))) < 0.02
    r = np.corrcoef(n.T)
    assert np.abs(r[np.triu_indices(3, 1)]).max() < 3 * 3 / math.sqrt(len(n))


# --- configuration metric ---------------------------------------------------------------

def _random_config(rng, n, alpha=1.0):
    return ChordConfiguration(rng.uniform(0, TWO_PI, (n, 2)), alpha)


def test_distance_basics(rng):
    f = _random_config(rng, 5)
    assert config_distance(f, f) == 0.0
    a = ChordConfiguration(np.array([[0.0, math.pi]]), 1.0)
    b = ChordConfiguration(np.array([[0.1, math.pi]]), 1.0)
    assert config_distance(a, b) == pytest.approx(0.1)
    assert config_distance(a, _random_config(rng, 2)) == INF_DISTANCE
    swapped = ChordConfiguration(np.array([[math.pi, 0.1]]), 1.0)
    assert config_distance(a, swapped) == pytest.approx(0.1)


def _chord_cost(x, y):
    def circ(u, v):
        d = abs(u - v) % TWO_PI
        return min(d, TWO_PI - d)
    return min(circ(x[0], y[0]) + circ(x[1], y[1]), circ(x[0], y[1]) + circ(x[1], y[0]))


def test_distance_exhaustive_oracle(rng):
    for _ in range(20):
        f, g = _random_config(rng, 5), _random_config(rng, 5)
        best = min(sum(_chord_cost(f.angles[i], g.angles[p[i]]) for i in range(5))
                   for p in itertools.permutations(range(5)))
        d = config_distance(f, g)
        assert d == pytest.approx(best, abs=1e-12)
        for _ in range(50):
            p = rng.permutation(5)
            assert d <= sum(_chord_cost(f.angles[i], g.angles[p[i]]) for i in range(5)) + 1e-12


def test_distance_metric_properties(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        f, g, h = (_random_config(rng, n) for _ in range(3))
        fg, gf = config_distance(f, g), config_distance(g, f)
        assert fg == pytest.approx(gf, abs=1e-12)
        assert fg <= config_distance(f, h) + config_distance(h, g) + 1e-12


# --- isometries of samples --------------------------------------------------------------

def test_identity_transform(rng):
    s = sample_plp(3.0, DiskWindow(1.0), rng)
    t = apply_isometry_to_sample(s)
    assert np.array_equal(t.r, s.r) and np.array_equal(t.theta, s.theta)


def test_rotation_shifts_chords(rng):
    s = sample_plp(3.0, DiskWindow(1.0), rng)
    phi = 0.7
    a = chords_from_lines(s, 1.0).angles
    b = chords_from_lines(apply_isometry_to_sample(s, rotation=phi), 1.0).angles
    ra = np.sort(np.mod(a + phi, TWO_PI), axis=1)
    rb = np.sort(b, axis=1)
    key = lambda x: np.lexsort((x[:, 1], x[:, 0]))
    assert np.allclose(ra[key(ra)], rb[key(rb)], atol=1e-12)


def test_translation_preserves_count_law():
    pair = ArcPair(-0.4, 0.4, math.pi - 0.4, math.pi + 0.4, 1.0)
    big = DiskWindow(2.0)
    rng = np.random.default_rng(23)
    direct, moved = [], []
    for _ in range(20_000):
        direct.append(crossing_counts(chords_from_lines(sample_plp(1.0, DiskWindow(1.0), rng), 1.0),
                                      [pair]).undirected[0])
        s = apply_isometry_to_sample(sample_plp(1.0, big, rng), translation=(0.5, 0.0))
        moved.append(crossing_counts(chords_from_lines(s, 1.0), [pair]).undirected[0])
    k = max(max(direct), max(moved)) + 1
    rep = chi_square_two_sample(np.bincount(direct, minlength=k), np.bincount(moved, minlength=k))
    assert rep.p_value > 1e-3


# --- serialization ----------------------------------------------------------------------

def test_csv_round_trip(rng):
    w = SquareWindow(4.0)
    samples = [(i, sample_plp(1.0, w, rng)) for i in range(3)]
    back = lines_from_csv(lines_to_csv(samples), 1.0, w)
    for i, s in samples:
        assert np.array_equal(back[i].r, s.r) and np.array_equal(back[i].theta, s.theta)
    text = chords_to_csv([(0, chords_from_lines(samples[0][1], 1.0))])
    assert text.splitlines()[0] == "replicate,angle1,angle2,direction"
