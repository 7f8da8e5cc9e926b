import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from physmap.errors import ArgumentError
from physmap.model import (Constant, Density, Deterministic, Exponential, ModelSpec, PiecewiseConstant,
                           UniformInterval, measure)
from physmap.sampler import (AnchorSet, CloneSet, IslandSet, RngStream, anchored_clones, count_anchored_covering,
                             count_covering, cumulative_ocean, export_realization, in_ocean, islands,
                             ocean_measure, pad_width, realize, sample_anchors, sample_clones, theta_path)
from physmap.mc import run_replications


def spec_with(kappa=1.0, alpha=1.0, lengths=None):
    c = kappa if not np.isscalar(kappa) else Constant(kappa)
    a = alpha if not np.isscalar(alpha) else Constant(alpha)
    return ModelSpec(c, a, lengths or Deterministic(1.0))


# pad_width ----------------------------------------------------------------

def test_pad_width_examples():
    assert pad_width(spec_with(), 1e-3) == 1.0
    assert pad_width(spec_with(lengths=Exponential(1.0)), 1e-6) == pytest.approx(np.log(1e6), abs=1e-4)
    assert pad_width(spec_with(lengths=UniformInterval(0.0, 2.0)), 1e-9) == 2.0


def test_pad_width_rejects_bad_epsilon():
    with pytest.raises(ArgumentError):
        pad_width(spec_with(), 0.0)


# RNG streams ---------------------------------------------------------------

def test_streams_deterministic_and_distinct():
    a = RngStream(5, 3).generator(0).random(4)
    assert np.array_equal(a, RngStream(5, 3).generator(0).random(4))
    assert not np.array_equal(a, RngStream(5, 4).generator(0).random(4))
    assert not np.array_equal(a, RngStream(5, 3).generator(1).random(4))


# sampling -------------------------------------------------------------------

def test_zero_intensity_is_empty():
    s = spec_with(kappa=0.0, alpha=0.0)
    assert len(sample_clones(s, (0, 10), 1.0, RngStream(1))) == 0
    assert len(sample_anchors(s, (0, 10), 1.0, RngStream(1))) == 0


def test_clone_count_is_poisson_22():
    s = spec_with(kappa=2.0)
    n = run_replications(lambda r: len(sample_clones(s, (0, 10), 1.0, r)), 10_000, seed=11)
    assert abs(n.mean() - 22) < 3 * np.sqrt(22 / 10_000)


def test_density_clone_count_mean():
    s = spec_with(kappa=Density(lambda x: x, 1.0, (0.0, 1.0)))
    n = run_replications(lambda r: len(sample_clones(s, (0, 1), 0.0, r)), 20_000, seed=12)
    expected = measure(s.clones, (0.0, 1.0))
    assert expected == pytest.approx(0.5)
    assert abs(n.mean() - expected) < 3 * np.sqrt(expected / 20_000)


def test_anchor_count_mean_and_variance():
    s = spec_with(alpha=1.0)
    reps = 10_000
    n = run_replications(lambda r: len(sample_anchors(s, (0, 100), 0.0, r)), reps, seed=13)
    assert abs(n.mean() - 100) < 3 * np.sqrt(100 / reps)
    # Var of the sample variance of a Poisson(m) count is about (m + 2 m^2) / reps.
    assert abs(n.var(ddof=1) - 100) < 3 * np.sqrt((100 + 2 * 100 ** 2) / reps)


def test_zero_rate_region_has_no_anchors():
    s = spec_with(alpha=PiecewiseConstant([0.0, 50.0], [0.0, 0.0, 1.0]))
    for k in range(20):
        a = sample_anchors(s, (0, 100), 0.0, RngStream(2, k))
        assert np.all(a.positions >= 50.0)
        assert len(a) > 0


def test_sampled_regions():
    s = spec_with(kappa=3.0, alpha=3.0)
    c = sample_clones(s, (0, 10), 1.0, RngStream(3))
    a = sample_anchors(s, (0, 10), 1.0, RngStream(3))
    assert np.all((c.right_ends >= 0) & (c.right_ends <= 11))
    assert np.all((a.positions >= -1) & (a.positions <= 11))
    assert np.all(np.diff(a.positions) >= 0)


def test_clone_and_anchor_counts_uncorrelated():
    s = spec_with(kappa=1.0, alpha=1.0)
    reps = 10_000

    def both(r):
        return (len(sample_clones(s, (0, 5), 0.0, r)), len(sample_anchors(s, (0, 5), 0.0, r)))

    pairs = np.array([both(RngStream(21, k)) for k in range(reps)])
    corr = np.corrcoef(pairs.T)[0, 1]
    assert abs(corr) < 3 / np.sqrt(reps)


def test_clone_counts_in_subinterval_poisson():
    s = spec_with(kappa=PiecewiseConstant([2.0], [0.5, 2.0]))
    reps = 10_000
    n = run_replications(lambda r: np.count_nonzero(
        (sample_clones(s, (0, 4), 0.0, r).right_ends >= 1.0)
        & (sample_clones(s, (0, 4), 0.0, r).right_ends <= 3.0)), reps, seed=15)
    m = measure(s.clones, (1.0, 3.0))
    assert abs(n.mean() - m) < 3 * np.sqrt(m / reps)
    assert abs(n.var(ddof=1) - m) < 3 * np.sqrt((m + 2 * m * m) / reps)


# anchoring and islands ----------------------------------------------------------

def test_anchored_examples():
    assert len(anchored_clones(CloneSet.from_pairs([(2, 3)]), AnchorSet.from_positions([0]))) == 1
    assert len(anchored_clones(CloneSet.from_pairs([(2, 1)]), AnchorSet.from_positions([1]))) == 1
    assert len(anchored_clones(CloneSet.from_pairs([(2, 1)]), AnchorSet.from_positions([0.5]))) == 0


def test_island_examples():
    assert IslandSet.from_intervals([[0, 2], [1, 3]]).intervals == [(0.0, 3.0)]
    assert len(IslandSet.from_intervals([[0, 1], [2, 3]])) == 2
    assert IslandSet.from_intervals([[0, 1], [1, 2]]).intervals == [(0.0, 2.0)]


def test_ocean_measure_examples():
    assert ocean_measure(IslandSet.from_intervals(np.zeros((0, 2))), (0.0, 7.0)) == 7.0
    assert ocean_measure(IslandSet.from_intervals([[0, 3]]), (1.0, 2.0)) == 0.0
    assert ocean_measure(IslandSet.from_intervals([[0, 1], [2, 4]]), (0.0, 4.0)) == 1.0
    with pytest.raises(ArgumentError):
        ocean_measure(IslandSet.from_intervals([[0, 1]]), (2.0, 1.0))


def test_count_covering_examples():
    c = CloneSet.from_pairs([(2, 3)])
    assert count_covering(c, 0.0) == 1
    assert count_covering(c, 3.0) == 0
    assert count_anchored_covering(c, AnchorSet.from_positions([1.5]), 0.0) == 1
    assert count_anchored_covering(c, AnchorSet.from_positions([5.0]), 0.0) == 0


def test_count_covering_is_poisson_mean_one(unit_spec):
    reps = 100_000
    n = run_replications(lambda r: count_covering(sample_clones(unit_spec, (0, 0), 1.0, r), 0.0), reps, seed=16)
    assert abs(n.mean() - 1.0) < 3 * np.sqrt(1.0 / reps)
    assert abs(n.var(ddof=1) - 1.0) < 3 * np.sqrt(3.0 / reps)


intervals = st.lists(st.tuples(st.floats(-10, 10), st.floats(0, 5)), max_size=25)


@settings(max_examples=100, deadline=None)
@given(intervals)
def test_islands_disjoint_sorted_and_cover(pairs):
    iv = [(a, a + w) for a, w in pairs]
    isl = IslandSet.from_intervals(np.array(iv).reshape(-1, 2))
    assert np.all(isl.starts <= isl.ends)
    assert np.all(isl.starts[1:] > isl.ends[:-1])
    # Every interval of positive length sits inside one island.
    for a, b in iv:
        if b > a:
            # from_intervals goes through (right end, length), which rounds.
            tol = 1e-12 * max(1.0, abs(a), abs(b))
            assert np.any((isl.starts <= a + tol) & (b <= isl.ends + tol))


@settings(max_examples=100, deadline=None)
@given(intervals, st.floats(-12, 12), st.floats(0, 10))
def test_ocean_matches_grid_measure(pairs, a, w):
    iv = np.array([(x, x + t) for x, t in pairs]).reshape(-1, 2)
    isl = IslandSet.from_intervals(iv)
    o = ocean_measure(isl, (a, a + w))
    assert 0.0 <= o <= w + 1e-12
    # Midpoint rule on a fine grid: exact up to one cell per island endpoint.
    cells = 4000
    mids = a + (np.arange(cells) + 0.5) * w / cells
    approx = in_ocean(isl, mids).mean() * w
    assert abs(approx - o) <= 2 * len(isl) * w / cells + 1e-9


@settings(max_examples=60, deadline=None)
@given(intervals, st.lists(st.floats(0, 10), min_size=1, max_size=8))
def test_cumulative_ocean_agrees(pairs, uppers):
    isl = IslandSet.from_intervals(np.array([(x, x + t) for x, t in pairs]).reshape(-1, 2))
    got = cumulative_ocean(isl, 0.0, uppers)
    want = [ocean_measure(isl, (0.0, u)) for u in uppers]
    assert np.allclose(got, want, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_in_anchors_and_clones(seed):
    s = spec_with(kappa=1.0, alpha=0.5, lengths=Exponential(1.0))
    r = RngStream(seed)
    c = sample_clones(s, (0, 10), 10.0, r)
    a = sample_anchors(s, (0, 10), 10.0, r)
    base = ocean_measure(islands(anchored_clones(c, a)), (0, 10))
    extra_a = sample_anchors(s, (0, 10), 10.0, RngStream(seed, 1))
    more_a = AnchorSet.from_positions(np.concatenate([a.positions, extra_a.positions]))
    assert ocean_measure(islands(anchored_clones(c, more_a)), (0, 10)) <= base + 1e-12
    extra_c = sample_clones(s, (0, 10), 10.0, RngStream(seed, 2))
    more_c = CloneSet.from_pairs(np.concatenate([np.column_stack([c.right_ends, c.lengths]),
                                                 np.column_stack([extra_c.right_ends, extra_c.lengths])]))
    assert ocean_measure(islands(anchored_clones(more_c, a)), (0, 10)) <= base + 1e-12


def test_far_indicators_uncorrelated(unit_spec):
    # With L <= 1 the events {0 in O} and {z in O} only become independent at
    # distance 2: between 1 and 2 a single anchor can anchor clones touching both.
    reps = 40_000
    from physmap.mc import ocean_indicators
    ind = ocean_indicators(unit_spec, [0.0, 2.1], reps, seed=17)
    cov = np.cov(ind.T)[0, 1]
    prod = (ind[:, 0] - ind[:, 0].mean()) * (ind[:, 1] - ind[:, 1].mean())
    assert abs(cov) < 3 * prod.std(ddof=1) / np.sqrt(reps)


# theta path and export ------------------------------------------------------------

def test_theta_path_zero_at_origin(unit_spec):
    th = theta_path(unit_spec, 50.0, [0.0, 0.5, 1.0], RngStream(1), rho=0.57, nu=0.1)
    assert th[0] == 0.0


def test_theta_path_full_ocean():
    s = spec_with(kappa=0.0)
    th = theta_path(s, 50.0, [0.0, 0.3, 1.0], RngStream(1), rho=1.0, nu=1.0)
    assert np.all(th == 0.0)


def test_theta_path_rejects_negative_nu(unit_spec):
    with pytest.raises(ArgumentError):
        theta_path(unit_spec, 10.0, [1.0], RngStream(1), rho=0.5, nu=-1.0)


def test_theta_variance_near_one(unit_spec):
    from physmap.formulas import rho_hom, variance_constants
    from physmap.formulas.homogeneous import HomogeneousParams
    p = HomogeneousParams.from_spec(unit_spec)
    rho = rho_hom(p)
    nu = variance_constants(p).nu
    th = run_replications(lambda r: theta_path(unit_spec, 500.0, [1.0], r, rho, nu)[0], 2000, seed=18)
    assert 0.85 <= th.var(ddof=1) <= 1.15


def test_export_realization(tmp_path, unit_spec):
    real = realize(unit_spec, (0.0, 20.0), RngStream(4))
    export_realization(real, str(tmp_path))
    names = sorted(os.listdir(tmp_path))
    assert names == ["anchors.csv", "clones.csv", "islands.csv"]
    clones = np.loadtxt(tmp_path / "clones.csv", delimiter=",", skiprows=1, ndmin=2)
    assert np.array_equal(clones[:, 0], real.clones.right_ends)
