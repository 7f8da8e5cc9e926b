import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from physmap.errors import ArgumentError
from physmap.model import (Constant, Density, Deterministic, DiscreteAtoms, Exponential, ModelSpec,
                           PiecewiseConstant, PiecewiseLengths, QuadConfig, UniformInterval,
                           left_end_intensity, measure, sample_left_end_lengths, survival)


# measure ------------------------------------------------------------------

def test_measure_constant():
    assert measure(Constant(2.0), (0.0, 3.0)) == pytest.approx(6.0)


def test_measure_empty_interval():
    for m in (Constant(2.0), PiecewiseConstant([0.0, 1.0], [0.0, 1.0, 3.0]),
              Density(lambda x: x, 1.0, (0.0, 1.0))):
        assert measure(m, (5.0, 5.0)) == 0.0


def test_measure_piecewise_hand_sum():
    # Rate 1 on [0, 1) and 3 after 1: 0.5 * 1 + 0.5 * 3.
    assert measure(PiecewiseConstant([0.0, 1.0], [0.0, 1.0, 3.0]), (0.5, 1.5)) == pytest.approx(2.0)


def test_measure_density():
    assert measure(Density(lambda x: x, 1.0, (0.0, 1.0)), (0.0, 1.0)) == pytest.approx(0.5)


def test_measure_reversed_interval():
    with pytest.raises(ArgumentError):
        measure(Constant(1.0), (1.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 3), st.floats(0, 3))
def test_measure_additive(a, w1, w2):
    m = PiecewiseConstant([-1.0, 0.5, 2.0], [0.3, 1.0, 2.5, 0.7])
    whole = measure(m, (a, a + w1 + w2))
    parts = measure(m, (a, a + w1)) + measure(m, (a + w1, a + w1 + w2))
    assert whole == pytest.approx(parts, abs=1e-9)


def test_density_bound_audited():
    with pytest.raises(ArgumentError):
        Density(lambda x: 2 * x, 1.0, (0.0, 1.0))


def test_negative_rates_rejected():
    with pytest.raises(ArgumentError):
        Constant(-1.0)
    with pytest.raises(ArgumentError):
        PiecewiseConstant([0.0], [1.0, -1.0])


def test_quad_config_invariants():
    with pytest.raises(ArgumentError):
        QuadConfig(abs_tol=1e-12, tail_mass=1e-9)
    with pytest.raises(ArgumentError):
        QuadConfig(abs_tol=-1.0)


# survival and length laws ------------------------------------------------

def test_survival_examples():
    assert survival(Deterministic(1.0), 0.0, 1.0) == 1.0
    assert survival(Deterministic(1.0), 0.0, 1.0 + 1e-12) == 0.0
    assert survival(Exponential(1.0), 0.0, 0.0) == 1.0
    assert survival(Exponential(2.0), 0.0, 2.0) == pytest.approx(np.exp(-1.0))


def test_survival_negative_length():
    with pytest.raises(ArgumentError):
        survival(Exponential(1.0), 0.0, -0.1)


def test_position_dependent_survival():
    laws = PiecewiseLengths([0.0], (Deterministic(1.0), Deterministic(2.0)))
    assert survival(laws, -1.0, 1.5) == 0.0
    assert survival(laws, 1.0, 1.5) == 1.0


LAWS = [Deterministic(1.0), Exponential(1.5), UniformInterval(0.5, 2.0),
        DiscreteAtoms([0.5, 1.0, 3.0], [0.2, 0.5, 0.3])]


@pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
def test_survival_shape(law):
    t = np.linspace(0.0, 20.0, 400)
    s = law.survival(t)
    assert law.survival(np.array(0.0)) == 1.0
    assert np.all(np.diff(s) <= 0)
    assert s[-1] < 1e-5


@pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
def test_quantile_brackets_survival(law):
    # S(q) <= 1 - p <= S(q-) with S(t) = P(L >= t): P(L > q) <= 1 - p <= P(L >= q).
    for p in (0.05, 0.2, 0.5, 0.8, 0.95):
        q = law.quantile(p)
        assert law.survival(np.array(q + 1e-9)) <= 1 - p + 1e-12
        assert 1 - p <= law.survival(np.array(q)) + 1e-12


@pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
def test_empirical_survival_matches(law):
    n = 100_000
    x = law.sample(np.random.default_rng(7), n)
    for t in np.linspace(0.1, 3.0, 12):
        s = float(law.survival(np.array(t)))
        emp = np.mean(x >= t)
        assert abs(emp - s) <= 3 * np.sqrt(s * (1 - s) / n) + 1e-12


@pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
def test_tail_integral_matches_quadrature(law):
    from physmap.quadrature import integrate_scalar
    for u in (0.0, 0.7, 1.5):
        direct, _ = integrate_scalar(lambda t: law.survival(t), u, 60.0, points=[k for k in law.kinks])
        assert float(law.tail_integral(np.array(u))) == pytest.approx(direct, abs=1e-8)


def test_moments():
    assert Exponential(1.0).moment(2) == pytest.approx(2.0, rel=1e-8)
    assert Exponential(1.0).moment(3) == pytest.approx(6.0, rel=1e-8)
    assert DiscreteAtoms([1.0, 2.0], [0.5, 0.5]).mean == pytest.approx(1.5)


def test_law_validation():
    with pytest.raises(ArgumentError):
        UniformInterval(2.0, 1.0)
    with pytest.raises(ArgumentError):
        DiscreteAtoms([1.0, 2.0], [0.5, 0.6])
    with pytest.raises(ArgumentError):
        Exponential(0.0)


# model spec and left-end reparametrization -------------------------------

def test_homogeneous_flag():
    assert ModelSpec(Constant(1.0), Constant(2.0), Exponential(1.0)).homogeneous
    assert not ModelSpec(PiecewiseConstant([0.0], [1.0, 2.0]), Constant(2.0), Exponential(1.0)).homogeneous
    laws = PiecewiseLengths([0.0], (Deterministic(1.0), Deterministic(2.0)))
    assert not ModelSpec(Constant(1.0), Constant(1.0), laws).homogeneous


def test_left_end_intensity_homogeneous():
    spec = ModelSpec(Constant(1.0), Constant(1.0), Deterministic(1.0))
    assert np.allclose(left_end_intensity(spec, np.array([-3.0, 0.0, 2.5])), 1.0)
    spec = ModelSpec(Constant(3.0), Constant(1.0), Exponential(1.0))
    assert np.allclose(left_end_intensity(spec, np.array([-1.0, 0.0, 4.0])), 3.0, atol=1e-8)


def test_left_end_intensity_half_line():
    # Clones only right of 0 with L = 1: left end y comes from right end y + 1.
    spec = ModelSpec(PiecewiseConstant([0.0], [0.0, 1.0]), Constant(1.0), Deterministic(1.0))
    assert float(left_end_intensity(spec, np.array([-0.5]))) == pytest.approx(1.0)
    assert float(left_end_intensity(spec, np.array([-1.5]))) == pytest.approx(0.0)


def test_left_end_lengths_homogeneous_exponential():
    spec = ModelSpec(Constant(2.0), Constant(1.0), Exponential(1.0))
    t = sample_left_end_lengths(spec, np.zeros(20000), np.random.default_rng(3))
    assert np.mean(t) == pytest.approx(1.0, abs=4 / np.sqrt(20000))
