import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from physmap.errors import NumericError
from physmap.quadrature import cumulative, integrate, integrate_scalar


def test_exponential_integral():
    val, err = integrate_scalar(lambda x: np.exp(-x), 0.0, 30.0)
    assert val == pytest.approx(1.0 - np.exp(-30.0), abs=1e-12)
    assert err < 1e-9


def test_kink_with_breakpoint():
    val, _ = integrate_scalar(lambda x: np.abs(x - 0.3), 0.0, 1.0, points=[0.3])
    assert val == pytest.approx(0.3 ** 2 / 2 + 0.7 ** 2 / 2, abs=1e-13)


def test_batch_and_vector_output():
    lo = np.zeros(3)
    hi = np.array([1.0, 2.0, 3.0])
    vals, _ = integrate(lambda x, i: np.stack([np.ones_like(x), x], axis=-1), lo, hi)
    assert np.allclose(vals[:, 0], hi)
    assert np.allclose(vals[:, 1], hi ** 2 / 2)


def test_empty_interval_is_zero():
    vals, _ = integrate(lambda x, i: x, [1.0, 0.0], [1.0, 2.0])
    assert vals[0] == 0.0 and vals[1] == pytest.approx(2.0)


def test_nested_integral():
    # int_0^1 int_0^x y dy dx = 1/6
    def outer(x, i):
        xf = x.ravel()
        inner, _ = integrate(lambda y, j: y, np.zeros(xf.size), xf)
        return inner.reshape(x.shape)

    val, _ = integrate(outer, 0.0, 1.0)
    assert val[0] == pytest.approx(1 / 6, abs=1e-13)


def test_non_finite_integrand_raises():
    with pytest.raises(NumericError):
        integrate_scalar(lambda x: np.where(x > 0.5, np.inf, 0.0), 0.0, 1.0)


def test_infinite_limits_rejected():
    with pytest.raises(NumericError):
        integrate_scalar(lambda x: x, 0.0, np.inf)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=20))
def test_cumulative_matches_direct(uppers):
    u = np.array(uppers)
    got = cumulative(lambda x, o: np.cos(x), np.zeros(1), u, np.zeros(u.size, dtype=int))
    assert np.allclose(got, np.sin(u), atol=1e-10)
