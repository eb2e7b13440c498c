import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mldp import (
    ConfigurationError,
    power_bound_check,
    power_holder_check,
    power_lipschitz_check,
    power_monotonicity_check,
)


def test_monotonicity_examples():
    assert power_monotonicity_check([1.0, 2.0], [1.0, 2.0], 1.5) == (0.0, 0.0, True)
    a, b = np.array([0.3, -1.2, 2.0]), np.array([1.0, 0.5, -0.7])
    lhs, rhs, ok = power_monotonicity_check(a, b, 0.0)
    assert lhs == pytest.approx(np.sum((a - b) ** 2), rel=1e-15) and lhs == pytest.approx(rhs, rel=1e-15) and ok
    assert power_monotonicity_check([1.0, 0.0], [0.0, 0.0], 2.0) == (1.0, 0.25, True)


def test_lipschitz_examples(rng):
    lhs, rhs, ok = power_lipschitz_check([2.0], [2.0], 1.3)
    assert lhs == 0.0 and ok
    a, b = rng.normal(size=4), rng.normal(size=4)
    lhs, rhs, ok = power_lipschitz_check(a, b, 1.0)
    assert lhs == pytest.approx(np.linalg.norm(a - b)) and rhs == pytest.approx(2 * np.linalg.norm(a - b)) and ok


def test_holder_examples():
    lhs, rhs, ok = power_holder_check(1.0, 0.0, 0.5)
    assert lhs == 1.0 and rhs == 2.0 and ok
    for r in (0.0, 1.0, 1.5):
        with pytest.raises(ConfigurationError):
            power_holder_check(1.0, 0.0, r)
    with pytest.raises(ConfigurationError):
        power_bound_check(1.0, 0.0, 0.5, kind="other")


def test_holder_constant_scan():
    # brute-force scan: the sharp constant is 2^(1-r), attained at a = -b, and stays below 2
    grid = np.linspace(-3.0, 3.0, 241)
    a, b = np.meshgrid(grid, grid)
    mask = a != b
    for r in (0.1, 0.25, 0.5, 0.75, 0.9):
        num = np.abs(np.sign(a) * np.abs(a) ** r - np.sign(b) * np.abs(b) ** r)
        ratio = num[mask] / np.abs(a - b)[mask] ** r
        assert ratio.max() == pytest.approx(2.0 ** (1.0 - r), rel=1e-12)
        assert ratio.max() <= 2.0


vec = st.integers(1, 16).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, n, elements=st.floats(-1e3, 1e3))))


@given(vec, st.floats(0.0, 4.0))
def test_monotonicity_property(ab, r):
    assert power_monotonicity_check(ab[0], ab[1], r)[2]


@given(vec, st.floats(0.0, 4.0))
def test_lipschitz_property(ab, r):
    assert power_lipschitz_check(ab[0], ab[1], r)[2]


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.01, 0.99))
def test_holder_property(a, b, r):
    assert power_holder_check(a, b, r)[2]
