import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mldp import ConfigurationError, ShapeError, build_triple, path_metric, scalar_triple
from mldp.gelfand import PathRecord


def test_build_triple_grid():
    tr = build_triple(0.0, 1.0, 4, 2.0)
    assert np.allclose(tr.node_positions, [0, 0.25, 0.5, 0.75, 1.0])
    assert tr.dim == 3


@pytest.mark.parametrize("args", [(0, 1, 1, 2), (1, 0, 4, 2), (0, 1, 4, 1.0), (0, 1, 4, 0.5),
                                  (0, math.inf, 4, 2), (0, 1, 2.5, 2)])
def test_build_triple_rejects(args):
    with pytest.raises(ConfigurationError):
        build_triple(*args)


def test_weights_sum_to_length():
    tr = build_triple(0.0, math.pi, 64, 3.0)
    assert abs(tr.quad_weights.sum() - math.pi) <= 1e-12 * math.pi
    assert np.all(np.diff(tr.node_positions) > 0)


def test_h_inner_examples():
    tr = build_triple(0.0, 1.0, 4, 2.0)
    x = tr.interior_nodes
    assert tr.h_inner(np.zeros(3), np.zeros(3)) == 0.0
    assert tr.h_inner(x, x) == pytest.approx(0.21875, abs=1e-15)
    assert tr.h_inner(np.ones(3), np.ones(3)) == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(ShapeError):
        tr.h_inner(np.ones(3), np.ones(4))


def test_v_norm_examples():
    tr = build_triple(0.0, 1.0, 2, 2.0)
    assert tr.v_norm(np.zeros(1)) == 0.0
    assert tr.v_norm(np.array([1.0])) == pytest.approx(2.0, abs=1e-15)
    big = build_triple(0.0, 1.0, 10, 3.0)
    u = np.random.default_rng(0).normal(size=9)
    assert big.v_norm(-3 * u) == pytest.approx(3 * big.v_norm(u), rel=1e-14)


def test_trapezoid_exact_for_piecewise_linear():
    # the trapezoid rule integrates a piecewise-linear interpolant exactly
    tr = build_triple(0.0, 2.0, 8, 2.0)
    u = np.random.default_rng(1).normal(size=tr.dim)
    nodes = np.concatenate(([0.0], u, [0.0]))
    exact = sum(0.5 * tr.dx * (nodes[i] + nodes[i + 1]) for i in range(tr.n_cells))
    assert tr.h_inner(u, np.ones(tr.dim)) == pytest.approx(exact, abs=1e-12)


def test_sine_modes_orthonormal():
    tr = build_triple(0.0, 3.0, 17, 2.0)
    b = tr.sine_basis
    gram = b.T @ (tr.interior_weights[:, None] * b)
    assert np.allclose(gram, np.eye(tr.dim), atol=1e-12)


def test_project_examples(rng):
    tr = build_triple(0.0, 1.0, 16, 2.0)
    u = rng.normal(size=tr.dim)
    assert np.array_equal(tr.project(u, tr.dim), u)
    p = tr.project(u, 5)
    assert np.allclose(tr.project(p, 5), p, atol=1e-13)
    s1, s2 = tr.sine_mode(1), tr.sine_mode(2)
    assert np.allclose(tr.project(s1, 1), s1, atol=1e-13)
    assert np.allclose(tr.project(s2, 1), 0.0, atol=1e-13)
    for bad in (0, tr.dim + 1):
        with pytest.raises(ConfigurationError):
            tr.project(u, bad)


TR = build_triple(0.0, 1.0, 12, 2.5)
states = arrays(np.float64, TR.dim, elements=st.floats(-1e3, 1e3))


@given(states, states)
def test_cauchy_schwarz(u, v):
    assert abs(TR.h_inner(u, v)) <= TR.h_norm(u) * TR.h_norm(v) * (1 + 1e-12) + 1e-300


@given(states, st.integers(1, TR.dim))
def test_projection_contracts(u, n):
    assert TR.h_norm(TR.project(u, n)) <= TR.h_norm(u) * (1 + 1e-12) + 1e-12


def test_poincare_constant(rng):
    # smallest eigenvalue of -Delta_h gives the sharp discrete constant for alpha = 2
    tr = build_triple(0.0, 1.0, 32, 2.0)
    c = 1.0 / math.sqrt(-tr.laplacian_eigenvalues[0])
    for _ in range(200):
        u = rng.normal(size=tr.dim) * rng.uniform(0.01, 100)
        assert tr.h_norm(u) <= c * tr.v_norm(u) * (1 + 1e-12)


def _path(tr, states, T=1.0):
    return PathRecord(np.linspace(0.0, T, states.shape[0]), states, "skeleton", tr)


def test_path_metric_constant_paths(rng):
    tr = build_triple(0.0, 1.0, 10, 3.0)
    a, b = rng.normal(size=tr.dim), rng.normal(size=tr.dim)
    T = 2.0
    f = _path(tr, np.tile(a, (21, 1)), T)
    g = _path(tr, np.tile(b, (21, 1)), T)
    expect = tr.h_norm(a - b) + T ** (1 / 3) * tr.v_norm(a - b)
    assert path_metric(f, g) == pytest.approx(expect, rel=1e-12)
    assert path_metric(f, f) == 0.0


def test_path_metric_axioms(rng):
    tr = build_triple(0.0, 1.0, 8, 2.0)
    for _ in range(100):
        f, g, h = (_path(tr, rng.normal(size=(6, tr.dim)) * rng.uniform(0.1, 10)) for _ in range(3))
        assert path_metric(f, g) == pytest.approx(path_metric(g, f), rel=1e-14)
        assert path_metric(f, h) <= path_metric(f, g) + path_metric(g, h) + 1e-12


def test_path_record_validation():
    tr = scalar_triple()
    with pytest.raises(ShapeError):
        PathRecord(np.array([0.0, 0.1, 0.3]), np.zeros((3, 1)), "skeleton", tr)
    with pytest.raises(ShapeError):
        PathRecord(np.array([0.1, 0.2]), np.zeros((2, 1)), "skeleton", tr)
    with pytest.raises(ConfigurationError):
        PathRecord(np.array([0.0, 0.1]), np.zeros((2, 1)), "other", tr)
    f = _path(tr, np.zeros((3, 1)))
    g = _path(tr, np.zeros((4, 1)))
    with pytest.raises(ShapeError):
        path_metric(f, g)
