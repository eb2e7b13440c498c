import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from mldp import _kernels
from mldp._kernels import compiled_kernels, python_kernels

needs_compiled = pytest.mark.skipif(compiled_kernels is None, reason="extension not built")


@needs_compiled
def test_normals_match_across_backends():
    # same integer stream; libm and numpy's vector log/cos/sin may differ in the last bit
    for seed, start in ((0, 0), (123456789, 77), (2 ** 63 - 1, 10 ** 6)):
        a = compiled_kernels.fill_normals(seed, start, 200, 13)
        b = python_kernels.fill_normals(seed, start, 200, 13)
        assert a.shape == (200, 13)
        assert np.max(np.abs(a - b)) <= 4 * np.finfo(float).eps * max(1.0, np.max(np.abs(a)))
        assert compiled_kernels.stream_key(seed, start) == python_kernels.stream_key(seed, start)


def test_normals_repeatable_within_backend():
    assert np.array_equal(_kernels.fill_normals(9, 3, 50, 11), _kernels.fill_normals(9, 3, 50, 11))


@needs_compiled
def test_scalar_block_backends_agree(rng):
    tilt = rng.normal(size=(50, 1))
    args = (7, 100, 300, 50, 0.02, 0.1, 1.0, np.ones(1), 0.4, tilt)
    xa, la = compiled_kernels.scalar_linear_block(*args)
    xb, lb = python_kernels.scalar_linear_block(*args)
    assert np.allclose(xa, xb, rtol=0, atol=1e-13)
    assert np.allclose(la, lb, rtol=0, atol=1e-11)


@needs_compiled
def test_flux_divergence_backends_agree(rng):
    u = rng.normal(size=31)
    for p in (1.5, 2.0, 3.0):
        assert np.allclose(compiled_kernels.plaplace_flux_div(u, 1 / 32, p),
                           python_kernels.plaplace_flux_div(u, 1 / 32, p), rtol=1e-13, atol=1e-10)


def test_stream_is_a_prefix():
    # sample i's stream does not depend on how many normals are requested or where the block starts
    long = _kernels.fill_normals(5, 0, 4, 20)
    short = _kernels.fill_normals(5, 2, 2, 7)
    assert np.array_equal(long[2:, :7], short)


def test_normal_statistics():
    z = _kernels.fill_normals(2024, 0, 200, 1000).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.01
    assert stats.kstest(z, "norm").pvalue > 1e-3
    # neighbouring samples are uncorrelated
    m = _kernels.fill_normals(2024, 0, 2000, 2)
    assert abs(np.corrcoef(m[:, 0], m[:, 1])[0, 1]) < 0.08


def test_pure_python_switch():
    code = "from mldp import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, MLDP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == python_kernels.BACKEND
