# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: counter-based Gaussian streams and the fused scalar path kernel.

Every function here has a numpy twin in ``_pykernels`` with the same signature.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, sin, fabs, pow as cpow, INFINITY
from libc.stdint cimport uint64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t SALT_SEED = 0xD1B54A32D192ED03ULL
cdef uint64_t SALT_SAMPLE = 0x632BE59BD9B4E5B5ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.1102230246251565e-16

BACKEND = "cython"


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _stream_key(uint64_t seed, uint64_t sample) noexcept nogil:
    return mix64(mix64(seed ^ SALT_SEED) ^ (sample * GOLDEN + SALT_SAMPLE))


cdef inline double _unit(uint64_t x) noexcept nogil:
    # (0, 1], never zero so log() is finite
    return <double>((x >> 11) + 1) * INV_2_53


cdef inline double _normal(uint64_t key, uint64_t j) noexcept nogil:
    cdef uint64_t pair = j >> 1
    cdef double u1 = _unit(mix64(key + (2 * pair + 1) * GOLDEN))
    cdef double u2 = _unit(mix64(key + (2 * pair + 2) * GOLDEN))
    cdef double rad = sqrt(-2.0 * log(u1))
    if j & 1:
        return rad * sin(TWO_PI * u2)
    return rad * cos(TWO_PI * u2)


cdef inline void _normal_pair(uint64_t key, uint64_t pair, double* a, double* b) noexcept nogil:
    cdef double u1 = _unit(mix64(key + (2 * pair + 1) * GOLDEN))
    cdef double u2 = _unit(mix64(key + (2 * pair + 2) * GOLDEN))
    cdef double rad = sqrt(-2.0 * log(u1))
    a[0] = rad * cos(TWO_PI * u2)
    b[0] = rad * sin(TWO_PI * u2)


def stream_key(seed, sample):
    return int(_stream_key(<uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF),
                           <uint64_t>(int(sample) & 0xFFFFFFFFFFFFFFFF)))


def fill_normals(seed, Py_ssize_t sample_start, Py_ssize_t n_samples, Py_ssize_t count):
    """Standard normals, shape (n_samples, count); row i belongs to sample sample_start + i."""
    cdef uint64_t useed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    out = np.empty((n_samples, count), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef uint64_t key
    cdef double a, b
    with nogil:
        for i in range(n_samples):
            key = _stream_key(useed, <uint64_t>(sample_start + i))
            j = 0
            while j + 1 < count:
                _normal_pair(key, <uint64_t>(j >> 1), &a, &b)
                o[i, j] = a
                o[i, j + 1] = b
                j += 2
            if j < count:
                o[i, j] = _normal(key, <uint64_t>j)
    return out


def scalar_linear_block(seed, Py_ssize_t sample_start, Py_ssize_t n_samples,
                        Py_ssize_t n_steps, double dt, double x0, double lam,
                        const double[::1] sigma, double eps, const double[:, ::1] tilt):
    """Implicit Euler for dX = (-lam X + sigma.tilt) dt + eps sigma.dW on one node.

    Returns terminal values and Girsanov log-weights for a block of samples.
    """
    cdef uint64_t useed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t m = sigma.shape[0]
    if tilt.shape[0] != n_steps or tilt.shape[1] != m:
        raise ValueError("tilt must have shape (n_steps, modes)")
    xt = np.empty(n_samples, dtype=np.float64)
    lw = np.empty(n_samples, dtype=np.float64)
    cdef double[::1] xo = xt
    cdef double[::1] lo = lw
    cdef double sdt = sqrt(dt)
    cdef double denom = 1.0 + dt * lam
    cdef double inv_eps = 1.0 / eps
    cdef double energy = 0.0
    cdef double x, logw, dw, drive, shock, cross, z, spare
    cdef Py_ssize_t i, k, j
    cdef uint64_t key, idx
    for k in range(n_steps):
        for j in range(m):
            energy += dt * tilt[k, j] * tilt[k, j]
    with nogil:
        for i in range(n_samples):
            key = _stream_key(useed, <uint64_t>(sample_start + i))
            x = x0
            cross = 0.0
            idx = 0
            for k in range(n_steps):
                drive = 0.0
                shock = 0.0
                for j in range(m):
                    # normals come in Box-Muller pairs; the odd one is kept for the next draw
                    if idx & 1:
                        z = spare
                    else:
                        _normal_pair(key, idx >> 1, &z, &spare)
                    dw = sdt * z
                    idx += 1
                    drive += sigma[j] * tilt[k, j]
                    shock += sigma[j] * dw
                    cross += tilt[k, j] * dw
                x = (x + dt * drive + eps * shock) / denom
            xo[i] = x
            lo[i] = -inv_eps * cross - 0.5 * inv_eps * inv_eps * energy
    return xt, lw


def plaplace_flux_div(const double[::1] u, double dx, double p):
    """Discrete div(|grad u|^(p-2) grad u) with homogeneous Dirichlet ghosts."""
    cdef Py_ssize_t n = u.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double left_flux, right_flux, g, right
    cdef Py_ssize_t i
    cdef double q = p - 2.0
    with nogil:
        g = u[0] / dx
        left_flux = g if q == 0.0 else pow_flux(g, q)
        for i in range(n):
            right = u[i + 1] if i + 1 < n else 0.0
            g = (right - u[i]) / dx
            right_flux = g if q == 0.0 else pow_flux(g, q)
            o[i] = (right_flux - left_flux) / dx
            left_flux = right_flux
    return out


cdef inline double pow_flux(double g, double q) noexcept nogil:
    cdef double a = fabs(g)
    if a == 0.0:
        return 0.0
    return cpow(a, q) * g
