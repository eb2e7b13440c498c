"""Numpy implementations of the compiled kernels (same signatures, same streams)."""
import numpy as np

BACKEND = "python"

_MASK = 0xFFFFFFFFFFFFFFFF
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
SALT_SEED = 0xD1B54A32D192ED03
SALT_SAMPLE = 0x632BE59BD9B4E5B5
TWO_PI = 6.283185307179586
INV_2_53 = 1.1102230246251565e-16
_CHUNK_NORMALS = 1 << 21


def _mix64_int(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def stream_key(seed, sample):
    s = _mix64_int(int(seed) ^ SALT_SEED)
    return _mix64_int(s ^ ((int(sample) * int(GOLDEN) + SALT_SAMPLE) & _MASK))


def _stream_keys(seed, sample_start, n_samples):
    s = np.uint64(_mix64_int(int(seed) ^ SALT_SEED))
    samples = np.arange(sample_start, sample_start + n_samples, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(s ^ (samples * GOLDEN + np.uint64(SALT_SAMPLE)))


def _normals_from_keys(keys, count):
    pairs = (count + 1) // 2
    j = np.arange(pairs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = keys[:, None]
        c1 = _mix64(base + (np.uint64(2) * j + np.uint64(1)) * GOLDEN)
        c2 = _mix64(base + (np.uint64(2) * j + np.uint64(2)) * GOLDEN)
    u1 = ((c1 >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * INV_2_53
    u2 = ((c2 >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * INV_2_53
    rad = np.sqrt(-2.0 * np.log(u1))
    out = np.empty((keys.shape[0], 2 * pairs))
    out[:, 0::2] = rad * np.cos(TWO_PI * u2)
    out[:, 1::2] = rad * np.sin(TWO_PI * u2)
    return out[:, :count]


def fill_normals(seed, sample_start, n_samples, count):
    keys = _stream_keys(seed, sample_start, n_samples)
    return np.ascontiguousarray(_normals_from_keys(keys, count))


def scalar_linear_block(seed, sample_start, n_samples, n_steps, dt, x0, lam, sigma, eps, tilt):
    sigma = np.asarray(sigma, dtype=np.float64)
    tilt = np.asarray(tilt, dtype=np.float64)
    m = sigma.shape[0]
    if tilt.shape != (n_steps, m):
        raise ValueError("tilt must have shape (n_steps, modes)")
    xt = np.empty(n_samples)
    logw = np.empty(n_samples)
    drive = tilt @ sigma
    energy = float(np.sum(dt * tilt * tilt))
    denom = 1.0 + dt * lam
    # chunked so memory stays bounded; samples are independent so results do not depend on it
    chunk = max(1, _CHUNK_NORMALS // max(1, n_steps * m))
    for lo in range(0, n_samples, chunk):
        hi = min(n_samples, lo + chunk)
        dw = np.sqrt(dt) * fill_normals(seed, sample_start + lo, hi - lo, n_steps * m)
        dw = dw.reshape(hi - lo, n_steps, m)
        shock = dw @ sigma
        x = np.full(hi - lo, float(x0))
        for k in range(n_steps):
            x = (x + dt * drive[k] + eps * shock[:, k]) / denom
        xt[lo:hi] = x
        cross = np.einsum("skj,kj->s", dw, tilt)
        logw[lo:hi] = -cross / eps - 0.5 * energy / (eps * eps)
    return xt, logw


def plaplace_flux_div(u, dx, p):
    u = np.asarray(u, dtype=np.float64)
    padded = np.concatenate(([0.0], u, [0.0]))
    g = np.diff(padded) / dx
    if p == 2.0:
        flux = g
    else:
        a = np.abs(g)
        with np.errstate(divide="ignore", invalid="ignore"):
            flux = np.where(a == 0.0, 0.0, a ** (p - 2.0) * g)
    return np.diff(flux) / dx
