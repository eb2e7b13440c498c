"""Elementary inequalities for the power maps x -> |x|^r x behind the monotonicity proofs.

Each check returns ``(lhs, rhs, holds)``; ``holds`` allows a relative slack of
``RELATIVE_SLACK`` so that rounding in the two sides does not flip the verdict.
"""
import math

import numpy as np

from .errors import ConfigurationError, ShapeError

RELATIVE_SLACK = 1e-12
# constant used in the scalar Holder bound; 2^(1-r) <= 2 suffices for 0 < r < 1
HOLDER_CONSTANT = 2.0


def _pair(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"vectors must have equal 1-D shapes, got {a.shape} and {b.shape}")
    return a, b


def _norm_power_times(x, e):
    """|x|^e x with the value 0 at x = 0 (also for e < 0)."""
    n = float(np.linalg.norm(x))
    if n == 0.0:
        return np.zeros_like(x)
    return n ** e * x


def _verdict(small, large):
    return small <= large + RELATIVE_SLACK * max(abs(small), abs(large))


def power_monotonicity_check(a, b, r):
    """<|a|^r a - |b|^r b, a - b>  >=  2^-r |a - b|^(r+2)."""
    if not r >= 0:
        raise ConfigurationError(f"r must be >= 0, got {r}")
    a, b = _pair(a, b)
    lhs = float(np.dot(_norm_power_times(a, r) - _norm_power_times(b, r), a - b))
    rhs = 2.0 ** (-r) * float(np.linalg.norm(a - b)) ** (r + 2.0)
    return lhs, rhs, _verdict(rhs, lhs)


def power_lipschitz_check(a, b, r):
    """| |a|^(r-1) a - |b|^(r-1) b |  <=  max(r, 1) |a - b| (|a|^(r-1) + |b|^(r-1))."""
    if not r >= 0:
        raise ConfigurationError(f"r must be >= 0, got {r}")
    a, b = _pair(a, b)
    lhs = float(np.linalg.norm(_norm_power_times(a, r - 1.0) - _norm_power_times(b, r - 1.0)))
    dist = float(np.linalg.norm(a - b))
    if dist == 0.0:
        return lhs, 0.0, _verdict(lhs, 0.0)

    def weight(x):
        n = float(np.linalg.norm(x))
        if n == 0.0:
            return math.inf if r < 1 else (1.0 if r == 1 else 0.0)
        return n ** (r - 1.0)

    rhs = max(r, 1.0) * dist * (weight(a) + weight(b))
    return lhs, rhs, _verdict(lhs, rhs)


def power_holder_check(a, b, r, constant=HOLDER_CONSTANT):
    """Scalar bound | |a|^(r-1) a - |b|^(r-1) b |  <=  C |a - b|^r for 0 < r < 1."""
    if not 0 < r < 1:
        raise ConfigurationError(f"the Holder bound needs 0 < r < 1, got {r}")
    a = float(a)
    b = float(b)
    lhs = abs(math.copysign(abs(a) ** r, a) - math.copysign(abs(b) ** r, b))
    rhs = constant * abs(a - b) ** r
    return lhs, rhs, _verdict(lhs, rhs)


def power_bound_check(a, b, r, kind="lipschitz"):
    """Dispatch to :func:`power_lipschitz_check` or :func:`power_holder_check`."""
    if kind == "lipschitz":
        return power_lipschitz_check(a, b, r)
    if kind == "holder":
        return power_holder_check(a, b, r)
    raise ConfigurationError(f"unknown bound kind {kind!r}")
