"""Drift and noise operator families on a :class:`~mldp.gelfand.DiscreteTriple`.

Drifts are returned as their H-Riesz representatives, i.e. the vector ``a`` with
``<A(t,v), w> = h_inner(a, w)`` for the L^2 families.  The porous-media and
fast-diffusion families live in the triple L^{r+1} c H^{-1} c (L^{r+1})*, so
their duality pairing goes through the inverse Dirichlet Laplacian; see
:func:`pivot_inner`.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import ConfigurationError, NumericError, ShapeError

FAMILIES = (
    "reaction_diffusion",
    "porous_media",
    "fast_diffusion",
    "p_laplace",
    "high_order",
    "scalar_linear",
)
# families whose state space H is the dual of H^1_0
H_MINUS_1_FAMILIES = ("porous_media", "fast_diffusion")
NOISE_FORMS = ("finite_rank", "diagonal_decay")
COEFFICIENT_KINDS = ("constant", "affine", "tanh")

# floor on |x| when differentiating sgn(x)|x|^e with e < 1
_DERIVATIVE_FLOOR = 1e-12


def _time_profile(samples, horizon, t):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 1:
        return float(samples[0])
    grid = np.linspace(0.0, horizon, samples.size)
    return float(np.interp(t, grid, samples))


def _signed_power(x, e):
    """sgn(x) |x|^e, taking the value 0 at x = 0."""
    if e == 1.0:
        return x
    if e == 0.0:
        return np.sign(x)
    a = np.abs(x)
    with np.errstate(over="ignore"):
        return a ** e * np.sign(x)


def _signed_power_derivative(x, e):
    """e |x|^(e-1), the a.e. derivative; |x| is floored when e < 1."""
    if e == 1.0:
        return np.ones_like(x)
    if e == 0.0:
        return np.zeros_like(x)
    a = np.abs(x)
    if e < 1.0:
        a = np.maximum(a, _DERIVATIVE_FLOOR)
    return e * a ** (e - 1.0)


@dataclass(frozen=True)
class DriftSpec:
    family: str
    p: float = 2.0
    p_tilde: float = 2.0
    r: float = 2.0
    eta: tuple = (0.0,)
    eta_horizon: float = 1.0
    kappa: float = 1e-8
    lam: float = 1.0
    order: int = 1
    declared_alpha: float = None
    declared_delta: float = None
    declared_K: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown drift family {self.family!r}; expected one of {FAMILIES}")
        eta = tuple(float(x) for x in np.atleast_1d(self.eta))
        if not eta or not all(math.isfinite(x) for x in eta):
            raise ConfigurationError("eta samples must be finite and non-empty")
        object.__setattr__(self, "eta", eta)
        fam = self.family
        if fam in ("p_laplace", "high_order"):
            if not self.p > 1:
                raise ConfigurationError(f"{fam} requires p > 1, got {self.p}")
            if not 1 <= self.p_tilde <= self.p:
                raise ConfigurationError(f"{fam} requires 1 <= p_tilde <= p, got {self.p_tilde}")
            if fam == "high_order" and self.order != 1:
                raise ConfigurationError("high_order is implemented for order m = 1 only")
        if fam == "reaction_diffusion" and not 1 <= self.p_tilde <= 2:
            raise ConfigurationError(f"reaction_diffusion requires 1 <= p_tilde <= 2, got {self.p_tilde}")
        if fam == "porous_media" and not self.r > 1:
            raise ConfigurationError(f"porous_media requires r > 1, got {self.r}")
        if fam == "fast_diffusion":
            if not 0 < self.r < 1:
                raise ConfigurationError(f"fast_diffusion requires 0 < r < 1, got {self.r}")
            if not self.kappa > 0:
                raise ConfigurationError("fast_diffusion requires kappa > 0")
        if fam == "scalar_linear" and not self.lam >= 0:
            raise ConfigurationError("scalar_linear requires lam >= 0")
        if self.declared_alpha is None:
            object.__setattr__(self, "declared_alpha", self.natural_alpha)
        if not self.declared_alpha > 1:
            raise ConfigurationError(f"declared_alpha must be > 1, got {self.declared_alpha}")
        if self.declared_delta is not None and self.claims_strong_monotonicity and not self.declared_delta > 0:
            raise ConfigurationError("declared_delta must be > 0 when strong monotonicity is claimed")
        if not (math.isfinite(self.declared_K) and self.declared_K >= 0):
            raise ConfigurationError("declared_K must be finite and >= 0")

    @property
    def natural_alpha(self):
        if self.family in ("p_laplace", "high_order"):
            return float(self.p)
        if self.family in H_MINUS_1_FAMILIES:
            return float(self.r) + 1.0
        return 2.0

    @property
    def claims_strong_monotonicity(self):
        if self.family == "fast_diffusion":
            return False
        if self.family in ("p_laplace", "high_order"):
            return self.p >= 2
        return True

    @property
    def pivot(self):
        return "h_minus_1" if self.family in H_MINUS_1_FAMILIES else "l2"

    @property
    def is_linear(self):
        fam = self.family
        if fam == "scalar_linear":
            return True
        lower_linear = self.p_tilde == 2.0 or not any(self.eta)
        if fam in ("p_laplace", "high_order"):
            return self.p == 2.0 and lower_linear
        if fam == "reaction_diffusion":
            return lower_linear
        return False

    @property
    def time_dependent(self):
        return len(self.eta) > 1

    def eta_at(self, t):
        return _time_profile(self.eta, self.eta_horizon, t)

    def psi(self, x):
        if self.family == "porous_media":
            return _signed_power(x, self.r)
        return (np.abs(x) + self.kappa) ** (self.r - 1.0) * x

    def psi_derivative(self, x):
        if self.family == "porous_media":
            return self.r * np.abs(x) ** (self.r - 1.0)
        a = np.abs(x)
        return (a + self.kappa) ** (self.r - 2.0) * (self.r * a + self.kappa)


def drift_apply(spec, t, v, triple):
    """Discrete A(t, v) with homogeneous Dirichlet data."""
    v = triple.check_state(v)
    fam = spec.family
    with np.errstate(over="raise", invalid="raise"):
        try:
            if fam in ("p_laplace", "high_order"):
                if v.ndim == 1:
                    out = _kernels.plaplace_flux_div(np.ascontiguousarray(v), triple.dx, float(spec.p))
                else:
                    g = triple.gradient(v)
                    out = np.diff(_signed_power(g, spec.p - 1.0), axis=-1) / triple.dx
                eta = spec.eta_at(t)
                if eta != 0.0:
                    out = out - eta * _signed_power(v, spec.p_tilde - 1.0)
            elif fam == "reaction_diffusion":
                out = triple.laplacian(v)
                eta = spec.eta_at(t)
                if eta != 0.0:
                    out = out - eta * _signed_power(v, spec.p_tilde - 1.0)
            elif fam in H_MINUS_1_FAMILIES:
                out = triple.laplacian(spec.psi(v)) + spec.eta_at(t) * v
            else:
                out = -spec.lam * v
        except FloatingPointError:
            out = None
    if out is None or not np.all(np.isfinite(out)):
        raise NumericError(f"{fam} drift overflowed", state_norm=float(np.linalg.norm(v)))
    return out


def drift_jacobian_bands(spec, t, v, triple):
    """Jacobian of drift_apply in ``scipy.linalg.solve_banded`` (1, 1) layout.

    At points where the power nonlinearity is not differentiable the a.e.
    derivative is used.
    """
    v = triple.check_state(v)
    n = triple.dim
    ab = np.zeros((3, n))
    fam = spec.family
    h2 = triple.dx * triple.dx
    if fam in ("p_laplace", "high_order", "reaction_diffusion"):
        if fam == "reaction_diffusion":
            d = np.ones(n + 1)
        else:
            d = _signed_power_derivative(triple.gradient(v), spec.p - 1.0)
        ab[0, 1:] = d[1:-1] / h2
        ab[1, :] = -(d[:-1] + d[1:]) / h2
        ab[2, :-1] = d[1:-1] / h2
        eta = spec.eta_at(t)
        if eta != 0.0:
            ab[1, :] -= eta * _signed_power_derivative(v, spec.p_tilde - 1.0)
    elif fam in H_MINUS_1_FAMILIES:
        d = spec.psi_derivative(v)
        ab[0, 1:] = d[1:] / h2
        ab[1, :] = -2.0 * d / h2 + spec.eta_at(t)
        ab[2, :-1] = d[:-1] / h2
    else:
        ab[1, :] = -spec.lam
    return ab


def banded_matvec(ab, x):
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def banded_transpose(ab):
    out = np.zeros_like(ab)
    out[1] = ab[1]
    out[0, 1:] = ab[2, :-1]
    out[2, :-1] = ab[0, 1:]
    return out


# -- pairings and norms of the family's triple --------------------------------

def pivot_inner(spec, triple, u, v):
    """Inner product of the family's pivot space H."""
    if spec.pivot == "l2":
        return triple.h_inner(u, v)
    return triple.h_inner(u, triple.inverse_neg_laplacian(v))


def pivot_norm(spec, triple, u):
    return math.sqrt(max(pivot_inner(spec, triple, u, u), 0.0))


def family_v_norm(spec, triple, u):
    a = spec.declared_alpha
    if spec.pivot == "h_minus_1":
        return triple.lebesgue_norm(u, a)
    return triple.v_norm(u, a)


def dual_norm(spec, triple, f):
    """Norm of f in V*, the pairing being ``pivot_inner(f, .)``."""
    a = spec.declared_alpha
    q = a / (a - 1.0)
    dx = triple.dx
    if spec.pivot == "h_minus_1":
        y = triple.inverse_neg_laplacian(f)
        return float(np.dot(triple.interior_weights, np.abs(y) ** q)) ** (1.0 / q)
    f = triple.check_state(f)
    # <f, w> = sum_c dx g_c G_c with G the right tail sums and sum_c g_c = 0
    tails = np.concatenate((dx * np.cumsum(f[::-1])[::-1], [0.0]))
    if q == 2.0:
        shift = tails.mean()
        return math.sqrt(float(np.sum(dx * (tails - shift) ** 2)))
    lo, hi = float(tails.min()), float(tails.max())
    if hi - lo == 0.0:
        return 0.0

    def objective(s):
        return float(np.sum(dx * np.abs(tails - s) ** q))

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * (hi - lo)})
    return min(objective(res.x), objective(lo), objective(hi)) ** (1.0 / q)


# -- noise ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Coefficient:
    """A Lipschitz scalar functional b(v) of the state."""

    kind: str = "constant"
    value: float = 1.0
    slope: float = 0.0
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in COEFFICIENT_KINDS:
            raise ConfigurationError(f"unknown coefficient kind {self.kind!r}")
        if self.kind != "constant" and self.weights is None:
            raise ConfigurationError(f"{self.kind} coefficient needs weights")

    def _pairing(self, triple, v):
        return triple.h_inner(self.weights, v) if v.ndim == 1 else (v * triple.interior_weights) @ self.weights

    def __call__(self, triple, v):
        if self.kind == "constant":
            return self.value if v.ndim == 1 else np.full(v.shape[:-1], self.value)
        s = self._pairing(triple, v)
        if self.kind == "affine":
            return self.value + self.slope * s
        return self.value + self.slope * np.tanh(s)

    def gradient(self, triple, v):
        """Euclidean gradient of b with respect to the node values."""
        if self.kind == "constant":
            return np.zeros(triple.dim)
        w = triple.interior_weights * self.weights
        if self.kind == "affine":
            return self.slope * w
        return self.slope * (1.0 - math.tanh(self._pairing(triple, v)) ** 2) * w

    def lipschitz(self, triple):
        if self.kind == "constant":
            return 0.0
        return abs(self.slope) * triple.h_norm(self.weights)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """B(t, v) d = sum_i b_i(v) f_i(t) d_i s_i, one U-mode per term."""

    modes: int
    form: str
    shapes: np.ndarray = field(repr=False)
    coefficients: tuple = ()
    time_factors: tuple = ()
    horizon: float = 1.0
    decay_rate: float = None

    def __post_init__(self):
        if self.form not in NOISE_FORMS:
            raise ConfigurationError(f"unknown noise form {self.form!r}")
        if int(self.modes) != self.modes or self.modes < 0:
            raise ConfigurationError("modes must be a non-negative integer")
        shapes = np.asarray(self.shapes, dtype=np.float64)
        if shapes.ndim != 2 or shapes.shape[1] != self.modes:
            raise ShapeError(f"shapes must be (nodes, modes={self.modes}), got {shapes.shape}")
        if not np.all(np.isfinite(shapes)):
            raise ConfigurationError("noise mode shapes must be finite")
        object.__setattr__(self, "shapes", shapes)
        if len(self.coefficients) != self.modes:
            raise ShapeError("one coefficient per mode is required")
        factors = self.time_factors or tuple((1.0,) for _ in range(self.modes))
        factors = tuple(tuple(float(x) for x in np.atleast_1d(f)) for f in factors)
        if len(factors) != self.modes:
            raise ShapeError("one time factor per mode is required")
        object.__setattr__(self, "time_factors", factors)

    @property
    def is_additive(self):
        return all(c.kind == "constant" for c in self.coefficients)

    @property
    def is_time_dependent(self):
        return any(len(f) > 1 for f in self.time_factors)

    def time_scales(self, t):
        return np.array([_time_profile(f, self.horizon, t) for f in self.time_factors])

    def lipschitz_constants(self, triple):
        return [c.lipschitz(triple) for c in self.coefficients]


def zero_noise(triple):
    return NoiseSpec(0, "finite_rank", np.zeros((triple.dim, 0)), ())


def finite_rank_noise(triple, shapes, coefficients=None, time_factors=(), horizon=1.0):
    shapes = np.atleast_2d(np.asarray(shapes, dtype=np.float64))
    if shapes.shape[0] != triple.dim and shapes.shape[1] == triple.dim:
        shapes = shapes.T
    m = shapes.shape[1]
    if coefficients is None:
        coefficients = tuple(Coefficient() for _ in range(m))
    return NoiseSpec(m, "finite_rank", shapes, tuple(coefficients), tuple(time_factors), horizon)


def diagonal_decay_noise(triple, modes, decay_rate, amplitude=1.0):
    if not decay_rate > 0.5:
        raise ConfigurationError("decay_rate must exceed 1/2")
    if not 0 <= modes <= triple.dim:
        raise ConfigurationError(f"diagonal_decay needs 0 <= modes <= {triple.dim}")
    j = np.arange(1, modes + 1)
    shapes = triple.sine_basis[:, :modes] * (amplitude * j ** (-float(decay_rate)))
    coeffs = tuple(Coefficient() for _ in range(modes))
    return NoiseSpec(int(modes), "diagonal_decay", shapes, coeffs, decay_rate=float(decay_rate))


def noise_matrix(spec, t, v, triple):
    """Columns B(t, v) e_j, shape (nodes, modes)."""
    v = triple.check_state(v)
    if spec.modes == 0:
        return np.zeros((triple.dim, 0))
    b = np.array([c(triple, v) for c in spec.coefficients])
    scale = b * spec.time_scales(t) if spec.is_time_dependent else b
    return spec.shapes * scale


def noise_apply(spec, t, v, direction, triple):
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != (spec.modes,):
        raise ShapeError(f"direction has shape {direction.shape}, noise has {spec.modes} modes")
    if spec.modes == 0:
        return np.zeros(triple.dim)
    return noise_matrix(spec, t, v, triple) @ direction


def noise_state_jacobian(spec, t, v, direction, triple):
    """d/dv [B(t, v) direction] as a dense (nodes, nodes) matrix."""
    out = np.zeros((triple.dim, triple.dim))
    if spec.modes == 0 or spec.is_additive:
        return out
    scales = spec.time_scales(t)
    for i, c in enumerate(spec.coefficients):
        if c.kind == "constant" or direction[i] == 0.0:
            continue
        out += np.outer(spec.shapes[:, i] * (scales[i] * direction[i]), c.gradient(triple, v))
    return out


def hs_norm(spec, t, v, triple, drift=None):
    """Hilbert-Schmidt norm of B(t, v); measured in the drift's pivot space if given."""
    cols = noise_matrix(spec, t, v, triple)
    if cols.shape[1] == 0:
        return 0.0
    if drift is None or drift.pivot == "l2":
        return math.sqrt(float(np.sum(triple.interior_weights[:, None] * cols * cols)))
    return math.sqrt(sum(pivot_inner(drift, triple, c, c) for c in cols.T))
