"""Finite-difference stand-in for the triple V c H c V* on a 1-D interval.

States are plain ``numpy`` vectors holding values at the interior nodes; the
boundary values are the homogeneous Dirichlet zeros and are never stored.

H is L^2 with trapezoid weights, V is W^{1,alpha}_0 with the gradient taken by
forward differences over cells, and H_n is spanned by the first n discrete sine
modes.
"""
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, ShapeError

PATH_KINDS = ("sde_sample", "skeleton", "galerkin")


@dataclass(frozen=True, eq=False)
class DiscreteTriple:
    domain_left: float
    domain_right: float
    n_cells: int
    node_positions: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    alpha: float
    dirichlet: bool = True

    @property
    def length(self):
        return self.domain_right - self.domain_left

    @property
    def dx(self):
        return self.length / self.n_cells

    @property
    def dim(self):
        """Number of interior nodes, i.e. the dimension of the state space."""
        return self.n_cells - 1

    @property
    def interior_nodes(self):
        return self.node_positions[1:-1]

    @property
    def interior_weights(self):
        return self.quad_weights[1:-1]

    def check_state(self, u, name="state"):
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1:] != (self.dim,):
            raise ShapeError(f"{name} has trailing length {u.shape[-1:]} but the grid has {self.dim} interior nodes")
        return u

    # -- H structure -------------------------------------------------------

    def h_inner(self, u, v):
        u = self.check_state(u, "u")
        v = self.check_state(v, "v")
        return float(np.dot(self.interior_weights, u * v))

    def h_norm(self, u):
        u = self.check_state(u)
        return math.sqrt(float(np.dot(self.interior_weights, u * u)))

    # -- V structure -------------------------------------------------------

    def gradient(self, u):
        """Forward differences over the n_cells cells, Dirichlet ghosts included."""
        u = self.check_state(u)
        pad = [(0, 0)] * (u.ndim - 1) + [(1, 1)]
        return np.diff(np.pad(u, pad), axis=-1) / self.dx

    def v_norm(self, u, alpha=None):
        a = self.alpha if alpha is None else alpha
        g = self.gradient(u)
        return float(np.sum(self.dx * np.abs(g) ** a)) ** (1.0 / a)

    def lebesgue_norm(self, u, alpha=None):
        """(sum w |u|^alpha)^(1/alpha) over interior nodes."""
        a = self.alpha if alpha is None else alpha
        u = self.check_state(u)
        return float(np.dot(self.interior_weights, np.abs(u) ** a)) ** (1.0 / a)

    # -- Laplacian and its inverse ------------------------------------------

    @cached_property
    def laplacian_bands(self):
        """3-point Dirichlet Laplacian in ``solve_banded`` (1, 1) layout."""
        n = self.dim
        h2 = self.dx * self.dx
        ab = np.zeros((3, n))
        ab[0, 1:] = 1.0 / h2
        ab[1, :] = -2.0 / h2
        ab[2, :-1] = 1.0 / h2
        return ab

    def laplacian(self, u):
        u = self.check_state(u)
        pad = [(0, 0)] * (u.ndim - 1) + [(1, 1)]
        w = np.pad(u, pad)
        return (w[..., 2:] - 2.0 * w[..., 1:-1] + w[..., :-2]) / (self.dx * self.dx)

    def inverse_neg_laplacian(self, f):
        """Solve -Delta_h y = f (Dirichlet)."""
        f = self.check_state(f)
        return solve_banded((1, 1), -self.laplacian_bands, f)

    @cached_property
    def laplacian_eigenvalues(self):
        """Eigenvalues -mu_k of Delta_h for sine mode k = 1..dim (mu_k > 0)."""
        k = np.arange(1, self.dim + 1)
        return -(4.0 / self.dx ** 2) * np.sin(k * math.pi / (2 * self.n_cells)) ** 2

    # -- Galerkin subspaces -------------------------------------------------

    @cached_property
    def sine_basis(self):
        """Columns are the discrete sine modes, orthonormal in h_inner."""
        k = np.arange(1, self.dim + 1)
        x = (self.interior_nodes - self.domain_left) / self.length
        modes = np.sin(math.pi * np.outer(x, k))
        return modes * math.sqrt(2.0 / self.length)

    def sine_mode(self, k):
        if not 1 <= k <= self.dim:
            raise ConfigurationError(f"sine mode index {k} outside 1..{self.dim}")
        return self.sine_basis[:, k - 1].copy()

    def project(self, u, n):
        """H-orthogonal projection onto the span of the first n sine modes."""
        n = int(n)
        if not 1 <= n <= self.dim:
            raise ConfigurationError(f"projection rank n={n} outside 1..{self.dim}")
        u = self.check_state(u)
        if n == self.dim:
            return u.copy()
        basis = self.sine_basis[:, :n]
        coeffs = (u * self.interior_weights) @ basis
        return coeffs @ basis.T


def build_triple(domain_left, domain_right, n_cells, alpha):
    """Uniform grid with trapezoid weights on [domain_left, domain_right]."""
    values = (domain_left, domain_right, alpha)
    if not all(math.isfinite(float(x)) for x in values):
        raise ConfigurationError("triple parameters must be finite")
    if int(n_cells) != n_cells or n_cells < 2:
        raise ConfigurationError(f"n_cells must be an integer >= 2, got {n_cells}")
    if not domain_right > domain_left:
        raise ConfigurationError("domain_right must exceed domain_left")
    if not alpha > 1:
        raise ConfigurationError(f"alpha must be > 1, got {alpha}")
    n_cells = int(n_cells)
    nodes = np.linspace(domain_left, domain_right, n_cells + 1)
    dx = (domain_right - domain_left) / n_cells
    weights = np.full(n_cells + 1, dx)
    weights[0] = weights[-1] = 0.5 * dx
    return DiscreteTriple(float(domain_left), float(domain_right), n_cells, nodes, weights, float(alpha))


def scalar_triple(alpha=2.0):
    """One interior node with unit quadrature weight: the scalar surrogate grid."""
    return build_triple(0.0, 2.0, 2, alpha)


@dataclass(frozen=True, eq=False)
class PathRecord:
    time_grid: np.ndarray
    states: np.ndarray
    kind: str
    triple: DiscreteTriple = field(repr=False)

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ConfigurationError(f"unknown path kind {self.kind!r}")
        t = np.asarray(self.time_grid, dtype=np.float64)
        s = np.asarray(self.states, dtype=np.float64)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
            raise ShapeError("time grid must start at 0 and have at least two points")
        dt = np.diff(t)
        if np.max(np.abs(dt - dt[0])) > 1e-12 * max(1.0, t[-1]):
            raise ShapeError("time grid is not uniform")
        if s.shape != (t.size, self.triple.dim):
            raise ShapeError(f"states shape {s.shape} does not match ({t.size}, {self.triple.dim})")
        object.__setattr__(self, "time_grid", t)
        object.__setattr__(self, "states", s)

    @property
    def T(self):
        return float(self.time_grid[-1])

    @property
    def dt(self):
        return float(self.time_grid[1] - self.time_grid[0])

    @property
    def terminal(self):
        return self.states[-1]


def _time_integral(values, dt):
    """Trapezoid rule on a uniform grid."""
    values = np.asarray(values, dtype=np.float64)
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


def path_metric(f, g, alpha=None):
    """sup_t |f-g|_H + (int |f-g|_V^alpha dt)^(1/alpha)."""
    if f.triple is not g.triple and (f.triple.dim != g.triple.dim or f.triple.dx != g.triple.dx):
        raise ShapeError("paths live on different triples")
    if f.time_grid.shape != g.time_grid.shape or np.any(f.time_grid != g.time_grid):
        raise ShapeError("paths have different time grids")
    triple = f.triple
    a = triple.alpha if alpha is None else alpha
    diff = f.states - g.states
    sup_h = max(triple.h_norm(row) for row in diff)
    v_pow = [triple.v_norm(row, a) ** a for row in diff]
    return sup_h + _time_integral(v_pow, f.dt) ** (1.0 / a)
