"""Drift-implicit, noise-explicit Euler integration.

All four integrators share one recursion::

    x_{k+1} - dt A(t_{k+1}, x_{k+1}) = x_k + dt B(t_k, x_k) phi_k + eps Q B(t_k, x_k) dW_k

with ``Q`` the identity or the Galerkin projection.  ``eps = 0`` skips the noise
term entirely, which is what makes the skeleton and the noise-free SDE agree
bitwise.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from .errors import ConfigurationError, ShapeError, SolverError, NumericError
from .gelfand import PathRecord
from .operators import (
    banded_matvec,
    drift_apply,
    drift_jacobian_bands,
    noise_matrix,
)


@dataclass(frozen=True)
class SolverConfig:
    T: float = 1.0
    n_steps: int = 100
    picard_tol: float = 1e-10
    picard_max_iters: int = 200
    damping: float = 0.5
    newton_fallback: bool = True
    newton_max_iters: int = 50

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigurationError(f"T must be finite and > 0, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be an integer >= 1, got {self.n_steps}")
        if not self.picard_tol > 0:
            raise ConfigurationError("picard_tol must be > 0")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must lie in (0, 1]")
        if self.picard_max_iters < 1:
            raise ConfigurationError("picard_max_iters must be >= 1")

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def time_grid(self):
        grid = np.arange(self.n_steps + 1) * self.dt
        grid[-1] = self.T
        return grid


@dataclass(frozen=True, eq=False)
class ControlPath:
    """Piecewise-constant control; row k acts on [t_k, t_{k+1})."""

    time_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.time_grid, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != t.size - 1:
            raise ShapeError(f"control values {v.shape} do not match {t.size - 1} intervals")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("control values must be finite")
        object.__setattr__(self, "time_grid", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, cfg, modes):
        return cls(cfg.time_grid, np.zeros((cfg.n_steps, modes)))

    @classmethod
    def constant(cls, cfg, value):
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        return cls(cfg.time_grid, np.tile(value, (cfg.n_steps, 1)))

    @property
    def modes(self):
        return self.values.shape[1]

    @property
    def dt(self):
        return float(self.time_grid[1] - self.time_grid[0])

    @property
    def energy(self):
        return 0.5 * self.dt * float(np.sum(self.values * self.values))

    def scaled(self, c):
        return ControlPath(self.time_grid, c * self.values)


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    """Brownian increments, shape (n_steps, modes), reproducible from (seed, sample)."""

    seed: int
    increments: np.ndarray = field(repr=False)
    sample: int = 0

    @classmethod
    def generate(cls, seed, n_steps, modes, dt, sample=0):
        z = _kernels.fill_normals(seed, sample, 1, n_steps * modes)[0]
        return cls(int(seed), math.sqrt(dt) * z.reshape(n_steps, modes), int(sample))

    @classmethod
    def for_config(cls, seed, cfg, noise, sample=0):
        return cls.generate(seed, cfg.n_steps, noise.modes, cfg.dt, sample)


def _check_contractive(drift, dt):
    if dt * drift.declared_K >= 1.0:
        raise ConfigurationError(
            f"dt * declared_K = {dt * drift.declared_K:.3g} >= 1; refine the time grid")


def _residual(x, rhs, t, dt, drift, triple):
    return x - dt * drift_apply(drift, t, x, triple) - rhs


def _newton(x, rhs, t, dt, drift, triple, cfg):
    r = _residual(x, rhs, t, dt, drift, triple)
    res = triple.h_norm(r)
    for _ in range(cfg.newton_max_iters):
        if res <= cfg.picard_tol:
            return x, res
        ab = -dt * drift_jacobian_bands(drift, t, x, triple)
        ab[1] += 1.0
        step = solve_banded((1, 1), ab, r)
        lam = 1.0
        while True:
            trial = x - lam * step
            try:
                r_trial = _residual(trial, rhs, t, dt, drift, triple)
                res_trial = triple.h_norm(r_trial)
            except NumericError:
                res_trial = math.inf
            if res_trial < res or lam < 1e-6:
                break
            lam *= 0.5
        if not res_trial < res:
            break
        x, r, res = trial, r_trial, res_trial
    return x, res


def _colour_sweep(x, state, tn, dt, drift, triple, colour, iters=60):
    """Solve the nodal equations of one colour exactly with the other colour frozen.

    Nodes of one colour do not couple through the 3-point stencils, so every
    nodal residual is a monotone function of its own unknown alone and all of
    them are bracketed and bisected at once.
    """
    idx = np.arange(colour, triple.dim, 2)
    if idx.size == 0:
        return x

    def nodal(values):
        y = x.copy()
        y[idx] = values
        return _residual(y, state, tn, dt, drift, triple)[idx]

    r0 = nodal(x[idx])
    width = np.maximum(2.0 * np.abs(r0), 1e-300)
    lo = x[idx] - width
    hi = x[idx] + width
    for _ in range(60):
        bad_lo = nodal(lo) > 0
        bad_hi = nodal(hi) < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2.0 * width, width)
        lo = np.where(bad_lo, x[idx] - width, lo)
        hi = np.where(bad_hi, x[idx] + width, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = nodal(mid) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    x = x.copy()
    x[idx] = 0.5 * (lo + hi)
    return x


def _polish(x, state, tn, dt, drift, triple, cfg, rounds=20, sweeps=4):
    """Alternate red-black nonlinear Gauss-Seidel sweeps with Newton.

    Used when Newton alone stalls next to a point where a power nonlinearity
    has unbounded slope; the sweeps resolve those nodes, Newton the coupling.
    """
    res = triple.h_norm(_residual(x, state, tn, dt, drift, triple))
    for _ in range(rounds):
        if res <= cfg.picard_tol:
            break
        for _ in range(sweeps):
            x = _colour_sweep(x, state, tn, dt, drift, triple, 0)
            x = _colour_sweep(x, state, tn, dt, drift, triple, 1)
        x, res = _newton(x, state, tn, dt, drift, triple, cfg)
    return x, res


def _picard(x, state, tn, dt, drift, triple, cfg):
    theta = cfg.damping
    res0 = res = triple.h_norm(_residual(x, state, tn, dt, drift, triple))
    for it in range(cfg.picard_max_iters):
        if res <= cfg.picard_tol:
            break
        x_new = (1.0 - theta) * x + theta * (state + dt * drift_apply(drift, tn, x, triple))
        res_new = triple.h_norm(_residual(x_new, state, tn, dt, drift, triple))
        stalled = not res_new < res or (it >= 9 and res_new > 0.5 * res0)
        if res_new < res:
            x, res = x_new, res_new
        if stalled and cfg.newton_fallback:
            break
    return x, res


def implicit_step(state, t, dt, drift, triple, cfg, guess=None):
    """Solve x - dt A(t + dt, x) = state.

    Linear drifts are solved directly.  Otherwise Newton with the analytic
    tridiagonal Jacobian and backtracking runs first (when enabled); damped
    Picard iteration is the fallback, and Newton is restarted from its result
    and from ``state`` before giving up.
    """
    _check_contractive(drift, dt)
    state = triple.check_state(state)
    tn = t + dt
    if drift.is_linear:
        ab = -dt * drift_jacobian_bands(drift, tn, state, triple)
        ab[1] += 1.0
        return solve_banded((1, 1), ab, state)
    x0 = state.copy() if guess is None else np.array(guess, dtype=np.float64)
    best = math.inf
    starts = [x0] if guess is None else [x0, state.copy()]
    if cfg.newton_fallback:
        for start in starts:
            try:
                x, res = _newton(start, state, tn, dt, drift, triple, cfg)
            except NumericError:
                continue
            if res <= cfg.picard_tol:
                return x
            best = min(best, res)
    try:
        x, res = _picard(x0, state, tn, dt, drift, triple, cfg)
    except NumericError:
        raise SolverError("Picard iteration overflowed", residual=math.inf)
    if res > cfg.picard_tol and cfg.newton_fallback:
        x, res = _newton(x, state, tn, dt, drift, triple, cfg)
        if res > cfg.picard_tol:
            x, res = _polish(x, state, tn, dt, drift, triple, cfg)
    if res <= cfg.picard_tol:
        return x
    best = min(best, res)
    raise SolverError(f"implicit step did not converge (residual {best:.3e})", residual=best)


def _integrate(x0, drift, noise, triple, cfg, control=None, eps=0.0, increments=None,
               galerkin_rank=None, kind="skeleton"):
    x = triple.check_state(np.array(x0, dtype=np.float64))
    _check_contractive(drift, cfg.dt)
    grid = cfg.time_grid
    dt = cfg.dt
    n = cfg.n_steps
    phi = None
    if control is not None:
        if control.values.shape != (n, noise.modes):
            raise ShapeError(f"control shape {control.values.shape} != ({n}, {noise.modes})")
        if control.time_grid.size != grid.size or np.max(np.abs(control.time_grid - grid)) > 1e-12 * cfg.T:
            raise ShapeError("control grid does not match the solver grid")
        phi = control.values if np.any(control.values) else None
    if eps != 0.0:
        if increments is None or increments.shape != (n, noise.modes):
            raise ShapeError(f"noise increments must have shape ({n}, {noise.modes})")
    states = np.empty((n + 1, triple.dim))
    states[0] = x
    needs_b = noise.modes > 0 and (phi is not None or eps != 0.0)
    cols = noise_matrix(noise, 0.0, x, triple) if needs_b else None
    state_free = noise.is_additive and not noise.is_time_dependent
    for k in range(n):
        t = grid[k]
        rhs = x
        if needs_b:
            if not state_free and k > 0:
                cols = noise_matrix(noise, t, x, triple)
            if phi is not None:
                rhs = rhs + dt * (cols @ phi[k])
            if eps != 0.0:
                shock = cols @ increments[k]
                if galerkin_rank is not None:
                    shock = triple.project(shock, galerkin_rank)
                rhs = rhs + eps * shock
        x = implicit_step(rhs, t, dt, drift, triple, cfg, guess=x)
        states[k + 1] = x
    return PathRecord(grid, states, kind, triple)


def solve_skeleton(x0, control, drift, noise, triple, cfg):
    """Controlled deterministic equation dz/dt = A(t, z) + B(t, z) phi_t."""
    return _integrate(x0, drift, noise, triple, cfg, control=control, kind="skeleton")


def simulate(x0, eps, control, drift, noise, triple, cfg, draw=None):
    """Small-noise SDE, optionally with an extra control drift B(t, X) v_t."""
    if eps < 0:
        raise ConfigurationError("eps must be >= 0")
    if eps == 0.0:
        return _integrate(x0, drift, noise, triple, cfg, control=control, kind="skeleton")
    if draw is None:
        raise ShapeError("a NoiseDraw is required for eps > 0")
    return _integrate(x0, drift, noise, triple, cfg, control=control, eps=float(eps),
                      increments=draw.increments, kind="sde_sample")


def galerkin_simulate(n, x0, eps, drift, noise, triple, cfg, draw=None, control=None):
    """Same recursion with the noise term projected onto the first n sine modes."""
    if not 1 <= n <= triple.dim:
        raise ConfigurationError(f"Galerkin rank {n} outside 1..{triple.dim}")
    if eps < 0:
        raise ConfigurationError("eps must be >= 0")
    if eps == 0.0:
        return _integrate(x0, drift, noise, triple, cfg, control=control, kind="galerkin")
    if draw is None:
        raise ShapeError("a NoiseDraw is required for eps > 0")
    return _integrate(x0, drift, noise, triple, cfg, control=control, eps=float(eps),
                      increments=draw.increments, galerkin_rank=int(n), kind="galerkin")


def deterministic_path(x0, drift, noise, triple, cfg):
    return solve_skeleton(x0, ControlPath.zeros(cfg, noise.modes), drift, noise, triple, cfg)


def residual_norm(x, state, t, dt, drift, triple):
    """H-norm of x - dt A(t + dt, x) - state, for diagnostics."""
    return triple.h_norm(_residual(x, state, t + dt, dt, drift, triple))


__all__ = [
    "SolverConfig",
    "ControlPath",
    "NoiseDraw",
    "implicit_step",
    "solve_skeleton",
    "simulate",
    "galerkin_simulate",
    "deterministic_path",
    "residual_norm",
    "stability_terms",
    "banded_matvec",
]


def stability_terms(x0, phi, psi, drift, noise, triple, cfg, delta=None):
    """Both sides of the Gronwall stability estimate for two controls.

    Returns ``(measured, bound)`` with
    measured = sup_t |z^phi - z^psi|_H^2 + delta int |z^phi - z^psi|_V^alpha dt and
    bound = exp(int K + |phi|^2 + |B(t, z^psi)|_HS^2 dt) int |phi - psi|^2 dt,
    all time integrals taken on the solver grid.
    """
    from .gelfand import _time_integral
    from .operators import family_v_norm, hs_norm, pivot_norm

    zp = solve_skeleton(x0, phi, drift, noise, triple, cfg)
    zq = solve_skeleton(x0, psi, drift, noise, triple, cfg)
    if delta is None:
        delta = drift.declared_delta if drift.declared_delta is not None else 0.0
    alpha = drift.declared_alpha
    diff = zp.states - zq.states
    sup_h = max(pivot_norm(drift, triple, row) ** 2 for row in diff)
    v_int = _time_integral([family_v_norm(drift, triple, row) ** alpha for row in diff], cfg.dt)
    measured = sup_h + delta * v_int
    dt = cfg.dt
    hs = np.array([hs_norm(noise, cfg.time_grid[k], zq.states[k], triple, drift) ** 2
                   for k in range(cfg.n_steps)])
    rate = dt * float(np.sum(drift.declared_K + np.sum(phi.values ** 2, axis=1) + hs))
    gap = dt * float(np.sum((phi.values - psi.values) ** 2))
    return measured, math.exp(rate) * gap
