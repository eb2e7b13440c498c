"""Control energy, the constrained minimum-energy problem and its adjoint gradient.

The continuous problem inf { 1/2 int |phi|^2 : z^phi in A } is discretized with
piecewise-constant controls on the solver grid and the same implicit Euler
recursion used by :mod:`mldp.evolution`.  The constraint ``h(z) <= 0`` is
handled by an augmented Lagrangian (PHR form) whose penalty parameter follows a
fixed increasing schedule; every inner problem is solved by L-BFGS.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.linalg import LinAlgError, solve_banded
from scipy.optimize import minimize

from .errors import ConfigurationError, ShapeError, SolverError
from .evolution import ControlPath, solve_skeleton
from .gelfand import _time_integral
from .operators import (
    banded_transpose,
    drift_jacobian_bands,
    noise_matrix,
    noise_state_jacobian,
)

CONSTRAINT_KINDS = ("terminal_functional", "terminal_state", "path_target")
FEASIBILITY_TOL = 1e-6
BETA_SCHEDULE = (10.0, 1e2, 1e3, 1e4)
TIE_TOL = 1e-10
FD_DISAGREEMENT = 1e-2


def control_energy(control):
    """1/2 sum_k dt |phi_k|^2."""
    return control.energy


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Target set A, written as h(z) <= 0.

    terminal_functional: <g, z_T>_H >= threshold
    terminal_state:      |z_T - target|_H <= tolerance
    path_target:         rho(z, target path) <= tolerance
    """

    kind: str
    weights: np.ndarray = field(default=None, repr=False)
    threshold: float = 0.0
    target: np.ndarray = field(default=None, repr=False)
    tolerance: float = 0.0

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ConfigurationError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "terminal_functional":
            if self.weights is None:
                raise ConfigurationError("terminal_functional needs weights")
            w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
            if not np.all(np.isfinite(w)):
                raise ConfigurationError("constraint weights must be finite")
            if math.isnan(self.threshold):
                raise ConfigurationError("threshold must not be NaN")
            object.__setattr__(self, "weights", w)
        else:
            if self.target is None:
                raise ConfigurationError(f"{self.kind} needs a target")
            tgt = np.asarray(self.target, dtype=np.float64)
            if not np.all(np.isfinite(tgt)):
                raise ConfigurationError("constraint target must be finite")
            if not (math.isfinite(self.tolerance) and self.tolerance >= 0):
                raise ConfigurationError("tolerance must be finite and >= 0")
            if self.kind == "path_target" and tgt.ndim != 2:
                raise ShapeError("path_target needs a (times, nodes) target")
            object.__setattr__(self, "target", tgt)

    def check(self, triple, n_steps):
        if self.kind == "terminal_functional":
            triple.check_state(self.weights, "constraint weights")
        elif self.kind == "terminal_state":
            triple.check_state(self.target, "target state")
        elif self.target.shape != (n_steps + 1, triple.dim):
            raise ShapeError(f"target path {self.target.shape} != ({n_steps + 1}, {triple.dim})")

    def value(self, path):
        """h(z); the constraint holds iff h <= 0."""
        triple = path.triple
        zT = path.terminal
        if self.kind == "terminal_functional":
            if self.threshold == -math.inf:
                return -math.inf
            if self.threshold == math.inf:
                return math.inf
            return self.threshold - triple.h_inner(self.weights, zT)
        if self.kind == "terminal_state":
            return triple.h_norm(zT - self.target) - self.tolerance
        return _rho_to(path, self.target) - self.tolerance

    def violation(self, path):
        return max(0.0, self.value(path))

    def gradient(self, path):
        """Euclidean gradient of h with respect to the path states, shape (times, nodes)."""
        triple = path.triple
        out = np.zeros_like(path.states)
        if self.kind == "terminal_functional":
            if math.isfinite(self.threshold):
                out[-1] = -triple.interior_weights * self.weights
            return out
        if self.kind == "terminal_state":
            e = path.terminal - self.target
            n = triple.h_norm(e)
            if n > 0:
                out[-1] = triple.interior_weights * e / n
            return out
        return _rho_gradient(path, self.target)


def _v_power_gradient(triple, e, alpha):
    """Gradient of sum_c dx |grad e|_c^alpha with respect to the node values."""
    g = triple.gradient(e)
    h = alpha * np.abs(g) ** (alpha - 1.0) * np.sign(g)
    return -np.diff(h)


def _rho_to(path, target):
    triple = path.triple
    a = triple.alpha
    diff = path.states - target
    sup_h = max(triple.h_norm(row) for row in diff)
    s = _time_integral([triple.v_norm(row, a) ** a for row in diff], path.dt)
    return sup_h + s ** (1.0 / a)


def _rho_gradient(path, target):
    triple = path.triple
    a = triple.alpha
    diff = path.states - target
    out = np.zeros_like(diff)
    norms = np.array([triple.h_norm(row) for row in diff])
    k = int(np.argmax(norms))
    if norms[k] > 0:
        out[k] += triple.interior_weights * diff[k] / norms[k]
    powers = np.array([triple.v_norm(row, a) ** a for row in diff])
    s = _time_integral(powers, path.dt)
    if s > 0:
        c = np.full(diff.shape[0], path.dt)
        c[0] = c[-1] = 0.5 * path.dt
        outer = s ** (1.0 / a - 1.0) / a
        for j in range(diff.shape[0]):
            if powers[j] > 0:
                out[j] += outer * c[j] * _v_power_gradient(triple, diff[j], a)
    return out


# -- penalized objective and its adjoint gradient --------------------------------

@dataclass
class _Problem:
    x0: np.ndarray
    constraint: ConstraintSpec
    drift: object
    noise: object
    triple: object
    cfg: object

    @property
    def shape(self):
        return (self.cfg.n_steps, self.noise.modes)

    def control(self, flat):
        return ControlPath(self.cfg.time_grid, np.asarray(flat, dtype=np.float64).reshape(self.shape))

    def forward(self, control):
        return solve_skeleton(self.x0, control, self.drift, self.noise, self.triple, self.cfg)


def _penalty(h, beta, mu):
    """PHR term for h <= 0 with rho = 2 beta; returns (value, dvalue/dh)."""
    if h == -math.inf:
        return -mu * mu / (4.0 * beta), 0.0
    rho = 2.0 * beta
    s = max(0.0, mu + rho * h)
    return (s * s - mu * mu) / (2.0 * rho), s


def objective(problem, control, beta, mu=0.0):
    """J(phi) = 1/2 int |phi|^2 + PHR penalty of the constraint along z^phi."""
    path = problem.forward(control)
    h = problem.constraint.value(path)
    if h == math.inf:
        return math.inf
    return control.energy + _penalty(h, beta, mu)[0]


def action_gradient(problem, control, beta, mu=0.0, path=None):
    """Value and gradient of :func:`objective` by the discrete adjoint.

    The forward map is z_{k+1} - dt A(t_{k+1}, z_{k+1}) = z_k + dt B(t_k, z_k) phi_k.
    Going backwards with q = M_{k+1}^{-T} lam_{k+1}, M = I - dt J_A(z_{k+1}):
    grad_k = dt phi_k + dt B_k^T q and lam_k = (I + dt d_z[B phi_k])^T q + dP/dz_k.
    """
    cfg = problem.cfg
    triple = problem.triple
    drift = problem.drift
    noise = problem.noise
    dt = cfg.dt
    grid = cfg.time_grid
    if path is None:
        path = problem.forward(control)
    h = problem.constraint.value(path)
    if h == math.inf:
        raise ConfigurationError("the constraint set is empty")
    pen, dpen = _penalty(h, beta, mu)
    phi = control.values
    value = control.energy + pen
    grad = dt * phi.copy()
    if dpen == 0.0:
        return value, grad
    path_grad = dpen * problem.constraint.gradient(path)
    states = path.states
    lam = path_grad[-1].copy()
    state_free = noise.is_additive and not noise.is_time_dependent
    cols = noise_matrix(noise, 0.0, states[0], triple) if state_free else None
    for k in range(cfg.n_steps - 1, -1, -1):
        ab = -dt * drift_jacobian_bands(drift, grid[k + 1], states[k + 1], triple)
        ab[1] += 1.0
        try:
            q = solve_banded((1, 1), banded_transpose(ab), lam)
        except (LinAlgError, ValueError) as exc:
            raise SolverError(f"adjoint solve failed at step {k}: {exc}") from exc
        if not state_free:
            cols = noise_matrix(noise, grid[k], states[k], triple)
        grad[k] += dt * (cols.T @ q)
        lam = q
        if not noise.is_additive:
            lam = lam + dt * (noise_state_jacobian(noise, grid[k], states[k], phi[k], triple).T @ q)
        lam = lam + path_grad[k]
    return value, grad


def fd_gradient(problem, control, beta, mu=0.0, step=1e-4):
    """Central differences of :func:`objective`, component by component."""
    base = control.values
    out = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        up = base.copy()
        dn = base.copy()
        up[idx] += step
        dn[idx] -= step
        out[idx] = (objective(problem, problem.control(up), beta, mu)
                    - objective(problem, problem.control(dn), beta, mu)) / (2.0 * step)
    return out


def _adjoint_disagrees(problem, control, beta, mu, rng, step=1e-6):
    """Compare the adjoint with a central difference along one random direction."""
    d = rng.standard_normal(control.values.shape)
    d /= max(np.linalg.norm(d), 1e-300)
    _, g = action_gradient(problem, control, beta, mu)
    ad = float(np.sum(g * d))
    up = problem.control(control.values + step * d)
    dn = problem.control(control.values - step * d)
    fd = (objective(problem, up, beta, mu) - objective(problem, dn, beta, mu)) / (2.0 * step)
    scale = max(abs(ad), abs(fd), 1e-8)
    return abs(ad - fd) / scale > FD_DISAGREEMENT


# -- optimizer ---------------------------------------------------------------------

@dataclass
class OptimizerSettings:
    n_starts: int = 4
    seed: int = 0
    start_scale: float = 1.0
    betas: tuple = BETA_SCHEDULE
    extra_rounds: int = 20
    max_iter: int = 500
    gtol: float = 1e-9
    feasibility_tol: float = FEASIBILITY_TOL
    workers: int = 1

    def __post_init__(self):
        if self.n_starts < 1:
            raise ConfigurationError("n_starts must be >= 1")
        b = tuple(float(x) for x in self.betas)
        if not b or any(x <= 0 for x in b) or any(y < x for x, y in zip(b, b[1:])):
            raise ConfigurationError("betas must be positive and non-decreasing")
        self.betas = b


@dataclass
class ActionResult:
    minimizer: ControlPath
    value: float
    iterations: int
    gradient_norm_final: float
    multi_start_values: list
    converged: bool
    feasible: bool = True
    violation: float = 0.0
    violation_history: list = field(default_factory=list)
    multiplier: float = 0.0

    def to_dict(self):
        def num(x):
            return x if math.isfinite(x) else None
        return {
            "value": num(self.value),
            "iterations": self.iterations,
            "gradient_norm_final": num(self.gradient_norm_final),
            "multi_start_values": [num(v) for v in self.multi_start_values],
            "converged": self.converged,
            "feasible": self.feasible,
            "violation": num(self.violation),
            "violation_history": [num(v) for v in self.violation_history],
            "multiplier": self.multiplier,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


@dataclass
class _Run:
    control: ControlPath
    energy: float
    violation: float
    iterations: int
    grad_norm: float
    converged: bool
    history: list
    multiplier: float
    start_energy: float


def _descend(problem, start, settings, rng):
    """Augmented-Lagrangian rounds over the beta schedule from one start."""
    x = start.values.ravel().copy()
    mu = 0.0
    use_fd = _adjoint_disagrees(problem, start, settings.betas[0], mu, rng)
    history = []
    iterations = 0
    grad_norm = math.nan
    converged = True
    betas = list(settings.betas) + [settings.betas[-1]] * settings.extra_rounds
    for r, beta in enumerate(betas):
        def fun(flat, beta=beta, mu=mu):
            c = problem.control(flat)
            if use_fd:
                return objective(problem, c, beta, mu), fd_gradient(problem, c, beta, mu).ravel()
            v, g = action_gradient(problem, c, beta, mu)
            return v, g.ravel()

        res = minimize(fun, x, jac=True, method="L-BFGS-B",
                       options={"maxcor": 10, "maxiter": settings.max_iter, "gtol": settings.gtol,
                                "ftol": 1e-15})
        x = res.x
        iterations += int(res.nit)
        grad_norm = float(np.linalg.norm(res.jac))
        converged = bool(res.success) or grad_norm <= 1e3 * settings.gtol
        path = problem.forward(problem.control(x))
        h = problem.constraint.value(path)
        history.append(max(0.0, h))
        mu = max(0.0, mu + 2.0 * beta * h)
        if r >= len(settings.betas) - 1 and history[-1] <= settings.feasibility_tol:
            break
    c = problem.control(x)
    return _Run(c, c.energy, history[-1], iterations, grad_norm, converged, history, mu, math.nan)


def _starts(problem, settings, user_starts):
    rng = np.random.default_rng(settings.seed)
    starts = [problem.control(np.zeros(problem.shape))]
    for _ in range(settings.n_starts - 1):
        starts.append(problem.control(settings.start_scale * rng.standard_normal(problem.shape)))
    for s in user_starts or ():
        if not isinstance(s, ControlPath):
            s = problem.control(s)
        if s.values.shape != problem.shape:
            raise ShapeError(f"start control {s.values.shape} != {problem.shape}")
        starts.append(s)
    return starts


def minimize_action(x0, constraint, drift, noise, triple, cfg, settings=None, starts=None):
    """Minimum control energy steering the skeleton from x0 into the constraint set.

    Returns an :class:`ActionResult`; when no feasible control is found the
    value is ``inf`` and ``feasible`` is False (no exception).
    """
    settings = settings or OptimizerSettings()
    x0 = triple.check_state(np.asarray(x0, dtype=np.float64))
    constraint.check(triple, cfg.n_steps)
    if noise.modes == 0:
        raise ConfigurationError("the action problem needs at least one noise mode")
    problem = _Problem(x0, constraint, drift, noise, triple, cfg)
    start_list = _starts(problem, settings, starts)

    def start_violation(s):
        return constraint.violation(problem.forward(s))

    def run(i):
        rng = np.random.default_rng([settings.seed, 1000 + i])
        out = _descend(problem, start_list[i], settings, rng)
        out.start_energy = start_list[i].energy
        return out

    if constraint.kind == "terminal_functional" and constraint.threshold == math.inf:
        z = problem.control(np.zeros(problem.shape))
        return ActionResult(z, math.inf, 0, math.nan, [math.inf] * len(start_list), False,
                            feasible=False, violation=math.inf, violation_history=[math.inf])
    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            runs = list(pool.map(run, range(len(start_list))))
    else:
        runs = [run(i) for i in range(len(start_list))]

    tol = settings.feasibility_tol
    candidates = [r for r in runs if r.violation <= tol]
    # feasible starts are admissible answers as well
    for s in start_list:
        v = start_violation(s)
        if v <= tol:
            candidates.append(_Run(s, s.energy, v, 0, math.nan, True, [v], 0.0, s.energy))
    values = [r.energy if r.violation <= tol else math.inf for r in runs]
    if not candidates:
        best = min(runs, key=lambda r: (r.violation, r.energy))
        return ActionResult(best.control, math.inf, best.iterations, best.grad_norm, values,
                            False, feasible=False, violation=best.violation,
                            violation_history=best.history, multiplier=best.multiplier)
    low = min(r.energy for r in candidates)
    tied = [r for r in candidates if r.energy <= low + TIE_TOL]
    best = min(tied, key=lambda r: (r.start_energy, r.energy))
    return ActionResult(best.control, best.energy, best.iterations, best.grad_norm, values,
                        best.converged, feasible=True, violation=best.violation,
                        violation_history=best.history, multiplier=best.multiplier)


def problem_for(x0, constraint, drift, noise, triple, cfg):
    """Bundle the pieces of the penalized problem for :func:`objective` and friends."""
    x0 = triple.check_state(np.asarray(x0, dtype=np.float64))
    constraint.check(triple, cfg.n_steps)
    return _Problem(x0, constraint, drift, noise, triple, cfg)


__all__ = [
    "ConstraintSpec",
    "ActionResult",
    "OptimizerSettings",
    "control_energy",
    "objective",
    "action_gradient",
    "fd_gradient",
    "minimize_action",
    "problem_for",
]
