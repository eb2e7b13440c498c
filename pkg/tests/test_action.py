import json
import math

import numpy as np
import pytest

from mldp import (
    ConfigurationError,
    ConstraintSpec,
    ControlPath,
    DriftSpec,
    OptimizerSettings,
    SolverConfig,
    action_gradient,
    build_triple,
    fd_gradient,
    finite_rank_noise,
    minimize_action,
    objective,
    problem_for,
    scalar_triple,
    solve_skeleton,
)
from mldp.action import _penalty


def ou(n_steps=200, threshold=1.0):
    tr = scalar_triple()
    spec = DriftSpec("scalar_linear", lam=1.0)
    noise = finite_rank_noise(tr, [[1.0]])
    cfg = SolverConfig(1.0, n_steps)
    event = ConstraintSpec("terminal_functional", weights=np.ones(1), threshold=threshold)
    return tr, spec, noise, cfg, event


def discrete_ou_action(n_steps, c):
    """Closed form for the implicit-Euler OU chain: z_N = sum_k dt (1+dt)^-(N-k) phi_k."""
    dt = 1.0 / n_steps
    a = dt * (1 + dt) ** -np.arange(n_steps, 0, -1)
    return c * c / (2.0 * np.sum(a * a) / dt)


def test_constraint_validation():
    with pytest.raises(ConfigurationError):
        ConstraintSpec("bogus")
    with pytest.raises(ConfigurationError):
        ConstraintSpec("terminal_functional")
    with pytest.raises(ConfigurationError):
        ConstraintSpec("terminal_state", target=np.zeros(2), tolerance=-1.0)
    with pytest.raises(ConfigurationError):
        ConstraintSpec("terminal_functional", weights=np.ones(1), threshold=math.nan)


def test_penalty_inactive_gives_energy_gradient(rng):
    tr, spec, noise, cfg, _ = ou(50)
    event = ConstraintSpec("terminal_functional", weights=np.ones(1), threshold=-10.0)
    prob = problem_for([0.0], event, spec, noise, tr, cfg)
    phi = ControlPath(cfg.time_grid, rng.normal(size=(50, 1)))
    value, grad = action_gradient(prob, phi, 100.0)
    assert value == pytest.approx(phi.energy, abs=1e-15)
    assert np.array_equal(grad, cfg.dt * phi.values)


def test_penalty_phr():
    v, d = _penalty(0.5, 10.0, 0.0)
    assert v == pytest.approx(10.0 * 0.25) and d == pytest.approx(10.0)
    v, d = _penalty(-1.0, 10.0, 0.0)
    assert v == 0.0 and d == 0.0
    v, d = _penalty(-1.0, 10.0, 5.0)
    assert v == pytest.approx(-25.0 / 40.0) and d == 0.0


def test_linear_quadratic_gradient_oracle(rng):
    n = 40
    tr, spec, noise, cfg, event = ou(n)
    prob = problem_for([0.0], event, spec, noise, tr, cfg)
    dt = cfg.dt
    a = dt * (1 + dt) ** -np.arange(n, 0, -1)
    for beta in (10.0, 1e3):
        phi = rng.normal(size=n)
        h = 1.0 - np.sum(a * phi)
        expected = dt * phi + (2 * beta * h if h > 0 else 0.0) * (-a)
        value, grad = action_gradient(prob, prob.control(phi), beta)
        assert np.max(np.abs(grad[:, 0] - expected)) <= 1e-10
        assert value == pytest.approx(0.5 * dt * np.sum(phi ** 2) + beta * max(h, 0.0) ** 2, rel=1e-12)


@pytest.mark.parametrize("case", ["p_laplace_tanh", "reaction_affine", "terminal_state", "path_target"])
def test_adjoint_matches_finite_differences(case, rng):
    tr = build_triple(0.0, 1.0, 9, 3.0 if case == "p_laplace_tanh" else 2.0)
    cfg = SolverConfig(0.2, 10)
    shapes = np.column_stack([tr.sine_mode(1), tr.sine_mode(2)])
    if case == "p_laplace_tanh":
        from mldp import Coefficient
        spec = DriftSpec("p_laplace", p=3.0, p_tilde=2.0, eta=(0.5,))
        noise = finite_rank_noise(tr, shapes, (Coefficient("tanh", 1.0, 0.5, tr.sine_mode(1)), Coefficient()))
    else:
        from mldp import Coefficient
        spec = DriftSpec("reaction_diffusion", p_tilde=1.5, eta=(1.0,))
        noise = finite_rank_noise(tr, shapes, (Coefficient("affine", 1.0, 0.3, tr.sine_mode(1)), Coefficient()))
    x0 = 0.5 * tr.sine_mode(1)
    if case == "terminal_state":
        event = ConstraintSpec("terminal_state", target=2.0 * tr.sine_mode(1), tolerance=0.1)
    elif case == "path_target":
        tgt = np.outer(np.linspace(0, 1, cfg.n_steps + 1), 2.0 * tr.sine_mode(1))
        event = ConstraintSpec("path_target", target=tgt, tolerance=0.01)
    else:
        event = ConstraintSpec("terminal_functional", weights=tr.sine_mode(1), threshold=1.0)
    prob = problem_for(x0, event, spec, noise, tr, cfg)
    phi = prob.control(rng.normal(size=prob.shape))
    _, g = action_gradient(prob, phi, 10.0, mu=0.5)
    fd = fd_gradient(prob, phi, 10.0, mu=0.5, step=1e-6)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_feasible_deterministic_path_gives_zero():
    tr, spec, noise, cfg, _ = ou(50)
    event = ConstraintSpec("terminal_functional", weights=np.ones(1), threshold=-0.5)
    res = minimize_action([0.0], event, spec, noise, tr, cfg)
    assert res.feasible and res.value == 0.0
    assert np.all(res.minimizer.values == 0.0)


def test_ou_action_matches_discrete_oracle():
    tr, spec, noise, cfg, event = ou(200)
    res = minimize_action([0.0], event, spec, noise, tr, cfg)
    oracle = discrete_ou_action(200, 1.0)
    assert oracle == pytest.approx(1.160316, abs=1e-6)
    assert res.feasible and res.converged
    assert res.value == pytest.approx(oracle, rel=1e-5)
    assert abs(res.value - 1 / (1 - math.exp(-2))) / (1 / (1 - math.exp(-2))) < 0.01
    assert all(b <= a for a, b in zip(res.violation_history, res.violation_history[1:]))
    assert res.violation <= 1e-6
    z = solve_skeleton([0.0], res.minimizer, spec, noise, tr, cfg)
    assert z.terminal[0] >= 1.0 - 1e-6


def test_quadratic_scaling():
    vals = []
    for c in (0.5, 1.0):
        tr, spec, noise, cfg, event = ou(100, c)
        vals.append(minimize_action([0.0], event, spec, noise, tr, cfg, OptimizerSettings(n_starts=2)).value)
    assert vals[1] / vals[0] == pytest.approx(4.0, rel=0.02)


def test_value_not_above_feasible_start():
    tr, spec, noise, cfg, event = ou(60)
    start = np.full((60, 1), 3.0)
    res = minimize_action([0.0], event, spec, noise, tr, cfg, OptimizerSettings(n_starts=1), starts=[start])
    assert res.value <= ControlPath(cfg.time_grid, start).energy
    assert len(res.multi_start_values) == 2


def test_infeasible_report():
    tr, spec, noise, cfg, _ = ou(20)
    event = ConstraintSpec("terminal_functional", weights=np.ones(1), threshold=math.inf)
    res = minimize_action([0.0], event, spec, noise, tr, cfg)
    assert not res.feasible and res.value == math.inf
    doc = json.loads(res.to_json())
    assert doc["value"] is None and doc["feasible"] is False


def test_result_json_fields():
    tr, spec, noise, cfg, event = ou(40)
    res = minimize_action([0.0], event, spec, noise, tr, cfg, OptimizerSettings(n_starts=2))
    doc = json.loads(res.to_json())
    for key in ("value", "iterations", "gradient_norm_final", "multi_start_values", "converged"):
        assert key in doc
    assert doc["value"] == pytest.approx(res.value)


def test_optimizer_settings_validation():
    with pytest.raises(ConfigurationError):
        OptimizerSettings(n_starts=0)
    with pytest.raises(ConfigurationError):
        OptimizerSettings(betas=(100.0, 10.0))


def test_workers_do_not_change_result():
    tr, spec, noise, cfg, event = ou(50)
    a = minimize_action([0.0], event, spec, noise, tr, cfg, OptimizerSettings(workers=1))
    b = minimize_action([0.0], event, spec, noise, tr, cfg, OptimizerSettings(workers=3))
    assert a.value == b.value and np.array_equal(a.minimizer.values, b.minimizer.values)


def test_objective_matches_gradient_value(rng):
    tr, spec, noise, cfg, event = ou(30)
    prob = problem_for([0.0], event, spec, noise, tr, cfg)
    phi = prob.control(rng.normal(size=prob.shape))
    assert objective(prob, phi, 50.0, 1.0) == action_gradient(prob, phi, 50.0, 1.0)[0]
