"""Small-noise large deviations for monotone stochastic evolution equations.

Finite-difference Gelfand triples, implicit Euler integration of the SDE and of
its controlled skeleton, the minimum-energy (rate function) problem, and
plain / importance-sampled rare-event estimation.
"""
__version__ = "0.1.0"

from .errors import ConfigurationError, MldpError, NumericError, ShapeError, SolverError
from .gelfand import DiscreteTriple, PathRecord, build_triple, path_metric, scalar_triple
from .operators import (
    Coefficient,
    DriftSpec,
    NoiseSpec,
    diagonal_decay_noise,
    drift_apply,
    finite_rank_noise,
    hs_norm,
    noise_apply,
    zero_noise,
)
from .inequalities import (
    power_bound_check,
    power_holder_check,
    power_lipschitz_check,
    power_monotonicity_check,
)
from .conditions import ConditionEntry, ConditionReport, verify_conditions
from .evolution import (
    ControlPath,
    NoiseDraw,
    SolverConfig,
    deterministic_path,
    galerkin_simulate,
    implicit_step,
    simulate,
    solve_skeleton,
    stability_terms,
)
from .action import (
    ActionResult,
    ConstraintSpec,
    OptimizerSettings,
    action_gradient,
    control_energy,
    fd_gradient,
    minimize_action,
    objective,
    problem_for,
)
from .rare_event import EstimateRecord, LdpTable, estimate_probability, importance_estimate, ldp_sweep
