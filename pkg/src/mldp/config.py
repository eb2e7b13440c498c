"""Experiment configuration: one JSON document shared by every subcommand.

Sections: triple, drift, noise, initial, solver, event, optimizer, eps_list,
budgets, seed, output_dir, conditions, simulate.  Everything is validated
(including cross-field consistency) before any computation starts.
"""
from dataclasses import dataclass, field
import copy
import hashlib
import json
import math
import os

import numpy as np

from .action import ConstraintSpec, OptimizerSettings
from .errors import ConfigurationError, MldpError
from .evolution import SolverConfig
from .gelfand import build_triple, scalar_triple
from .operators import (
    Coefficient,
    DriftSpec,
    diagonal_decay_noise,
    finite_rank_noise,
    zero_noise,
)

_DRIFT_KEYS = ("family", "p", "p_tilde", "r", "eta", "eta_horizon", "kappa", "lam", "order",
               "declared_alpha", "declared_delta", "declared_K")
_SOLVER_KEYS = ("T", "n_steps", "picard_tol", "picard_max_iters", "damping", "newton_fallback",
                "newton_max_iters")
_OPT_KEYS = ("n_starts", "seed", "start_scale", "betas", "extra_rounds", "max_iter", "gtol",
             "feasibility_tol")
_HASH_EXCLUDED = ("output_dir",)


def _section(doc, name, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigurationError(f"missing section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ConfigurationError(f"section {name!r} must be an object")
    return sec


def _pick(sec, keys, where):
    unknown = set(sec) - set(keys)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")
    return {k: sec[k] for k in keys if k in sec}


def _triple(sec):
    alpha = float(sec.get("alpha", 2.0))
    if sec.get("scalar"):
        return scalar_triple(alpha)
    try:
        return build_triple(float(sec.get("left", 0.0)), float(sec.get("right", 1.0)),
                            sec["n_cells"], alpha)
    except KeyError:
        raise ConfigurationError("triple: n_cells is required") from None


def _drift(sec):
    kw = _pick(sec, _DRIFT_KEYS, "drift")
    if "family" not in kw:
        raise ConfigurationError("drift: family is required")
    if "eta" in kw:
        kw["eta"] = tuple(float(x) for x in np.atleast_1d(kw["eta"]))
    return DriftSpec(**kw)


def _shape(triple, spec):
    """One noise mode shape from its description."""
    if "sine_mode" in spec:
        return float(spec.get("amplitude", 1.0)) * triple.sine_mode(int(spec["sine_mode"]))
    if "gaussian" in spec:
        g = spec["gaussian"]
        x = triple.interior_nodes
        c = float(g.get("center", 0.5 * (triple.domain_left + triple.domain_right)))
        w = float(g.get("width", 0.1 * triple.length))
        if not w > 0:
            raise ConfigurationError("gaussian noise shape needs width > 0")
        return float(g.get("amplitude", 1.0)) * np.exp(-0.5 * ((x - c) / w) ** 2)
    if "values" in spec:
        return triple.check_state(np.asarray(spec["values"], dtype=np.float64), "noise shape")
    raise ConfigurationError(f"noise shape needs one of sine_mode, gaussian, values: {spec}")


def _coefficient(triple, spec):
    kind = spec.get("kind", "constant")
    weights = spec.get("weights")
    if weights is not None:
        weights = _shape(triple, weights) if isinstance(weights, dict) else np.asarray(weights, dtype=np.float64)
    return Coefficient(kind, float(spec.get("value", 1.0)), float(spec.get("slope", 0.0)), weights)


def _noise(sec, triple):
    form = sec.get("form", "none")
    if form == "none":
        return zero_noise(triple)
    if form == "diagonal_decay":
        return diagonal_decay_noise(triple, int(sec["modes"]), float(sec["decay_rate"]),
                                    float(sec.get("amplitude", 1.0)))
    if form != "finite_rank":
        raise ConfigurationError(f"unknown noise form {form!r}")
    shapes = sec.get("shapes")
    if not shapes:
        raise ConfigurationError("finite_rank noise needs a non-empty shapes list")
    cols = np.column_stack([_shape(triple, s) for s in shapes])
    coeffs = sec.get("coefficients")
    coeffs = None if coeffs is None else tuple(_coefficient(triple, c) for c in coeffs)
    return finite_rank_noise(triple, cols, coeffs, tuple(sec.get("time_factors", ())),
                             float(sec.get("horizon", 1.0)))


def _initial(sec, triple):
    kind = sec.get("kind", "zero")
    if kind == "zero":
        return np.zeros(triple.dim)
    if kind == "constant":
        return np.full(triple.dim, float(sec["value"]))
    return _shape(triple, {k: v for k, v in sec.items() if k != "kind"} if kind != "values" else sec)


def _event(sec, triple, cfg):
    if not sec:
        return None
    kind = sec.get("kind", "terminal_functional")
    if kind == "terminal_functional":
        w = sec.get("weights", "ones")
        if isinstance(w, str):
            if w != "ones":
                raise ConfigurationError(f"unknown weights keyword {w!r}")
            w = np.ones(triple.dim)
        elif isinstance(w, dict):
            w = _shape(triple, w)
        return ConstraintSpec(kind, weights=np.asarray(w, dtype=np.float64),
                              threshold=float(sec["threshold"]))
    if kind == "terminal_state":
        tgt = sec["target"]
        tgt = _shape(triple, tgt) if isinstance(tgt, dict) else np.asarray(tgt, dtype=np.float64)
        return ConstraintSpec(kind, target=tgt, tolerance=float(sec.get("tolerance", 0.0)))
    if kind == "path_target":
        return ConstraintSpec(kind, target=np.asarray(sec["target"], dtype=np.float64),
                              tolerance=float(sec.get("tolerance", 0.0)))
    raise ConfigurationError(f"unknown event kind {kind!r}")


def _canonical(x):
    """Numbers as floats so 1 and 1.0 hash alike; dict keys sorted by json."""
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, dict):
        return {k: _canonical(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_canonical(v) for v in x]
    raise ConfigurationError(f"unsupported value in config: {x!r}")


def config_hash(doc):
    """sha256 over the canonical JSON of every semantically relevant field."""
    body = {k: v for k, v in doc.items() if k not in _HASH_EXCLUDED}
    text = json.dumps(_canonical(body), sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ExperimentConfig:
    doc: dict = field(repr=False)
    triple: object = field(repr=False)
    drift: DriftSpec
    noise: object = field(repr=False)
    x0: np.ndarray = field(repr=False)
    solver: SolverConfig
    event: ConstraintSpec = field(repr=False)
    optimizer: OptimizerSettings
    eps_list: list
    budgets: list
    seed: int
    output_dir: str
    conditions: dict
    simulate: dict

    @property
    def hash(self):
        return config_hash(self.doc)

    def with_overrides(self, **top):
        doc = copy.deepcopy(self.doc)
        doc.update(top)
        return from_dict(doc, base_dir=None)


def from_dict(doc, base_dir=None):
    """Build and validate a configuration; raises ConfigurationError on any violation."""
    if not isinstance(doc, dict):
        raise ConfigurationError("the configuration must be a JSON object")
    known = {"triple", "drift", "noise", "initial", "solver", "event", "optimizer", "eps_list",
             "budgets", "seed", "output_dir", "conditions", "simulate", "description"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"unknown top-level keys {sorted(unknown)}")
    try:
        triple = _triple(_section(doc, "triple"))
        drift = _drift(_section(doc, "drift"))
        noise = _noise(_section(doc, "noise", required=False), triple)
        x0 = _initial(_section(doc, "initial", required=False), triple)
        solver = SolverConfig(**_pick(_section(doc, "solver"), _SOLVER_KEYS, "solver"))
        event = _event(_section(doc, "event", required=False), triple, solver)
        optimizer = OptimizerSettings(**_pick(_section(doc, "optimizer", required=False), _OPT_KEYS, "optimizer"))
    except (TypeError, KeyError, ValueError) as exc:
        if isinstance(exc, MldpError):
            raise
        raise ConfigurationError(f"invalid configuration: {exc}") from exc

    # cross-field consistency
    if abs(triple.alpha - drift.declared_alpha) > 1e-12:
        raise ConfigurationError(
            f"triple.alpha = {triple.alpha} differs from the drift's alpha = {drift.declared_alpha}")
    if solver.dt * drift.declared_K >= 1.0:
        raise ConfigurationError(f"dt * declared_K = {solver.dt * drift.declared_K:.3g} must be < 1")
    if event is not None:
        event.check(triple, solver.n_steps)
    eps_list = [float(e) for e in doc.get("eps_list", [])]
    if any(not (math.isfinite(e) and e > 0) for e in eps_list):
        raise ConfigurationError("eps_list entries must be finite and > 0")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps_list must be strictly decreasing")
    budgets = [int(b) for b in doc.get("budgets", [])]
    if eps_list and len(budgets) not in (1, len(eps_list)):
        raise ConfigurationError("budgets must have one entry or one per eps")
    if any(b < 1 for b in budgets):
        raise ConfigurationError("budgets must be >= 1")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    output_dir = doc.get("output_dir", "mldp_out")
    if base_dir is not None and not os.path.isabs(output_dir):
        output_dir = os.path.join(base_dir, output_dir)
    conditions = dict(_section(doc, "conditions", required=False))
    simulate = dict(_section(doc, "simulate", required=False))
    return ExperimentConfig(doc, triple, drift, noise, x0, solver, event, optimizer, eps_list,
                            budgets, seed, output_dir, conditions, simulate)


def load(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from exc
    return from_dict(doc, base_dir=None)


def bundled(name):
    """Path of a configuration shipped with the package (e.g. "ou_sweep")."""
    here = os.path.join(os.path.dirname(__file__), "data", name if name.endswith(".json") else name + ".json")
    if not os.path.exists(here):
        raise ConfigurationError(f"no bundled configuration {name!r}")
    return here
