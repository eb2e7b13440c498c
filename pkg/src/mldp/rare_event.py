"""Plain and importance-sampled Monte Carlo for P(X^eps in A), and eps-sweeps.

Samples are processed in fixed blocks of ``BLOCK`` paths.  Sample ``i`` always
draws its Brownian increments from the counter stream ``(seed, i)``, and block
partial sums are combined in block order, so every estimate is a pure function
of the seed and does not depend on how many worker threads ran the blocks.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import io
import math

import numpy as np

from . import _kernels
from .action import ConstraintSpec, minimize_action
from .errors import ConfigurationError, ShapeError
from .evolution import ControlPath, NoiseDraw, simulate
from .operators import noise_matrix

BLOCK = 4096
Z95 = 1.959963984540054
CROSSOVER = 100.0
CSV_HEADER = "eps,n,hits,p_hat,ci_low,ci_high,log_stat,gap,estimator,ess"


@dataclass
class EstimateRecord:
    eps: float
    n_samples: int
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float
    log_stat: float
    estimator: str = "plain"
    ess: float = 0.0

    @property
    def corrected_p(self):
        return (self.hits + 0.5) / (self.n_samples + 1.0)


def wilson_interval(hits, n, z=Z95):
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


# -- log-space accumulators ---------------------------------------------------------

@dataclass
class _LogSum:
    """sum exp(l_i) held as exp(top) * scaled."""

    top: float = -math.inf
    scaled: float = 0.0

    @classmethod
    def of(cls, logs):
        if logs.size == 0:
            return cls()
        top = float(np.max(logs))
        return cls(top, float(np.sum(np.exp(logs - top))))

    def add(self, other):
        if other.top == -math.inf:
            return self
        if self.top == -math.inf:
            return _LogSum(other.top, other.scaled)
        top = max(self.top, other.top)
        return _LogSum(top, self.scaled * math.exp(self.top - top) + other.scaled * math.exp(other.top - top))

    @property
    def log(self):
        return self.top + math.log(self.scaled) if self.scaled > 0 else -math.inf


@dataclass
class _Block:
    hits: int = 0
    hit_w: _LogSum = field(default_factory=_LogSum)
    hit_w2: _LogSum = field(default_factory=_LogSum)
    all_w: _LogSum = field(default_factory=_LogSum)
    all_w2: _LogSum = field(default_factory=_LogSum)

    @classmethod
    def of(cls, hit, logw):
        lw = logw[hit]
        return cls(int(np.count_nonzero(hit)), _LogSum.of(lw), _LogSum.of(2.0 * lw),
                   _LogSum.of(logw), _LogSum.of(2.0 * logw))

    def add(self, other):
        return _Block(self.hits + other.hits, self.hit_w.add(other.hit_w), self.hit_w2.add(other.hit_w2),
                      self.all_w.add(other.all_w), self.all_w2.add(other.all_w2))


# -- path generation -----------------------------------------------------------------

@dataclass
class _Setup:
    event: ConstraintSpec
    x0: np.ndarray
    drift: object
    noise: object
    triple: object
    cfg: object
    eps: float
    tilt: np.ndarray
    seed: int

    @property
    def fast(self):
        """Scalar linear surrogate with a terminal event: handled by the kernel."""
        return (self.triple.dim == 1 and self.drift.family == "scalar_linear"
                and self.noise.is_additive and not self.noise.is_time_dependent
                and self.event.kind in ("terminal_functional", "terminal_state"))


def _terminal_hits(event, triple, xt):
    """Vectorized h(z_T) <= 0 for a batch of terminal states, shape (samples, nodes)."""
    if event.kind == "terminal_functional":
        if event.threshold == -math.inf:
            return np.ones(xt.shape[0], dtype=bool)
        if event.threshold == math.inf:
            return np.zeros(xt.shape[0], dtype=bool)
        return (xt * triple.interior_weights) @ event.weights >= event.threshold
    d = xt - event.target
    return np.sqrt((d * d) @ triple.interior_weights) <= event.tolerance


def _run_block(setup, start, count):
    cfg = setup.cfg
    if setup.fast:
        sigma = noise_matrix(setup.noise, 0.0, setup.x0, setup.triple)[0]
        xt, logw = _kernels.scalar_linear_block(
            setup.seed, start, count, cfg.n_steps, cfg.dt, float(setup.x0[0]),
            float(setup.drift.lam), np.ascontiguousarray(sigma), setup.eps,
            np.ascontiguousarray(setup.tilt))
        hit = _terminal_hits(setup.event, setup.triple, xt[:, None])
        return _Block.of(hit, logw)
    control = ControlPath(cfg.time_grid, setup.tilt) if np.any(setup.tilt) else None
    energy = float(np.sum(cfg.dt * setup.tilt * setup.tilt))
    hit = np.zeros(count, dtype=bool)
    logw = np.zeros(count)
    for i in range(count):
        draw = NoiseDraw.for_config(setup.seed, cfg, setup.noise, start + i)
        path = simulate(setup.x0, setup.eps, control, setup.drift, setup.noise, setup.triple, cfg, draw)
        hit[i] = setup.event.value(path) <= 0.0
        if control is not None:
            cross = float(np.sum(draw.increments * setup.tilt))
            logw[i] = -cross / setup.eps - 0.5 * energy / (setup.eps * setup.eps)
    return _Block.of(hit, logw)


def _accumulate(setup, n_samples, workers):
    starts = list(range(0, n_samples, BLOCK))

    def job(s):
        return _run_block(setup, s, min(BLOCK, n_samples - s))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(job, starts))
    else:
        blocks = [job(s) for s in starts]
    total = _Block()
    for b in blocks:
        total = total.add(b)
    return total


def _setup(event, eps, x0, drift, noise, triple, cfg, seed, tilt):
    if not eps > 0:
        raise ConfigurationError(f"eps must be > 0, got {eps}")
    x0 = triple.check_state(np.asarray(x0, dtype=np.float64))
    event.check(triple, cfg.n_steps)
    if tilt is None:
        t = np.zeros((cfg.n_steps, noise.modes))
    else:
        t = tilt.values if isinstance(tilt, ControlPath) else np.asarray(tilt, dtype=np.float64)
        if t.shape != (cfg.n_steps, noise.modes):
            raise ShapeError(f"tilt shape {t.shape} != ({cfg.n_steps}, {noise.modes})")
    return _Setup(event, x0, drift, noise, triple, cfg, float(eps), np.ascontiguousarray(t), int(seed))


def estimate_probability(event, eps, n_samples, x0, drift, noise, triple, cfg, seed, workers=1):
    """Plain Monte Carlo with a Wilson interval and a continuity-corrected log statistic."""
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    setup = _setup(event, eps, x0, drift, noise, triple, cfg, seed, None)
    total = _accumulate(setup, int(n_samples), workers)
    n = int(n_samples)
    lo, hi = wilson_interval(total.hits, n)
    p = total.hits / n
    log_stat = eps * eps * math.log((total.hits + 0.5) / (n + 1.0))
    return EstimateRecord(float(eps), n, total.hits, p, min(lo, p), max(hi, p), log_stat, "plain", float(n))


def importance_estimate(event, eps, n_samples, tilt, x0, drift, noise, triple, cfg, seed, workers=1):
    """Girsanov-reweighted estimate under the shifted dynamics dX = (A + B tilt) dt + eps B dW.

    Weights are exp(-(1/eps) sum <tilt_k, dW_k> - (1/2 eps^2) sum dt |tilt_k|^2),
    kept in log space.  The interval is the normal one, clipped to [0, 1].
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    setup = _setup(event, eps, x0, drift, noise, triple, cfg, seed, tilt)
    n = int(n_samples)
    total = _accumulate(setup, n, workers)
    if total.hits == 0:
        p = 0.0
        lo, hi = wilson_interval(0, n)
        lo = 0.0
        log_stat = eps * eps * math.log(0.5 / (n + 1.0))
    else:
        log_p = total.hit_w.log - math.log(n)
        # (scaled / n) * exp(top) is exactly hits / n when every weight is 1
        p = total.hit_w.scaled / n * math.exp(total.hit_w.top)
        if not (p > 0 and math.isfinite(p)):
            p = math.exp(log_p)
        # sample variance of w 1_A, computed relative to p to stay in range
        second = math.exp(total.hit_w2.log - math.log(n) - 2.0 * log_p)
        rel_var = max(second - 1.0, 0.0) * n / max(n - 1, 1)
        half = Z95 * p * math.sqrt(rel_var / n)
        lo, hi = max(0.0, p - half), min(1.0, p + half)
        log_stat = eps * eps * log_p
    ess = math.exp(2.0 * total.all_w.log - total.all_w2.log) if total.all_w.scaled > 0 else 0.0
    return EstimateRecord(float(eps), n, total.hits, p, min(lo, p), max(hi, p), log_stat,
                          "importance", min(ess, float(n)))


# -- sweeps ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass
class LdpTable:
    rows: list
    i_star: float
    gaps: list
    feasible: bool = True
    action: object = None

    def to_csv(self):
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r, g in zip(self.rows, self.gaps):
            fields = [r.eps, r.n_samples, r.hits, r.p_hat, r.ci_low, r.ci_high, r.log_stat, g]
            buf.write(",".join(_fmt(x) for x in fields) + f",{r.estimator},{_fmt(r.ess)}\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def row_seed(seed, row):
    """Seed of sweep row ``row``, derived from the master seed."""
    return int(_kernels.stream_key(int(seed), (1 << 40) + int(row)) >> 1)


def ldp_sweep(event, eps_list, budgets, x0, drift, noise, triple, cfg, seed, workers=1,
              action=None, optimizer=None):
    """Estimate eps^2 log P(X^eps in A) along a decreasing eps list and compare with -I*.

    Rows use plain Monte Carlo while the predicted probability exp(-I*/eps^2)
    exceeds 100/N and importance sampling tilted by the action minimizer below.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ConfigurationError("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps_list must be strictly decreasing")
    budgets = list(budgets)
    if len(budgets) == 1:
        budgets = budgets * len(eps_list)
    if len(budgets) != len(eps_list):
        raise ConfigurationError("one sample budget per eps is required")
    if action is None:
        action = minimize_action(x0, event, drift, noise, triple, cfg, optimizer)
    feasible = bool(action.feasible)
    i_star = float(action.value) if feasible else math.inf
    rows = []
    for i, (eps, n) in enumerate(zip(eps_list, budgets)):
        n = int(n)
        s = row_seed(seed, i)
        predicted = math.exp(-i_star / (eps * eps)) if feasible else 0.0
        if not feasible or predicted > CROSSOVER / n or i_star == 0.0:
            rec = estimate_probability(event, eps, n, x0, drift, noise, triple, cfg, s, workers)
        else:
            rec = importance_estimate(event, eps, n, action.minimizer, x0, drift, noise, triple, cfg, s, workers)
        rows.append(rec)
    gaps = [abs(-r.log_stat - i_star) if feasible else math.nan for r in rows]
    return LdpTable(rows, i_star, gaps, feasible, action)


__all__ = [
    "EstimateRecord",
    "LdpTable",
    "wilson_interval",
    "estimate_probability",
    "importance_estimate",
    "ldp_sweep",
    "row_seed",
    "CSV_HEADER",
]
