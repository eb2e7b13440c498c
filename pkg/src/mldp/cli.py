"""Command line entry point: ``mldp <subcommand> config.json [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
4 infeasible action problem.
"""
import argparse
import os
import platform
import sys
import time

import numpy as np
import psutil
import scipy

from . import __version__, _kernels
from . import config as config_mod
from . import io as mio
from .action import minimize_action
from .conditions import verify_conditions
from .errors import ConfigurationError, NumericError, ShapeError, SolverError
from .evolution import ControlPath, NoiseDraw, simulate, solve_skeleton
from .rare_event import ldp_sweep

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_INFEASIBLE = 4


class _Infeasible(Exception):
    pass


def default_threads():
    env = os.environ.get("MLDP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"MLDP_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigurationError("MLDP_THREADS must be >= 1")
        return n
    return psutil.cpu_count(logical=False) or os.cpu_count() or 1


def _manifest(args, cfg, outputs, seeds, timings):
    return {
        "command": args.command,
        "config": os.path.abspath(args.config),
        "config_hash": cfg.hash,
        "versions": {
            "mldp": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "kernel_backend": _kernels.BACKEND,
        "threads": args.threads,
        "seeds": seeds,
        "wall_time_s": timings,
        "outputs": sorted(outputs),
    }


def _cmd_verify(args, cfg, out):
    n = int(cfg.conditions.get("n_samples", 1000))
    seed = int(cfg.conditions.get("seed", cfg.seed))
    report = verify_conditions(cfg.drift, cfg.noise, cfg.triple, n, seed, cfg.solver.T, workers=args.threads)
    path = os.path.join(out, "conditions.json")
    mio.write_json(report.to_dict(), path)
    print(mio.dumps(report.to_dict()))
    return [path], {"conditions": seed}


def _cmd_skeleton(args, cfg, out):
    if args.control:
        control = mio.read_control_csv(args.control, cfg.solver, cfg.noise.modes)
    else:
        control = ControlPath.zeros(cfg.solver, cfg.noise.modes)
    record = solve_skeleton(cfg.x0, control, cfg.drift, cfg.noise, cfg.triple, cfg.solver)
    csv_path = os.path.join(out, "skeleton.csv")
    bin_path = os.path.join(out, "skeleton.bin")
    mio.write_path_csv(record, csv_path)
    mio.write_path_binary(record, bin_path)
    return [csv_path, bin_path], {}


def _action(args, cfg):
    if cfg.event is None:
        raise ConfigurationError("this subcommand needs an 'event' section")
    settings = cfg.optimizer
    settings.workers = args.threads
    return minimize_action(cfg.x0, cfg.event, cfg.drift, cfg.noise, cfg.triple, cfg.solver, settings)


def _cmd_minimize(args, cfg, out):
    result = _action(args, cfg)
    json_path = os.path.join(out, "action.json")
    csv_path = os.path.join(out, "control.csv")
    mio.write_json(result.to_dict(), json_path)
    mio.write_control_csv(result.minimizer, csv_path)
    print(result.to_json(indent=2))
    if not result.feasible:
        raise _Infeasible([json_path, csv_path])
    return [json_path, csv_path], {"optimizer": cfg.optimizer.seed}


def _cmd_simulate(args, cfg, out):
    eps = args.eps if args.eps is not None else float(cfg.simulate.get("eps", 0.0))
    samples = args.samples if args.samples is not None else int(cfg.simulate.get("samples", 1))
    seed = args.seed if args.seed is not None else cfg.seed
    if eps < 0:
        raise ConfigurationError("--eps must be >= 0")
    if samples < 1:
        raise ConfigurationError("--samples must be >= 1")
    written = []
    for i in range(samples):
        draw = NoiseDraw.for_config(seed, cfg.solver, cfg.noise, i) if eps > 0 else None
        record = simulate(cfg.x0, eps, None, cfg.drift, cfg.noise, cfg.triple, cfg.solver, draw)
        path = os.path.join(out, f"simulate_{i}.csv")
        mio.write_path_csv(record, path)
        written.append(path)
    return written, {"simulate": seed}


def _cmd_sweep(args, cfg, out):
    if not cfg.eps_list or not cfg.budgets:
        raise ConfigurationError("sweep needs eps_list and budgets")
    if cfg.event is None:
        raise ConfigurationError("sweep needs an 'event' section")
    action = _action(args, cfg)
    table = ldp_sweep(cfg.event, cfg.eps_list, cfg.budgets, cfg.x0, cfg.drift, cfg.noise, cfg.triple,
                      cfg.solver, cfg.seed, workers=args.threads, action=action)
    csv_path = os.path.join(out, "sweep.csv")
    json_path = os.path.join(out, "action.json")
    table.write_csv(csv_path)
    mio.write_json(action.to_dict(), json_path)
    sys.stdout.write(table.to_csv())
    if not table.feasible:
        print("action problem infeasible: gaps left empty", file=sys.stderr)
        raise _Infeasible([csv_path, json_path])
    return [csv_path, json_path], {"sweep": cfg.seed, "optimizer": cfg.optimizer.seed}


COMMANDS = {
    "verify-conditions": _cmd_verify,
    "skeleton": _cmd_skeleton,
    "minimize-action": _cmd_minimize,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mldp", description="Small-noise SPDE large-deviation experiments.")
    parser.add_argument("--version", action="version", version=f"mldp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="experiment configuration (JSON)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: MLDP_THREADS or physical core count)")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        if name == "skeleton":
            p.add_argument("--control", default=None, help="control CSV with columns t, phi_1..phi_m")
        if name == "simulate":
            p.add_argument("--eps", type=float, default=None)
            p.add_argument("--samples", type=int, default=None)
            p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.threads is None:
            args.threads = default_threads()
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg = config_mod.load(args.config)
        out = args.out or cfg.output_dir
        os.makedirs(out, exist_ok=True)
        t_load = time.perf_counter() - t0
        status = EXIT_OK
        try:
            outputs, seeds = COMMANDS[args.command](args, cfg, out)
        except _Infeasible as exc:
            outputs, seeds, status = exc.args[0], {"optimizer": cfg.optimizer.seed}, EXIT_INFEASIBLE
        timings = {"load": t_load, "run": time.perf_counter() - t0 - t_load}
        manifest = os.path.join(out, "manifest.json")
        mio.write_json(_manifest(args, cfg, outputs, seeds, timings), manifest)
        return status
    except (ConfigurationError, ShapeError) as exc:
        print(f"mldp: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, NumericError) as exc:
        print(f"mldp: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
