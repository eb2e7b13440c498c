import copy
import json
import math
import os
import subprocess
import sys

import numpy as np
import psutil
import pytest

from mldp import (
    ConfigurationError,
    ControlPath,
    DriftSpec,
    ShapeError,
    SolverConfig,
    build_triple,
    finite_rank_noise,
    solve_skeleton,
)
from mldp import cli, config, io as mio


def load_doc(name):
    with open(config.bundled(name)) as fh:
        return json.load(fh)


@pytest.fixture
def record(rng):
    tr = build_triple(0.0, 1.0, 9, 2.0)
    cfg = SolverConfig(0.1, 7)
    noise = finite_rank_noise(tr, tr.sine_mode(1)[:, None])
    phi = ControlPath(cfg.time_grid, rng.normal(size=(7, 1)))
    return solve_skeleton(rng.normal(size=tr.dim), phi, DriftSpec("p_laplace", p=2.0), noise, tr, cfg)


def test_path_csv_round_trip(record, tmp_path):
    p = tmp_path / "path.csv"
    mio.write_path_csv(record, p)
    back = mio.read_path_csv(p, record.triple)
    assert np.array_equal(back.states, record.states) and np.array_equal(back.time_grid, record.time_grid)
    assert p.read_text().splitlines()[0] == "t," + ",".join(f"x{i}" for i in range(1, record.triple.dim + 1))


def test_path_binary_round_trip(record, tmp_path):
    p = tmp_path / "path.bin"
    mio.write_path_binary(record, p)
    blob = p.read_bytes()
    assert blob[:5] == b"MLDP1"
    assert int.from_bytes(blob[5:13], "little") == record.states.shape[0]
    assert int.from_bytes(blob[13:21], "little") == record.triple.dim + 1
    assert len(blob) == 21 + 8 * record.states.shape[0] * (record.triple.dim + 1)
    back = mio.read_path_binary(p, record.triple)
    assert np.array_equal(back.states, record.states)


def test_binary_rejects_bad_files(record, tmp_path):
    p = tmp_path / "path.bin"
    mio.write_path_binary(record, p)
    blob = p.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"XLDP1" + blob[5:])
    with pytest.raises(ConfigurationError):
        mio.read_path_binary(tmp_path / "magic.bin", record.triple)
    (tmp_path / "short.bin").write_bytes(blob[:-8])
    with pytest.raises(ConfigurationError):
        mio.read_path_binary(tmp_path / "short.bin", record.triple)
    with pytest.raises(ShapeError):
        mio.read_path_binary(p, build_triple(0.0, 1.0, 5, 2.0))


def test_control_csv_round_trip(tmp_path, rng):
    cfg = SolverConfig(1.0, 12)
    c = ControlPath(cfg.time_grid, rng.normal(size=(12, 3)))
    p = tmp_path / "control.csv"
    mio.write_control_csv(c, p)
    assert p.read_text().splitlines()[0] == "t,phi_1,phi_2,phi_3"
    assert np.array_equal(mio.read_control_csv(p, cfg, 3).values, c.values)
    with pytest.raises(ShapeError):
        mio.read_control_csv(p, SolverConfig(1.0, 10), 3)


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, math.pi):
        assert float(mio.fmt(x)) == x
    assert mio.fmt(math.inf) == "inf" and mio.fmt(math.nan) == "nan"
    assert mio.fmt(0.1) == "0.10000000000000001"


# -- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("name", ["ou_sweep", "ou_action", "plaplace", "fast_diffusion",
                                  "reaction_diffusion", "heat_galerkin"])
def test_bundled_configs_load(name):
    cfg = config.load(config.bundled(name))
    assert cfg.triple.alpha == cfg.drift.declared_alpha
    assert len(cfg.hash) == 64


def test_hash_semantics():
    doc = load_doc("ou_action")
    h = config.config_hash(doc)
    moved = dict(doc, output_dir="elsewhere")
    assert config.config_hash(moved) == h
    reordered = dict(reversed(list(doc.items())))
    assert config.config_hash(reordered) == h
    as_int = copy.deepcopy(doc)
    as_int["solver"]["T"] = 1
    assert config.config_hash(as_int) == h
    changed = copy.deepcopy(doc)
    changed["seed"] = 12
    assert config.config_hash(changed) != h


@pytest.mark.parametrize("mutate", [
    lambda d: d["triple"].update(alpha=3.0),
    lambda d: d.update(eps_list=[0.25, 0.5]),
    lambda d: d.update(eps_list=[0.5, -0.1]),
    lambda d: d.update(budgets=[1, 2]),
    lambda d: d.update(seed=-1),
    lambda d: d.update(seed=1.5),
    lambda d: d.update(bogus=1),
    lambda d: d["solver"].update(n_steps=0),
    lambda d: d["drift"].update(family="nope"),
    lambda d: d["drift"].update(declared_K=300.0),
    lambda d: d["event"].update(weights=[1.0, 2.0]),
    lambda d: d["noise"].update(form="weird"),
    lambda d: d.pop("solver"),
])
def test_invalid_configs_rejected(mutate):
    doc = load_doc("ou_action")
    mutate(doc)
    with pytest.raises((ConfigurationError, ShapeError)):
        config.from_dict(doc)


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        config.load(bad)
    with pytest.raises(ConfigurationError):
        config.load(tmp_path / "missing.json")
    with pytest.raises(ConfigurationError):
        config.bundled("nope")


# -- command line -------------------------------------------------------------------

def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def small_rd_doc():
    doc = load_doc("reaction_diffusion")
    doc["solver"]["n_steps"] = 20
    doc["optimizer"] = {"n_starts": 1}
    return doc


def test_cli_skeleton_and_simulate_zero(tmp_path):
    p = write_cfg(tmp_path, small_rd_doc())
    assert cli.main(["skeleton", p, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["simulate", p, "--eps", "0", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "skeleton.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate_0.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config_hash"] == config.load(p).hash and man["command"] == "skeleton"
    for key in ("versions", "kernel_backend", "threads", "seeds", "wall_time_s", "outputs"):
        assert key in man
    tr = config.load(p).triple
    path = mio.read_path_binary(tmp_path / "a" / "skeleton.bin", tr)
    norms = [tr.h_norm(s) for s in path.states]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(norms, norms[1:]))


def test_cli_skeleton_with_control(tmp_path):
    doc = small_rd_doc()
    p = write_cfg(tmp_path, doc)
    cfg = config.load(p)
    c = ControlPath(cfg.solver.time_grid, np.ones((cfg.solver.n_steps, cfg.noise.modes)))
    mio.write_control_csv(c, tmp_path / "c.csv")
    assert cli.main(["skeleton", p, "--control", str(tmp_path / "c.csv"), "--out", str(tmp_path / "o")]) == 0
    got = mio.read_path_csv(tmp_path / "o" / "skeleton.csv", cfg.triple)
    ref = solve_skeleton(cfg.x0, c, cfg.drift, cfg.noise, cfg.triple, cfg.solver)
    assert np.array_equal(got.states, ref.states)


def test_cli_simulate_samples(tmp_path):
    p = write_cfg(tmp_path, small_rd_doc())
    assert cli.main(["simulate", p, "--eps", "0.2", "--samples", "2", "--seed", "3", "--out", str(tmp_path)]) == 0
    a = (tmp_path / "simulate_0.csv").read_text()
    b = (tmp_path / "simulate_1.csv").read_text()
    assert a != b
    assert cli.main(["simulate", p, "--eps", "-1", "--out", str(tmp_path)]) == cli.EXIT_INVALID


def test_cli_minimize_and_infeasible(tmp_path):
    doc = load_doc("ou_action")
    doc["solver"]["n_steps"] = 50
    p = write_cfg(tmp_path, doc)
    assert cli.main(["minimize-action", p, "--threads", "1", "--out", str(tmp_path / "ok")]) == 0
    res = json.loads((tmp_path / "ok" / "action.json").read_text())
    assert res["feasible"] and res["value"] > 1.0
    doc["event"]["threshold"] = math.inf
    p = write_cfg(tmp_path, doc, "inf.json")
    assert cli.main(["minimize-action", p, "--out", str(tmp_path / "bad")]) == cli.EXIT_INFEASIBLE
    assert (tmp_path / "bad" / "manifest.json").exists()


def test_cli_invalid_config_exit_code(tmp_path):
    doc = load_doc("ou_action")
    doc["triple"]["alpha"] = 0.5
    p = write_cfg(tmp_path, doc)
    assert cli.main(["skeleton", p, "--out", str(tmp_path)]) == cli.EXIT_INVALID
    assert cli.main(["skeleton", str(tmp_path / "none.json")]) == cli.EXIT_INVALID
    assert cli.main(["skeleton", write_cfg(tmp_path, load_doc("ou_action"), "ok.json"), "--threads", "0",
                     "--out", str(tmp_path)]) == cli.EXIT_INVALID


def test_cli_solver_failure_exit_code(tmp_path):
    doc = load_doc("plaplace")
    doc["solver"].update(picard_max_iters=1, newton_fallback=False, n_steps=2)
    doc["initial"] = {"kind": "sine_mode", "sine_mode": 1, "amplitude": 100.0}
    p = write_cfg(tmp_path, doc)
    assert cli.main(["skeleton", p, "--out", str(tmp_path)]) == cli.EXIT_SOLVER


def test_cli_verify_conditions(tmp_path):
    doc = load_doc("plaplace")
    doc["conditions"] = {"n_samples": 20, "seed": 1}
    p = write_cfg(tmp_path, doc)
    assert cli.main(["verify-conditions", p, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "conditions.json").read_text())
    assert rep


def test_threads_env(monkeypatch):
    monkeypatch.setenv("MLDP_THREADS", "3")
    assert cli.default_threads() == 3
    monkeypatch.setenv("MLDP_THREADS", "x")
    with pytest.raises(ConfigurationError):
        cli.default_threads()
    monkeypatch.delenv("MLDP_THREADS")
    assert cli.default_threads() == (psutil.cpu_count(logical=False) or os.cpu_count() or 1)


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mldp.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "mldp" in out.stdout
