import json
from pathlib import Path

import numpy as np
import pytest
import sympy as sy

from conetool.cli import SchemaMismatch, build_model, compare, main
from conetool.conesolve import Trajectory
from conetool.fields import ConeField, write_field_csv

from oracles import q_set_oracle

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    return json.loads(Path(path).read_text())


def test_golden_matches_oracle():
    gold = read(GOLDEN / "q_set_circle_g0.3_k2.json")
    lams = [sy.Integer(-l * l) for l in range(5)]
    ref = {float(z): e for z, e in q_set_oracle(lams, 1, sy.Rational(3, 10), 2).items()}
    assert {r["rho_re"]: r["eta"] for r in gold["roots"]} == ref


def test_roots_matches_golden(tmp_path):
    out = tmp_path / "q_set.json"
    assert run("roots", "--spectrum", GOLDEN / "circle_spectrum.json", "--gamma", 0.3,
               "--k", 2, "--out", out) == 0
    assert compare(read(out), read(GOLDEN / "q_set_circle_g0.3_k2.json")) == []
    assert run("compare", out, GOLDEN / "q_set_circle_g0.3_k2.json",
               "--out", tmp_path / "diff.json") == 0
    assert read(tmp_path / "diff.json") == {"diffs": [], "equal": True}


def test_roots_via_config(tmp_path):
    cfg = {"model": {"spectrum": {"kind": "circle", "l_max": 4}},
           "tasks": {"roots": {"gamma": 0.3, "k": 2}}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert run("run", "--config", tmp_path / "cfg.json", "--out", tmp_path / "run") == 0
    assert compare(read(tmp_path / "run" / "q_set.json"),
                   read(GOLDEN / "q_set_circle_g0.3_k2.json")) == []
    man = read(tmp_path / "run" / "manifest.json")
    assert {"config_hash", "versions", "deviations", "outer_bc"} <= set(man)


def test_malformed_gamma_exit_2(tmp_path, capsys):
    assert run("roots", "--spectrum", GOLDEN / "circle_spectrum.json", "--gamma", "abc",
               "--k", 2) == 2
    cfg = {"model": {"spectrum": {"kind": "circle", "l_max": 4}},
           "tasks": {"roots": {"gamma": "0.3", "k": 2}}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert run("run", "--config", tmp_path / "cfg.json", "--out", tmp_path / "run") == 2
    assert "schema error" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert run("roots", "--spectrum", tmp_path / "nope.json", "--gamma", 0.3, "--k", 2) == 2


# --- compare ---------------------------------------------------------------------

def test_compare_identical_is_empty():
    gold = read(GOLDEN / "q_set_circle_g0.3_k2.json")
    assert compare(gold, gold) == []


def test_compare_names_failing_field(tmp_path):
    gold = read(GOLDEN / "q_set_circle_g0.3_k2.json")
    rep = json.loads(json.dumps(gold))
    rep["roots"][0]["x_exponent"] += 0.5
    diffs = compare(rep, gold, field_tols={"x_exponent": 0.02})
    assert [d["field"] for d in diffs] == ["roots[0].x_exponent"]
    (tmp_path / "r.json").write_text(json.dumps(rep))
    code = run("compare", tmp_path / "r.json", GOLDEN / "q_set_circle_g0.3_k2.json",
               "--tol", "x_exponent=0.02", "--out", tmp_path / "d.json")
    assert code == 1
    assert read(tmp_path / "d.json")["diffs"][0]["field"] == "roots[0].x_exponent"


def test_compare_within_tolerance():
    gold = {"alpha": 2.0}
    assert compare({"alpha": 2.01}, gold, field_tols={"alpha": 0.02}) == []


def test_compare_missing_field():
    gold = read(GOLDEN / "q_set_circle_g0.3_k2.json")
    rep = dict(gold)
    del rep["strip"]
    with pytest.raises(SchemaMismatch, match="strip"):
        compare(rep, gold)


def test_compare_missing_field_exit_2(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"x": 1.0}))
    (tmp_path / "b.json").write_text(json.dumps({"x": 1.0, "y": 2.0}))
    assert run("compare", tmp_path / "a.json", tmp_path / "b.json") == 2


# --- solve / fit / decompose / probe ---------------------------------------------

def heat_config(tmp_path):
    model = {"spectrum": {"kind": "circle", "l_max": 2}, "mesh": {"N": 200, "x0": 1e-6},
             "outer_bc": "dirichlet"}
    cfg = {"model": model, "problem": "heat",
           "solver": {"dt": 1e-3, "t_end": 0.2, "times": [0.0, 0.2],
                      "initial": [{"type": "eigenvector", "mode": 1, "index": 1}]},
           "tasks": {"decay_rate": {"mode": 1, "rel_tol": 0.01},
                     "fit": {"mode": 1}}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return cfg


def test_run_heat_decay(tmp_path):
    heat_config(tmp_path)
    assert run("run", "--config", tmp_path / "cfg.json", "--out", tmp_path / "run") == 0
    rep = read(tmp_path / "run" / "decay_rate.json")
    assert rep["pass"] and rep["relative_error"] < 0.01
    fits = read(tmp_path / "run" / "fits.json")["fits"]
    assert abs(fits[0]["alpha"] - 1.0) < 0.02


def test_solve_fit_probe_commands(tmp_path):
    model = {"spectrum": {"kind": "circle", "l_max": 2}, "mesh": {"N": 120, "x0": 1e-6},
             "outer_bc": "neumann"}
    (tmp_path / "model.json").write_text(json.dumps(model))
    solver = {"solver": {"dt": 1e-3, "t_end": 0.02, "m": 2,
                         "initial": [{"type": "constant", "value": 1.5},
                                     {"type": "tip_power", "mode": 1, "amplitude": 0.1}]}}
    (tmp_path / "solver.json").write_text(json.dumps(solver))
    traj = tmp_path / "traj"
    assert run("solve", "pme", "--model", tmp_path / "model.json", "--config",
               tmp_path / "solver.json", "--times", "0,0.01,0.02", "--out", traj) == 0
    assert (traj / "manifest.json").exists()
    assert run("fit", "--traj", traj, "--mode", 1, "--out", tmp_path / "fit.json") == 0
    assert abs(read(tmp_path / "fit.json")["alpha"] - 1.0) < 0.05
    assert run("probe", "--matrix-from", f"{traj}@0.01", "--out", tmp_path / "p.json") == 0
    assert np.isfinite(read(tmp_path / "p.json")["K_est"])
    assert run("probe", "--matrix-from", "nowhere", "--out", tmp_path / "p.json") == 2


def test_decompose_command(tmp_path):
    model = {"spectrum": {"kind": "circle", "l_max": 1}, "mesh": {"N": 80, "x0": 1e-4},
             "outer_bc": "neumann"}
    (tmp_path / "model.json").write_text(json.dumps(model))
    solver = {"dt": 1e-3, "t_end": 0.06, "m": 2,
              "initial": [{"type": "constant", "value": 1.5},
                          {"type": "random", "amplitude": 0.1}]}
    (tmp_path / "solver.json").write_text(json.dumps(solver))
    times = ",".join(f"{k * 1e-3:.3f}" for k in range(61))
    traj = tmp_path / "traj"
    assert run("solve", "pme", "--model", tmp_path / "model.json", "--config",
               tmp_path / "solver.json", "--times", times, "--out", traj) == 0
    assert run("decompose", "--traj", traj, "--tau", 0.02, "--nu", 0.05,
               "--out", tmp_path / "dec.json") == 0
    rep = read(tmp_path / "dec.json")
    assert {"G_tau_norm", "w_norm", "fitted_C", "power_check"} <= set(rep)
    assert rep["w_norm"] > 0 and rep["fitted_C"] > 0
    assert run("decompose", "--traj", traj, "--tau", 0.0205, "--nu", 0.05) == 2


def test_initial_data_from_csv(tmp_path):
    model = {"spectrum": {"kind": "circle", "l_max": 2}, "mesh": {"N": 60, "x0": 1e-4},
             "outer_bc": "neumann"}
    mdl = build_model(model)
    x = mdl.mesh.x
    c = np.zeros((3, len(x)), complex)
    c[0], c[2] = 2.0 + x, 0.1j * x**2
    write_field_csv(ConeField(c, mdl.mesh, mdl.spectrum), tmp_path / "u0.csv")
    (tmp_path / "model.json").write_text(json.dumps(model))
    solver = {"dt": 1e-3, "t_end": 0.0, "times": [0.0],
              "initial": [{"type": "csv", "path": str(tmp_path / "u0.csv")}]}
    (tmp_path / "solver.json").write_text(json.dumps(solver))
    assert run("solve", "heat", "--model", tmp_path / "model.json", "--config",
               tmp_path / "solver.json", "--out", tmp_path / "traj") == 0
    assert np.array_equal(Trajectory.from_directory(tmp_path / "traj")[0].coeffs, c)
    solver["initial"][0]["path"] = str(tmp_path / "missing.csv")
    (tmp_path / "solver.json").write_text(json.dumps(solver))
    assert run("solve", "heat", "--model", tmp_path / "model.json", "--config",
               tmp_path / "solver.json", "--out", tmp_path / "traj2") == 2


def test_windows_and_spectrum_commands(tmp_path, capsys):
    assert run("spectrum", "--kind", "sphere", "--n", 2, "--l-max", 3,
               "--out", tmp_path / "s2.json") == 0
    assert run("windows", "--spectrum", tmp_path / "s2.json", "--problem", "pme",
               "--p", 12, "--q", 12, "--gamma", 0.3) == 0
    out = json.loads(capsys.readouterr().out)
    assert {"gamma_window", "parameters", "delta_window"} <= set(out)


# --- determinism -----------------------------------------------------------------

def test_report_is_deterministic(tmp_path):
    cfg = {"model": {"spectrum": {"kind": "circle", "a": 1.0, "l_max": 2},
                     "mesh": {"N": 200, "x0": 1e-6}, "outer_bc": "dirichlet"}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    for name in ("a", "b"):
        assert run("report", "--config", tmp_path / "cfg.json", "--out", tmp_path / name) == 0
    for f in ("report.json", "summary.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rep = read(tmp_path / "a" / "report.json")
    assert {"outer_bc", "model_cone", "omega"} <= set(rep["deviations"])
