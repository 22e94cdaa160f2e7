"""``conetool``: experiment runner over the library modules.

Exit codes: 0 success, 1 numerical failure (or a failing comparison), 2 usage or
configuration error.  JSON reports are written with sorted keys and
shortest round-trip float formatting, so identical runs give identical bytes.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .conesolve import (ConeModel, SolverConfig, SolverError, Trajectory,
                        assemble_mode_operator, bessel_zero_squares, mode_eigenpairs,
                        solve_heat, solve_pme, solve_sh)
from .fields import ConeField, RadialMesh, read_field_csv
from .freezeflow import (DecompositionError, R_SECTORIAL_NOTE, decompose,
                         epsilon_window, frozen_operator, remainder_bound,
                         sectorial_probe)
from .indicial import (delta_window, q_set_report, validate_parameters,
                       weight_window)
from .meshnorm import FitError, fit_exponent
from .spectrum import (SpectrumError, circle_spectrum, custom_spectrum, lambda1,
                       sphere_spectrum, spectrum_from_dict)

log = logging.getLogger("conetool")

REPORT_SCHEMA_VERSION = 1

DEVIATIONS = {
    "model_cone": "the manifold is replaced by the straight cone (0,1] x cross section; "
                  "all claims checked are local at the tip",
    "outer_bc": "an outer boundary condition at x = 1 closes the model (recorded per run)",
    "omega": {"inner": 0.5, "outer": 1.0,
              "note": "cut-off equal to 1 for x <= 1/2 and 0 at x = 1"},
    "spatial_norm": "weighted L2(x^(n - 2 gamma) dx dy), normalized cross-section measure",
    "sectoriality": R_SECTORIAL_NOTE,
}


class ConfigError(ValueError):
    """Invalid command-line or configuration input."""


# --- JSON ------------------------------------------------------------------

def clean(obj):
    """Convert numpy scalars, arrays and complex numbers to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [clean(obj.real), clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if v != v or v in (float("inf"), float("-inf")):
            return str(v)
        return v + 0.0
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def config_hash(cfg) -> str:
    return hashlib.sha256(json.dumps(clean(cfg), sort_keys=True).encode()).hexdigest()


def versions():
    return {"conetool": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


# --- schemas ---------------------------------------------------------------

_NUM = {"type": "number"}
SPECTRUM_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["circle", "sphere", "custom"]},
        "a": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "integer", "minimum": 1},
        "l_max": {"type": "integer", "minimum": 1},
        "entries": {"type": "array", "items": {
            "type": "object", "required": ["lambda", "mult"],
            "properties": {"lambda": _NUM, "mult": {"type": "integer", "minimum": 1}}}},
    },
}
MODEL_SCHEMA = {
    "type": "object",
    "required": ["spectrum"],
    "properties": {
        "spectrum": SPECTRUM_SCHEMA,
        "mesh": {"type": "object", "properties": {
            "N": {"type": "integer", "minimum": 8},
            "x0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "grading": {"enum": ["geometric", "power"]},
            "param": _NUM}},
        "outer_bc": {"enum": ["dirichlet", "neumann"]},
        "bc_value": _NUM,
    },
}
SOLVER_SCHEMA = {
    "type": "object",
    "properties": {
        "time_stepper": {"enum": ["be", "trbdf2"]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "t_end": {"type": "number", "minimum": 0},
        "times": {"type": "array", "items": _NUM},
        "newton_tol": {"type": "number", "exclusiveMinimum": 0},
        "max_newton": {"type": "integer", "minimum": 1},
        "m": {"type": "number", "exclusiveMinimum": 0},
        "V_coeffs": {"type": "array"},
        "pme_form": {"enum": ["direct", "transformed"]},
        "growth_factor": {"type": "number", "exclusiveMinimum": 1},
        "initial": {"type": "array"},
    },
}
EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["model"],
    "properties": {
        "model": MODEL_SCHEMA,
        "problem": {"enum": ["heat", "pme", "sh"]},
        "solver": SOLVER_SCHEMA,
        "seed": {"type": "integer"},
        "output": {"type": "string"},
        "tasks": {
            "type": "object",
            "properties": {
                "roots": {"type": "object", "required": ["gamma", "k"], "properties": {
                    "gamma": _NUM, "k": {"type": "integer", "minimum": 1}}},
                "windows": {"type": "object", "properties": {
                    "problem": {"enum": ["laplacian", "pme", "sh"]},
                    "p": _NUM, "q": _NUM, "gamma": _NUM, "s0": _NUM}},
                "solve": {"type": "boolean"},
                "decay_rate": {"type": "object"},
                "fit": {"type": "object"},
                "decompose": {"type": "object", "properties": {
                    "tau": _NUM, "nu": _NUM, "q": _NUM, "gamma": _NUM}},
                "probe": {"type": "object", "properties": {
                    "t": _NUM, "theta": _NUM, "shift": _NUM,
                    "samples": {"type": "integer", "minimum": 3}}},
            },
        },
    },
}


def validate(instance, schema, what="config"):
    try:
        jsonschema.validate(instance, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{what} schema error at {where}: {exc.message}") from exc


# --- builders --------------------------------------------------------------

def build_spectrum(d):
    if "cross_section" in d:
        return spectrum_from_dict(d)
    kind = d.get("kind", "custom" if "entries" in d else None)
    if kind == "circle":
        return circle_spectrum(d.get("a", 1.0), d["l_max"])
    if kind == "sphere":
        return sphere_spectrum(d.get("n", 2), d.get("a", 1.0), d["l_max"])
    if kind == "custom":
        return custom_spectrum([(e["lambda"], e["mult"]) for e in d["entries"]], d["n"])
    raise ConfigError("spectrum needs a kind (circle, sphere, custom) or entries")


def build_mesh(d):
    d = d or {}
    if d.get("grading", "geometric") == "power":
        return RadialMesh.power_law(d.get("N", 400), d.get("param", 2.0))
    return RadialMesh.geometric(d.get("N", 400), d.get("x0", 1e-6))


def build_model(d) -> ConeModel:
    validate(d, MODEL_SCHEMA, "model")
    return ConeModel(build_spectrum(d["spectrum"]), build_mesh(d.get("mesh")),
                     d.get("outer_bc", "dirichlet"), float(d.get("bc_value", 0.0)))


def build_solver(d, threads=1) -> SolverConfig:
    d = dict(d or {})
    validate(d, SOLVER_SCHEMA, "solver")
    d.pop("initial", None)
    d["threads"] = threads
    try:
        return SolverConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver config: {exc}") from exc


def build_initial(model: ConeModel, terms, seed=0) -> ConeField:
    """Sum of initial-data terms.

    Term types: ``constant`` (value), ``eigenvector`` (mode, index, amplitude),
    ``tip_power`` (mode, amplitude; profile ``x^alpha (1 - x^2)`` with the
    regular tip exponent of the mode), ``random`` (amplitude, modes; seeded),
    ``csv`` (path to a field CSV on the model mesh, amplitude).
    """
    mesh, spec = model.mesh, model.spectrum
    x = mesh.x
    f = ConeField.zeros(mesh, spec)
    rng = np.random.default_rng(seed)
    n = model.n
    for term in terms or [{"type": "constant", "value": 0.0}]:
        kind = term.get("type")
        amp = float(term.get("amplitude", 1.0))
        j = int(term.get("mode", 0))
        if j >= f.n_modes:
            raise ConfigError(f"initial mode {j} exceeds l_max")
        if kind == "constant":
            f.coeffs[0] += float(term["value"])
        elif kind == "eigenvector":
            idx = int(term.get("index", 1))
            _, v = mode_eigenpairs(model, j, idx)[idx - 1]
            f.coeffs[j] += amp * v
        elif kind == "tip_power":
            nu = np.sqrt(((n - 1) / 2) ** 2 - spec.eigenvalues[j])
            f.coeffs[j] += amp * x ** (nu - (n - 1) / 2) * (1 - x**2)
        elif kind == "random":
            modes = term.get("modes", list(range(f.n_modes)))
            for jj in modes:
                prof = np.sin(np.pi * x) * rng.standard_normal()
                if f.is_circle and jj > 0:
                    prof = prof + 1j * np.sin(np.pi * x) * rng.standard_normal()
                f.coeffs[jj] += amp * prof
        elif kind == "csv":
            try:
                g = read_field_csv(term["path"], mesh, spec)
            except FileNotFoundError as exc:
                raise ConfigError(f"no such file: {term['path']}") from exc
            f.coeffs[: g.n_modes] += amp * g.coeffs
        else:
            raise ConfigError(f"unknown initial-data type {kind!r}")
    return f


SOLVERS = {"heat": solve_heat, "pme": solve_pme, "sh": solve_sh}


def _parse_times(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad --times list: {text!r}") from exc


# --- tasks -----------------------------------------------------------------

def task_roots(model, gamma, k):
    return q_set_report(model.spectrum, model.n, gamma, k)


def task_windows(model, spec):
    problem = spec.get("problem", "laplacian")
    lam1 = lambda1(model.spectrum)
    out = {"problem": problem, "n": model.n, "lambda1": lam1}
    q = spec.get("q")
    out["gamma_window"] = weight_window(problem, model.n, lam1,
                                        q if problem != "laplacian" else None).to_dict()
    if "p" in spec and "q" in spec:
        out["parameters"] = validate_parameters(problem, model.n, lam1, spec["p"], spec["q"],
                                                spec.get("gamma"), spec.get("s0")).to_dict()
        if "gamma" in spec:
            out["delta_window"] = delta_window(model.n, spec["p"], spec["q"],
                                               spec["gamma"]).to_dict()
    return out


def task_decay_rate(model, traj, spec):
    """Compare the observed decay of a mode with the Bessel-zero rate."""
    j = int(spec.get("mode", 0))
    a, b = traj[0], traj[-1]
    op = assemble_mode_operator(model, j)
    wts = op.volumes
    na = np.sqrt(np.sum(wts * np.abs(a.coeffs[j]) ** 2))
    nb = np.sqrt(np.sum(wts * np.abs(b.coeffs[j]) ** 2))
    rate = np.log(na / nb) / (b.t - a.t)
    mu = bessel_zero_squares(model.n, model.spectrum.eigenvalues[j], 1)[0]
    expected = {"heat": mu, "sh": (1 - mu) ** 2}.get(traj.problem)
    if traj.problem == "pme":
        expected = traj.config.m * model.bc_value ** (traj.config.m - 1) * mu
    rel = abs(rate / expected - 1)
    tol = float(spec.get("rel_tol", 0.01))
    return {"mode": j, "observed_rate": rate, "expected_rate": expected,
            "relative_error": rel, "tolerance": tol, "pass": rel <= tol}


def task_fit(traj, spec):
    t = spec.get("t", traj.times[-1])
    f = traj.at(t)
    window = tuple(spec.get("window", (1e-4, 1e-2)))
    modes = spec.get("modes", [spec.get("mode", 0)])
    sub = bool(spec.get("subtract_constant", False))
    return {"t": t, "fits": [fit_exponent(f, j, window, sub and j == 0).to_dict()
                             for j in modes]}


def task_decompose(traj, spec):
    tau, nu = spec["tau"], spec["nu"]
    q = spec.get("q", 2.0)
    gamma = spec.get("gamma")
    rep = decompose(traj, tau, nu, q, gamma, power_k=int(spec.get("power_k", 2)))
    out = rep.to_dict()
    if "nus" in spec:
        out["remainder_bound"] = remainder_bound(traj, tau, spec["nus"], q, gamma)
    if "eps" in spec:
        out["epsilon_window"] = epsilon_window(traj, spec.get("t", 0.5 * (tau + nu)),
                                               spec["eps"], q, gamma)
    return out


def task_probe(traj, spec):
    t = spec.get("t", traj.times[0])
    fr = frozen_operator(traj, t, gamma=spec.get("gamma"))
    res = sectorial_probe(fr.matrix, spec.get("theta", 3 * np.pi / 4),
                          spec.get("shift", 1.0), spec.get("samples", 41), fr.weights)
    out = res.to_dict()
    out.update(t=t, gamma=fr.gamma, problem=traj.problem, size=fr.size)
    return out


def run_experiment(cfg, out_dir, seed=0, threads=1):
    """Execute the task DAG of one experiment config and write its reports."""
    validate(cfg, EXPERIMENT_SCHEMA)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg["model"])
    tasks = cfg.get("tasks", {})
    seed = cfg.get("seed", seed)
    written = []

    def emit(name, obj):
        write_json(out / name, obj)
        written.append(name)

    emit("spectrum.json", model.spectrum.to_dict())
    if "roots" in tasks:
        emit("q_set.json", task_roots(model, tasks["roots"]["gamma"], tasks["roots"]["k"]))
    if "windows" in tasks:
        emit("windows.json", task_windows(model, tasks["windows"]))
    needs_traj = any(k in tasks for k in ("solve", "decay_rate", "fit", "decompose", "probe"))
    if needs_traj:
        problem = cfg.get("problem", "heat")
        solver = build_solver(cfg.get("solver"), threads)
        u0 = build_initial(model, (cfg.get("solver") or {}).get("initial"), seed)
        log.info("solving %s on %s", problem, model.spectrum.cross_section.kind)
        traj = SOLVERS[problem](model, u0, solver)
        traj.meta["deviations"] = DEVIATIONS
        traj.to_directory(out / "traj")
        written.append("traj/manifest.json")
        if "decay_rate" in tasks:
            emit("decay_rate.json", task_decay_rate(model, traj, tasks["decay_rate"]))
        if "fit" in tasks:
            emit("fits.json", task_fit(traj, tasks["fit"]))
        if "decompose" in tasks:
            emit("decomposition.json", task_decompose(traj, tasks["decompose"]))
        if "probe" in tasks:
            emit("probe.json", task_probe(traj, tasks["probe"]))
    manifest = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "seed": seed,
        "versions": versions(),
        "model_hash": model.digest(),
        "outer_bc": model.outer_bc,
        "deviations": DEVIATIONS,
        "files": written,
    }
    emit("manifest.json", manifest)
    failed = [n for n in written if n.endswith(".json") and n != "manifest.json"
              and json.loads((out / n).read_text()).get("pass") is False]
    return 1 if failed else 0


# --- compare ---------------------------------------------------------------

class SchemaMismatch(ConfigError):
    """Report and golden file have different structure."""


def compare(report, golden, abs_tol=1e-12, rel_tol=1e-9, field_tols=None, path=""):
    """Field-by-field comparison; returns a list of difference records."""
    field_tols = field_tols or {}
    diffs = []
    if isinstance(golden, dict):
        if not isinstance(report, dict):
            raise SchemaMismatch(f"{path or '<root>'}: expected an object")
        missing = sorted(set(golden) - set(report))
        extra = sorted(set(report) - set(golden))
        if missing or extra:
            raise SchemaMismatch(f"{path or '<root>'}: missing fields {missing}, "
                                 f"unexpected fields {extra}")
        for k in sorted(golden):
            diffs += compare(report[k], golden[k], abs_tol, rel_tol, field_tols,
                             f"{path}.{k}" if path else k)
        return diffs
    if isinstance(golden, list):
        if not isinstance(report, list) or len(report) != len(golden):
            raise SchemaMismatch(f"{path}: list length differs")
        for i, (r, g) in enumerate(zip(report, golden)):
            diffs += compare(r, g, abs_tol, rel_tol, field_tols, f"{path}[{i}]")
        return diffs
    if isinstance(golden, bool) or isinstance(report, bool) or not isinstance(
            golden, (int, float)):
        if report != golden:
            diffs.append({"field": path, "report": report, "golden": golden})
        return diffs
    if not isinstance(report, (int, float)):
        raise SchemaMismatch(f"{path}: expected a number")
    leaf = path.split(".")[-1].split("[")[0]
    atol = field_tols.get(path, field_tols.get(leaf, abs_tol))
    err = abs(report - golden)
    if err > max(atol, rel_tol * abs(golden)):
        diffs.append({"field": path, "report": report, "golden": golden, "abs_err": err})
    return diffs


# --- report ----------------------------------------------------------------

DEFAULT_REPORT = {
    "model": {"spectrum": {"kind": "circle", "a": 1.0, "l_max": 4},
              "mesh": {"N": 400, "x0": 1e-6}, "outer_bc": "dirichlet"},
    "gamma": -0.5,
    "k": 2,
    "p": 12.0,
    "q": 12.0,
}


def full_report(cfg):
    """Verification run for one geometry; returns the report dict."""
    cfg = {**DEFAULT_REPORT, **(cfg or {})}
    model = build_model(cfg["model"])
    spec = model.spectrum
    n = model.n
    gamma, k = cfg["gamma"], cfg["k"]
    rep = {"schema_version": REPORT_SCHEMA_VERSION, "config_hash": config_hash(cfg),
           "versions": versions(), "deviations": DEVIATIONS,
           "model": model.to_dict()}
    rep["roots"] = q_set_report(spec, n, gamma, k)
    lam1 = lambda1(spec)
    rep["windows"] = {
        "laplacian": weight_window("laplacian", n, lam1).to_dict(),
        "pme": validate_parameters("pme", n, lam1, cfg["p"], cfg["q"]).to_dict(),
        "sh": validate_parameters("sh", n, lam1, cfg["p"], cfg["q"]).to_dict(),
    }
    eig = []
    for j in range(min(3, len(spec))):
        mu = [p[0] for p in mode_eigenpairs(model, j, 3)]
        ex = bessel_zero_squares(n, spec.eigenvalues[j], 3)
        eig.append({"mode": j, "discrete": mu, "bessel": ex,
                    "max_rel_error": float(np.max(np.abs(np.array(mu) / ex - 1)))})
    rep["eigenvalues"] = eig
    fits = []
    for j in range(min(3, len(spec))):
        nu = np.sqrt(((n - 1) / 2) ** 2 - spec.eigenvalues[j])
        expected = nu - (n - 1) / 2
        u0 = build_initial(model, [{"type": "tip_power", "mode": j,
                                    "amplitude": 1e-2 ** -expected}])
        mu = bessel_zero_squares(n, spec.eigenvalues[j], 1)[0]
        for problem, rate in (("heat", mu), ("sh", (1 - mu) ** 2)):
            dt = 10.0 ** np.floor(np.log10(0.02 / rate))
            T = round(1.0 / rate / dt) * dt
            traj = SOLVERS[problem](model, u0, SolverConfig(dt=dt, times=(0.0, T)))
            fit = fit_exponent(traj[-1], j, (1e-4, 1e-2))
            fits.append({"problem": problem, "mode": j, "t": T, "expected": expected,
                         **fit.to_dict(), "error": abs(fit.alpha - expected)})
    rep["tip_exponents"] = fits
    neu = ConeModel(spec, model.mesh, "neumann")
    op = assemble_mode_operator(neu, 0)
    probe = sectorial_probe(-op.matrix, 3 * np.pi / 4, 1.0, 41,
                            op.volumes * model.mesh.x ** (-2 * gamma))
    rep["probe"] = probe.to_dict()
    rep["summary"] = {
        "eigen_max_rel_error": max(e["max_rel_error"] for e in eig),
        "tip_exponent_max_error": max(f["error"] for f in fits),
        "K_est": probe.K_est,
        "roots_complete": rep["roots"]["complete"],
    }
    return rep


def summary_text(rep) -> str:
    s = rep["summary"]
    cs = rep["model"]["spectrum"]["cross_section"]
    lines = [
        f"conetool report ({cs['kind']}, dim {cs['dim']}, a = {cs['a']})",
        f"  asymptotics set Q_k: {len(rep['roots']['roots'])} roots, "
        f"complete = {s['roots_complete']}",
        f"  eigenvalues vs Bessel zeros: max relative error {s['eigen_max_rel_error']:.3e}",
        f"  tip exponents (heat, SH): max error {s['tip_exponent_max_error']:.3e}",
        f"  sectorial bound K_est (theta = 3pi/4, c = 1): {s['K_est']:.6g}",
        f"  note: {R_SECTORIAL_NOTE}",
    ]
    return "\n".join(lines) + "\n"


# --- argument parsing ------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--verbose", action="store_true")


def make_parser():
    ap = argparse.ArgumentParser(prog="conetool", description=__doc__.splitlines()[0])
    _common(ap)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="cross-section spectrum preset or list")
    _common(p)
    p.add_argument("--kind", choices=["circle", "sphere", "custom"], default="circle")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--l-max", type=int, default=4)
    p.add_argument("--pairs", help="JSON file with [[lambda, mult], ...]")

    p = sub.add_parser("roots", help="asymptotics set Q_k with pole orders")
    _common(p)
    p.add_argument("--spectrum", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--k", type=int, required=True)

    p = sub.add_parser("windows", help="admissible weight and parameter windows")
    _common(p)
    p.add_argument("--spectrum", required=True)
    p.add_argument("--problem", choices=["laplacian", "pme", "sh"], default="laplacian")
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--s0", type=float)

    p = sub.add_parser("solve", help="run a flow on the model cone")
    _common(p)
    p.add_argument("problem", choices=["heat", "pme", "sh"])
    p.add_argument("--model", required=True)
    p.add_argument("--times", help="comma-separated output times")

    p = sub.add_parser("fit", help="near-tip exponent fit of a trajectory slice")
    _common(p)
    p.add_argument("--traj", required=True)
    p.add_argument("--time", type=float)
    p.add_argument("--mode", type=int, default=0)
    p.add_argument("--window", default="1e-4,1e-2")
    p.add_argument("--subtract-constant", action="store_true")

    p = sub.add_parser("decompose", help="frozen-coefficient splitting of a trajectory")
    _common(p)
    p.add_argument("--traj", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("probe", help="sectorial resolvent bound of a frozen operator")
    _common(p)
    p.add_argument("--matrix-from", required=True, help="TRAJ_DIR@TIME")
    p.add_argument("--theta", type=float, default=3 * np.pi / 4)
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=41)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("compare", help="compare a report with a golden file")
    _common(p)
    p.add_argument("report")
    p.add_argument("golden")
    p.add_argument("--abs-tol", type=float, default=1e-12)
    p.add_argument("--rel-tol", type=float, default=1e-9)
    p.add_argument("--tol", action="append", default=[], metavar="FIELD=TOL")

    p = sub.add_parser("report", help="full verification summary for one geometry")
    _common(p)

    p = sub.add_parser("run", help="execute an experiment config")
    _common(p)
    return ap


def _threads(args):
    if args.threads:
        return args.threads
    env = os.environ.get("CONETOOL_THREADS", "")
    return int(env) if env.isdigit() and int(env) > 0 else 1


def _emit(args, obj, default_name):
    text = dumps(obj)
    if args.out:
        out = Path(args.out)
        if out.suffix != ".json":
            out = out / default_name
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    else:
        sys.stdout.write(text)


def _spectrum_arg(path):
    return build_spectrum(_load_json(path))


def _dispatch(args):
    cfg = _load_json(args.config) if args.config else {}
    cmd = args.command
    if cmd == "spectrum":
        if args.kind == "circle":
            s = circle_spectrum(args.a, args.l_max)
        elif args.kind == "sphere":
            s = sphere_spectrum(args.n or 2, args.a, args.l_max)
        else:
            if not args.pairs or args.n is None:
                raise ConfigError("custom spectra need --pairs and --n")
            s = custom_spectrum(_load_json(args.pairs), args.n)
        _emit(args, s.to_dict(), "spectrum.json")
        return 0
    if cmd == "roots":
        s = _spectrum_arg(args.spectrum)
        _emit(args, q_set_report(s, s.n, args.gamma, args.k), "q_set.json")
        return 0
    if cmd == "windows":
        s = _spectrum_arg(args.spectrum)
        model = ConeModel(s, RadialMesh.geometric(8))
        spec = {k: v for k, v in (("problem", args.problem), ("p", args.p), ("q", args.q),
                                  ("gamma", args.gamma), ("s0", args.s0)) if v is not None}
        _emit(args, task_windows(model, spec), "windows.json")
        return 0
    if cmd == "solve":
        model = build_model(_load_json(args.model))
        scfg = dict(cfg.get("solver", cfg))
        if args.times:
            scfg["times"] = list(_parse_times(args.times))
            scfg.setdefault("t_end", max(scfg["times"]))
        solver = build_solver(scfg, _threads(args))
        u0 = build_initial(model, scfg.get("initial"), args.seed)
        traj = SOLVERS[args.problem](model, u0, solver)
        traj.meta["deviations"] = DEVIATIONS
        traj.to_directory(args.out or "traj")
        return 0
    if cmd == "fit":
        traj = Trajectory.from_directory(args.traj)
        lo, hi = (float(v) for v in args.window.split(","))
        t = traj.times[-1] if args.time is None else args.time
        fit = fit_exponent(traj.at(t), args.mode, (lo, hi), args.subtract_constant)
        _emit(args, {"t": t, **fit.to_dict()}, "fit.json")
        return 0
    if cmd == "decompose":
        traj = Trajectory.from_directory(args.traj)
        rep = task_decompose(traj, {"tau": args.tau, "nu": args.nu, "q": args.q,
                                    "gamma": args.gamma})
        _emit(args, rep, "report.json")
        return 0
    if cmd == "probe":
        path, _, t = args.matrix_from.rpartition("@")
        if not path:
            raise ConfigError("--matrix-from expects TRAJ_DIR@TIME")
        traj = Trajectory.from_directory(path)
        rep = task_probe(traj, {"t": float(t), "theta": args.theta, "shift": args.shift,
                                "samples": args.samples, "gamma": args.gamma})
        _emit(args, rep, "probe.json")
        return 0
    if cmd == "compare":
        tols = {}
        for item in args.tol:
            name, _, val = item.partition("=")
            tols[name] = float(val)
        diffs = compare(_load_json(args.report), _load_json(args.golden),
                        args.abs_tol, args.rel_tol, tols)
        summary = {"equal": not diffs, "diffs": diffs}
        _emit(args, summary, "diff.json")
        return 0 if not diffs else 1
    if cmd == "report":
        rep = full_report(cfg)
        out = Path(args.out or "report")
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", rep)
        (out / "summary.txt").write_text(summary_text(rep))
        if args.verbose:
            sys.stderr.write(summary_text(rep))
        return 0
    if cmd == "run":
        if not args.config:
            raise ConfigError("run needs --config")
        return run_experiment(cfg, args.out or cfg.get("output", "run"), args.seed,
                              _threads(args))
    raise ConfigError(f"unknown command {cmd}")


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, SpectrumError, DecompositionError, KeyError) as exc:
        sys.stderr.write(f"conetool: error: {exc}\n")
        return 2
    except (SolverError, FitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"conetool: numerical failure: {exc}\n")
        return 1
    except ValueError as exc:
        sys.stderr.write(f"conetool: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
