from dataclasses import replace

import numpy as np
import pytest

from conetool.conesolve import (ConeModel, SolverConfig, Trajectory, mode_eigenpairs,
                                physical_laplacian, solve_heat, solve_pme, solve_sh)
from conetool.fields import ConeField, RadialMesh
from conetool.freezeflow import (DecompositionError, SingularResolventError, decompose,
                                 domain_power_check, duhamel_remainder, epsilon_window,
                                 frozen_operator, remainder, remainder_bound,
                                 sectorial_probe, smooth_part, smooth_part_expm,
                                 uniform_bound_scan)
from conetool.spectrum import circle_spectrum

from oracles import scalar_sector_bound

SPEC = circle_spectrum(1, 3)


def fld(mesh, rows, spec=SPEC):
    c = np.zeros((len(spec.eigenvalues), len(mesh.x)), complex)
    for j, v in rows.items():
        c[j] = v
    return ConeField(c, mesh, spec)


def every_step(dt, t_end):
    return tuple(np.round(np.arange(0, t_end + 1e-9, dt), 12))


def pme_traj(dt=1e-3, t_end=0.2, N=100):
    mesh = RadialMesh.geometric(N, 1e-4)
    x = mesh.x
    u0 = fld(mesh, {0: 1.5 + 0.3 * np.cos(np.pi * x), 1: 0.1 * x * (1 - x), 2: 0.05j * x**2})
    cfg = SolverConfig(time_stepper="be", dt=dt, t_end=t_end, times=every_step(dt, t_end), m=2)
    return solve_pme(ConeModel(SPEC, mesh, "neumann"), u0, cfg)


def sh_traj(dt=1e-3, t_end=0.2, N=100, V=(0, 0, 0, 1.0)):
    mesh = RadialMesh.geometric(N, 1e-4)
    x = mesh.x
    u0 = fld(mesh, {0: 0.3 * (1 - x**2) ** 2, 1: 0.2 * x * (1 - x) ** 2})
    cfg = SolverConfig(time_stepper="be", dt=dt, t_end=t_end, times=every_step(dt, t_end),
                       V_coeffs=V)
    return solve_sh(ConeModel(SPEC, mesh, "dirichlet"), u0, cfg)


def heat_traj(N=60, bc="dirichlet", dt=1e-3, t_end=0.05, spec=SPEC, data=None):
    mesh = RadialMesh.geometric(N, 1e-4)
    x = mesh.x
    rows = data(x) if data else {0: (1 - x**2), 1: x * (1 - x)}
    cfg = SolverConfig(time_stepper="be", dt=dt, t_end=t_end, times=every_step(dt, t_end))
    return solve_heat(ConeModel(spec, mesh, bc), fld(mesh, rows, spec), cfg)


@pytest.fixture(scope="module")
def pme():
    return pme_traj()


@pytest.fixture(scope="module")
def sh():
    return sh_traj()


# --- frozen operator ---------------------------------------------------------------

def test_sh_operator_constant(sh):
    a = frozen_operator(sh, 0.02).matrix
    b = frozen_operator(sh, 0.1).matrix
    assert (a != b).nnz == 0


def test_pme_m1_is_minus_laplacian():
    mesh = RadialMesh.geometric(40, 1e-4)
    mdl = ConeModel(SPEC, mesh, "neumann")
    x = mesh.x
    traj = solve_pme(mdl, fld(mesh, {0: 1.2 + 0.1 * x, 1: 0.05 * x}),
                     SolverConfig(dt=1e-2, t_end=0.02, times=(0, 0.01, 0.02), m=1))
    lap = physical_laplacian(mdl)
    for tau in (0.0, 0.02):
        A = frozen_operator(traj, tau).matrix
        assert abs(A + lap).max() < 1e-12 * abs(lap).max()


def test_pme_constant_slice():
    c = 1.3
    mesh = RadialMesh.geometric(40, 1e-4)
    mdl = ConeModel(SPEC, mesh, "neumann")
    traj = solve_pme(mdl, fld(mesh, {0: c}), SolverConfig(dt=1e-2, t_end=0.01, m=2))
    fr = frozen_operator(traj, 0.0)
    expect = -2 * c * physical_laplacian(mdl, fr.n_theta)
    assert abs(fr.matrix - expect).max() < 1e-12 * abs(expect).max()


def test_pme_coefficient_range(pme):
    lo = min(f.coeffs[0].real.min() for f in pme) - 0.5
    fr = frozen_operator(pme, 0.1)
    assert fr.coefficient.min() >= 2 * 1.0 and fr.coefficient.max() <= 2 * 1.8
    assert lo > 0


# --- smooth part and remainder -----------------------------------------------------

def test_smooth_part_zero_operator(pme):
    fr = frozen_operator(pme, 0.05)
    fr0 = replace(fr, coefficient=np.zeros_like(fr.coefficient))
    u = fr.state(pme.at(0.05))
    for v in smooth_part(fr0, u, [0.05, 0.08, 0.1]):
        assert np.max(np.abs(v - u)) < 1e-12 * np.max(np.abs(u))  # transform round-off


@pytest.mark.parametrize("stepper,order", [("be", 1), ("trbdf2", 2)])
def test_smooth_part_eigen_decay(stepper, order):
    traj = heat_traj(N=100, spec=circle_spectrum(1, 1))
    fr = frozen_operator(traj, 0.0)
    mu, v = mode_eigenpairs(traj.model, 0, 1)[0]
    v = fr.state(fld(traj.model.mesh, {0: v}, traj.model.spectrum))
    errs = []
    for dt in (2e-3, 1e-3):
        got = smooth_part(fr, v, [0.0, 0.02], dt=dt, stepper=stepper)[-1]
        errs.append(np.max(np.abs(got - np.exp(-0.02 * mu) * v)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.2)


def test_smooth_part_expm_cross_check():
    mesh = RadialMesh.geometric(128, 1e-4)
    spec = circle_spectrum(1, 1)
    u0 = ConeField(np.exp(-((mesh.x - 0.5) / 0.15) ** 2)[None, :], mesh, spec)
    traj = solve_heat(ConeModel(spec, mesh, "dirichlet"), u0,
                      SolverConfig(dt=1e-3, t_end=0.002, times=(0, 0.001, 0.002)))
    fr = frozen_operator(traj, 0.0)
    assert fr.size == 129
    u = fr.state(traj[0])
    exact = smooth_part_expm(fr, u, [0.02])[0]
    errs = [np.max(np.abs(smooth_part(fr, u, [0.02], dt=dt, stepper="trbdf2")[0] - exact))
            for dt in (2e-3, 1e-3, 5e-4)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.7)


def test_heat_remainder_vanishes():
    traj = heat_traj()
    rep = decompose(traj, 0.01, 0.04)
    assert rep.vacuous and rep.fitted_C is None
    assert max(rep.__dict__["w_tau"][i].__abs__().max() for i in range(len(rep.times))) < 1e-10
    bound = remainder_bound(traj, 0.01, [0.04, 0.03, 0.02])
    assert bound["vacuous"]


def test_sh_unforced_remainder_vanishes():
    traj = sh_traj(t_end=0.05, V=())
    rep = decompose(traj, 0.01, 0.04)
    assert rep.vacuous
    assert max(np.abs(w).max() for w in rep.w_tau) < 1e-10


@pytest.mark.parametrize("make", [pme_traj, sh_traj])
def test_remainder_zero_at_tau(make):
    rep = decompose(make(t_end=0.1), 0.03, 0.08)
    assert rep.w_at_tau == 0.0


@pytest.mark.parametrize("make", [pme_traj, sh_traj])
def test_two_routes_first_order(make):
    gaps = [decompose(make(dt=dt, t_end=0.12), 0.04, 0.12).duhamel_gap
            for dt in (2e-3, 1e-3, 5e-4)]
    orders = np.log2(np.array(gaps[:-1]) / gaps[1:])
    assert np.all(orders > 0.8)


def test_remainder_route_by_hand(pme):
    fr = frozen_operator(pme, 0.04)
    ts = (0.04, 0.041, 0.042)
    snaps = [pme.at(t) for t in ts]
    u = [fr.state(f) for f in snaps]
    v = smooth_part(fr, u[0], ts)
    w = remainder(u, v)
    # the first lagged step from tau is the frozen step itself
    assert np.max(np.abs(w[1])) < 1e-11 * np.max(np.abs(u[1]))
    forcing = [fr.forcing(f) for f in snaps]
    wd = duhamel_remainder(fr, forcing, 1e-3)
    gmax = max(np.max(np.abs(g)) for g in forcing)
    assert np.max(np.abs(w[2] - wd[2])) < 2e-3 * gmax  # right-endpoint rule, O(dt G)
    with pytest.raises(DecompositionError):
        remainder(u, v[:2])


@pytest.mark.parametrize("fixture", ["pme", "sh"])
def test_fitted_c_bounded(fixture, request):
    traj = request.getfixturevalue(fixture)
    out = remainder_bound(traj, 0.04, [0.14, 0.09, 0.065])
    assert not out["vacuous"] and out["ratio"] < 5


@pytest.mark.parametrize("fixture", ["pme", "sh"])
def test_epsilon_window(fixture, request):
    out = epsilon_window(request.getfixturevalue(fixture), 0.1, 1e-3)
    assert out["found"] and out["w_norm"] < 1e-3
    assert out["t1"] < 0.1 < out["t2"]


def test_decompose_errors(pme):
    with pytest.raises(DecompositionError):
        decompose(pme, 0.1, 0.05)
    with pytest.raises(DecompositionError):
        decompose(pme, 0.0405, 0.1)


def test_report_json(pme):
    d = decompose(pme, 0.04, 0.08, power_k=2).to_dict()
    assert {"G_tau_norm", "w_norm", "fitted_C", "power_check", "notes"} <= set(d)
    assert [r["k"] for r in d["power_check"]] == [1, 2]


# --- domain powers -------------------------------------------------------------------

def smooth_bump(x):
    return {0: np.exp(-((x - 0.6) / 0.1) ** 2)}


def test_power_check_stable_for_smooth_flow():
    norms = []
    for N in (200, 400):
        traj = heat_traj(N=N, bc="neumann", data=smooth_bump, t_end=0.01)
        fr = frozen_operator(traj, 0.0)
        norms.append([r["norm"] for r in domain_power_check(fr, traj[0], 0.01, 3)])
    assert np.all(np.isfinite(norms))
    assert np.allclose(norms[0], norms[1], rtol=0.05)


def test_power_check_diverges_for_rough_endpoint():
    norms = []
    for N in (100, 200, 400):
        traj = heat_traj(N=N, bc="neumann", data=smooth_bump, t_end=0.01)
        fr = frozen_operator(traj, 0.0)
        rough = fld(traj.model.mesh, {0: np.abs(traj.model.mesh.x - 0.3)})
        rows = domain_power_check(fr, rough, 0.0, 2)
        assert rows[1]["route"] == "matrix-power"
        norms.append(rows[1]["norm"])
    assert norms[1] > 2 * norms[0] and norms[2] > 2 * norms[1]


def test_power_check_constant_neumann():
    traj = heat_traj(N=80, bc="neumann", data=lambda x: {0: 2.0 + 0 * x}, t_end=0.01)
    fr = frozen_operator(traj, 0.0)
    for t in (0.0, 0.01):
        for r in domain_power_check(fr, traj[0], t, 3):
            # zero, or flagged as pure round-off of the stiff operator
            assert r["norm"] < 1e-8 or not r["resolved"]


# --- sectoriality ------------------------------------------------------------------

def test_probe_identity():
    theta = 3 * np.pi / 4
    res = sectorial_probe(np.eye(3), theta, 0.0, 41)
    assert res.K_est == pytest.approx(scalar_sector_bound([1.0], theta, 0.0, 41), rel=1e-10)
    assert res.K_est >= 1


def test_probe_diagonal():
    theta = 3 * np.pi / 4
    d = [1.0, 10.0, 100.0]
    res = sectorial_probe(np.diag(d), theta, 0.0, 41)
    assert res.K_est == pytest.approx(scalar_sector_bound(d, theta, 0.0, 41), rel=1e-10)


def test_probe_normal_matrix():
    rng = np.random.default_rng(7)
    Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    d = np.logspace(-1, 3, 12)
    A = Q @ np.diag(d) @ Q.T
    theta = 2.5
    res = sectorial_probe(A, theta, 0.5, 31)
    assert res.K_est == pytest.approx(scalar_sector_bound(d, theta, 0.5, 31), rel=1e-8)


def test_probe_neumann_kernel():
    traj = heat_traj(N=120, bc="neumann", spec=circle_spectrum(1, 1),
                     data=lambda x: {0: 1 + 0 * x}, t_end=0.002)
    fr = frozen_operator(traj, 0.0)
    with pytest.raises(SingularResolventError):
        sectorial_probe(fr.matrix, 3 * np.pi / 4, 0.0, 21, fr.weights)
    res = sectorial_probe(fr.matrix, 3 * np.pi / 4, 1.0, 21, fr.weights)
    assert np.isfinite(res.K_est) and res.K_est < 10


def test_probe_bad_theta():
    with pytest.raises(ValueError):
        sectorial_probe(np.eye(2), 1.0)


def test_uniform_scan_heat_constant():
    traj = heat_traj(N=40, bc="neumann", spec=circle_spectrum(1, 1))
    out = uniform_bound_scan(traj, [0.0, 0.02, 0.05], samples=11)
    rows = out["rows"]
    assert all(r["ok"] for r in rows)
    assert len({(r["c_needed"], r["K_est"]) for r in rows}) == 1


def test_uniform_scan_pme_bounded_and_flags_zero(pme):
    out = uniform_bound_scan(pme, [0.0, 0.1, 0.2], samples=11)
    assert all(r["ok"] for r in out["rows"])
    assert out["K_max"] < 100
    broken = Trajectory(list(pme.fields), pme.model, pme.config, pme.problem, pme.scheme)
    i = broken.times.index(0.1)
    broken.fields[i] = broken.fields[i] * 0.0
    rows = uniform_bound_scan(broken, [0.0, 0.1], samples=11)["rows"]
    assert rows[0]["ok"] and not rows[1]["ok"]
    assert "positivity" in rows[1]["error"]
