"""Frozen-coefficient splitting ``u = v_tau + w_tau`` and sectoriality probes.

All operators act on flattened physical states: ``n_theta`` angular rows of
radial node values (``n_theta = 1`` for axisymmetric runs).  The state is ``u``
for heat and Swift-Hohenberg flows and ``w = u^m`` for porous medium flows,
whose quasilinear form is ``w' + A(w) w = 0`` with
``A(w) = -m w^{(m-1)/m} Delta``.

Spatial norms are weighted ``L^2(x^{n - 2 gamma} dx dy)`` norms (normalized
cross-section measure), the ``s = 0`` Mellin-Sobolev norm on the model cone up
to equivalence.  Only the scalar resolvent bound is probed; R-boundedness has
no finite-sample certificate and is not estimated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conesolve import (ConeModel, SolverConfig, SolverError, Trajectory,
                        TRBDF2_GAMMA, FactoredLaplacian, _radial_parts)
from .fields import ConeField, from_physical, solver_points, to_physical
from .indicial import predicted_x_exponents, strip_certificate, weight_window
from .meshnorm import FitError, fit_exponent
from .spectrum import lambda1

__all__ = [
    "R_SECTORIAL_NOTE",
    "DecompositionError",
    "SingularResolventError",
    "RoundoffError",
    "FrozenOperator",
    "DecompositionReport",
    "ProbeResult",
    "default_gamma",
    "frozen_operator",
    "smooth_part",
    "smooth_part_expm",
    "remainder",
    "duhamel_remainder",
    "decompose",
    "remainder_bound",
    "epsilon_window",
    "domain_power_check",
    "sectorial_probe",
    "uniform_bound_scan",
]

R_SECTORIAL_NOTE = ("R-sectoriality is not probed: only the scalar bound "
                    "(1+|lambda|) ||(A+c+lambda)^-1|| is estimated")
VACUOUS_FORCING = 1e-14
SINGULAR_K = 1e10
DENSE_LIMIT = 256
SCAN_LIMIT = 1024
EXPM_LIMIT = 256


class DecompositionError(ValueError):
    """Invalid window or trajectory for the splitting."""


class SingularResolventError(SolverError):
    """``A + c + lambda`` is (numerically) singular at a sample point."""

    def __init__(self, lam, msg=""):
        self.lam = complex(lam)
        super().__init__(msg or f"singular resolvent at lambda={self.lam}")


class RoundoffError(SolverError):
    """Operator powers are dominated by amplified round-off."""


def default_gamma(model: ConeModel) -> float:
    """Midpoint of the Laplacian weight window (a safe weight choice)."""
    win = weight_window("laplacian", model.n, lambda1(model.spectrum))
    return 0.5 * (win.lo + win.hi)


def _state_layout(model: ConeModel, f: ConeField):
    if model.is_circle and f.n_modes > 1:
        return solver_points(f.n_modes - 1)
    if not f.axisymmetric():
        raise DecompositionError("non-circle cross sections need axisymmetric data")
    return 1


@dataclass
class FrozenOperator:
    """``A_tau = A(u(tau))`` on flattened physical states."""

    tau: float
    matrix: sp.csr_matrix
    problem: str
    model: ConeModel
    config: SolverConfig
    n_theta: int
    n_modes: int
    gamma: float
    coefficient: np.ndarray | None = None
    lap: FactoredLaplacian | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def weights(self) -> np.ndarray:
        _, _, vol = _radial_parts(self.model.mesh, self.model.n, self.model.outer_bc)
        w = vol * self.model.mesh.x ** (-2.0 * self.gamma)
        return np.tile(w, self.n_theta) / self.n_theta

    def physical(self, f: ConeField) -> np.ndarray:
        if self.n_theta == 1:
            return np.real(f.coeffs[0]).astype(float).copy()
        return to_physical(f, self.n_theta).ravel()

    def state(self, f: ConeField) -> np.ndarray:
        u = self.physical(f)
        if self.problem == "pme":
            return u ** self.config.m
        return u

    def to_field(self, v, t: float) -> ConeField:
        """Field holding the state variable (``w = u^m`` for PME)."""
        mesh, spec = self.model.mesh, self.model.spectrum
        if self.n_theta == 1:
            c = np.zeros((self.n_modes, len(mesh.x)),
                         dtype=complex if self.model.is_circle else float)
            c[0] = v
            return ConeField(c, mesh, spec, t)
        return from_physical(np.reshape(v, (self.n_theta, -1)), mesh, spec, t,
                             n_modes=self.n_modes)

    def project(self, v) -> np.ndarray:
        """Band-limit ``v`` to the retained modes (a round trip through the
        mode coefficients; exact on the odd solver grid)."""
        if self.n_theta == 1:
            return v
        return self.physical(self.to_field(v, 0.0))

    def apply(self, v) -> np.ndarray:
        """``A_tau v`` through the factored Laplacian."""
        if self.problem == "sh":
            Kv = self.lap @ v + v
            return self.lap @ Kv + Kv
        out = -(self.lap @ v)
        return self.coefficient * out if self.problem == "pme" else out

    def operator_at(self, f: ConeField) -> sp.csr_matrix:
        """``A(u(t))`` for the snapshot ``f`` (assembled)."""
        if self.problem == "pme":
            coef = _pme_coefficient(self.state(f), self.config.m, f.t)
            return (sp.diags(coef) @ (-self.lap.matrix())).tocsr()
        return self.matrix

    def forcing(self, f: ConeField) -> np.ndarray:
        """``G_tau(t) = (A_tau - A(u(t))) u(t) + V(u(t), t)`` in state space."""
        s = self.state(f)
        if self.problem == "pme":
            coef = _pme_coefficient(s, self.config.m, f.t)
            return (coef - self.coefficient) * (self.lap @ s)
        if self.problem == "sh":
            a = self.config.V_at(f.t)
            if not a:
                return np.zeros_like(s)
            return self.project(np.polynomial.polynomial.polyval(s, a))
        return np.zeros_like(s)

    def norm(self, v) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(v) ** 2)))

    def solver(self, alpha: complex, beta: float):
        """Solve ``(alpha I + beta A_tau) x = r``; ``solve(r, trans="N")``.

        Systems are solved for the angular mode coefficients.  The
        Swift-Hohenberg operator ``K^2`` (``K = Delta + 1``) is factored as
        ``beta (K + i r)(K - i r)`` with ``r^2 = alpha / beta``; each factor is
        far better conditioned than the square on graded meshes.
        """
        if self.problem == "sh":
            return self.lap.square_solver(alpha, beta)
        return self.lap.solver(alpha, -beta, self.coefficient)


def _pme_coefficient(w, m, t):
    lo = float(np.min(w))
    if not lo > 0:
        raise SolverError(f"positivity failure at t={t:.6g} (min {lo:.3e})")
    return m * w ** ((m - 1.0) / m)


def frozen_operator(traj: Trajectory, tau: float, problem: str | None = None,
                    model: ConeModel | None = None, config: SolverConfig | None = None,
                    gamma: float | None = None) -> FrozenOperator:
    """Freeze the quasilinear operator at the snapshot ``u(tau)``."""
    problem = traj.problem if problem is None else problem
    model = traj.model if model is None else model
    config = traj.config if config is None else config
    if problem not in ("heat", "pme", "sh"):
        raise ValueError(f"unknown problem {problem!r}")
    f = traj.at(tau)
    n_theta = _state_layout(model, f)
    lap = FactoredLaplacian(model, n_theta)
    L = lap.matrix()
    gamma = default_gamma(model) if gamma is None else gamma
    coef = None
    if problem == "heat":
        A = -L
    elif problem == "sh":
        K = L + sp.identity(L.shape[0], format="csr")
        A = K @ K
    else:
        u = f.coeffs[0].real if n_theta == 1 else to_physical(f, n_theta).ravel()
        coef = _pme_coefficient(u ** config.m, config.m, tau)
        A = sp.diags(coef) @ (-L)
    return FrozenOperator(float(tau), sp.csr_matrix(A), problem, model, config,
                          n_theta, f.n_modes, float(gamma), coef, lap)


def _linear_stepper(fr: FrozenOperator, dt: float, stepper: str):
    if stepper == "be":
        return fr.solver(1.0, dt)
    g = TRBDF2_GAMMA
    c = 0.5 * g * dt
    solve = fr.solver(1.0, c)
    a2 = 1.0 / (g * (2 - g))
    b2 = (1 - g) ** 2 / (g * (2 - g))

    def step(v):
        mid = solve(v - c * fr.apply(v))
        return solve(a2 * mid - b2 * v)

    return step


def _step_counts(times, tau, dt):
    ks = []
    for t in times:
        k = int(round((t - tau) / dt))
        if k < 0 or abs(tau + k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise DecompositionError(f"time {t} is not on the dt grid from tau={tau}")
        ks.append(k)
    return ks


def smooth_part(fr: FrozenOperator, u_tau, times, dt: float | None = None,
                stepper: str | None = None) -> list:
    """``v_tau(t)`` solving ``v' + A_tau v = 0``, ``v(tau) = u(tau)``.

    ``u_tau`` is a state vector or a field.  Returns state vectors at
    ``times``, using the trajectory's stepper and step size by default.
    """
    v = fr.state(u_tau) if isinstance(u_tau, ConeField) else np.asarray(u_tau, float)
    dt = fr.config.dt if dt is None else dt
    step = _linear_stepper(fr, dt, stepper or fr.config.time_stepper)
    out, k = [], 0
    for target in _step_counts(times, fr.tau, dt):
        while k < target:
            v = step(v)
            k += 1
        out.append(v.copy())
    return out


def smooth_part_expm(fr: FrozenOperator, u_tau, times) -> list:
    """Exact propagator ``exp(-(t - tau) A_tau) u(tau)`` for small operators."""
    if fr.size > EXPM_LIMIT:
        raise ValueError(f"operator size {fr.size} exceeds {EXPM_LIMIT}; coarsen the mesh")
    from scipy.linalg import expm

    v = fr.state(u_tau) if isinstance(u_tau, ConeField) else np.asarray(u_tau, float)
    A = fr.matrix.toarray()
    return [expm(-(t - fr.tau) * A) @ v for t in times]


def _window(traj: Trajectory, tau: float, nu: float):
    snaps = [f for f in traj.fields if tau - 1e-12 <= f.t <= nu + 1e-12]
    if len(snaps) < 2:
        raise DecompositionError(f"window [{tau}, {nu}] holds fewer than 2 snapshots")
    if abs(snaps[0].t - tau) > 1e-12 * max(1, abs(tau)):
        raise DecompositionError(f"tau={tau} is not a trajectory time stamp")
    ts = np.array([f.t for f in snaps])
    dts = np.diff(ts)
    if not np.allclose(dts, traj.config.dt, rtol=1e-6):
        raise DecompositionError("decomposition needs snapshots at every time step "
                                 "inside the window")
    return snaps, ts


def remainder(traj_states, v_tau) -> list:
    """``w_tau = u - v_tau`` snapshot by snapshot."""
    if len(traj_states) != len(v_tau):
        raise DecompositionError("time-stamp mismatch between u and v_tau")
    return [u - v for u, v in zip(traj_states, v_tau)]


def duhamel_remainder(fr: FrozenOperator, forcing, dt: float) -> list:
    """Variation of constants by the right-endpoint rule:
    ``w_{k+1} = (I + dt A_tau)^{-1} (w_k + dt G_tau(t_{k+1}))``."""
    solve = fr.solver(1.0, dt)
    w = [np.zeros(fr.size)]
    for g in forcing[1:]:
        w.append(solve(w[-1] + dt * g))
    return w


def _lq(values, ts, q):
    values = np.asarray(values, float)
    if len(values) < 2:
        return 0.0
    return float(np.trapezoid(values**q, ts) ** (1.0 / q))


def _mr_norm(fr, w, ts, q):
    """Maximal-regularity surrogate: ``L^q`` in time of ``||w||``, ``||w'||``
    (backward differences) and ``||A_tau w||``."""
    nw = [fr.norm(v) for v in w]
    nd = [0.0] + [fr.norm((b - a) / (t1 - t0))
                  for a, b, t0, t1 in zip(w, w[1:], ts, ts[1:])]
    na = [fr.norm(fr.apply(v)) for v in w]
    return _lq(nw, ts, q) + _lq(nd, ts, q) + _lq(na, ts, q)


@dataclass
class DecompositionReport:
    tau: float
    nu: float
    q: float
    gamma: float
    times: list
    v_tau: list
    w_tau: list
    w_duhamel: list
    G_tau_norm: float
    w_norm: float
    fitted_C: float | None
    vacuous: bool
    w_at_tau: float
    duhamel_gap: float
    power_check: list = field(default_factory=list)
    problem: str = ""

    def to_dict(self):
        return {
            "tau": self.tau, "nu": self.nu, "q": self.q, "gamma": self.gamma,
            "problem": self.problem,
            "G_tau_norm": self.G_tau_norm, "w_norm": self.w_norm,
            "fitted_C": self.fitted_C, "vacuous": self.vacuous,
            "w_at_tau": self.w_at_tau, "duhamel_gap": self.duhamel_gap,
            "power_check": self.power_check,
            "n_snapshots": len(self.times),
            "norms": {"spatial": "weighted L2(x^(n-2 gamma) dx dy)",
                      "time": f"L^{self.q} trapezoid",
                      "max_regularity": "||w|| + ||w'|| + ||A_tau w||"},
            "notes": [R_SECTORIAL_NOTE],
        }


def decompose(traj: Trajectory, tau: float, nu: float, q: float = 2.0,
              gamma: float | None = None, power_k: int = 0) -> DecompositionReport:
    """Split the trajectory on ``[tau, nu]`` and measure both parts."""
    if not nu > tau:
        raise DecompositionError("need nu > tau")
    if not q >= 1:
        raise DecompositionError("q must be >= 1")
    snaps, ts = _window(traj, tau, nu)
    fr = frozen_operator(traj, tau, gamma=gamma)
    u = [fr.state(f) for f in snaps]
    v = smooth_part(fr, u[0], ts)
    w = remainder(u, v)
    G = [fr.forcing(f) for f in snaps]
    wd = duhamel_remainder(fr, G, traj.config.dt)
    G_norm = _lq([fr.norm(g) for g in G], ts, q)
    w_norm = _mr_norm(fr, w, ts, q)
    vacuous = G_norm < VACUOUS_FORCING
    C = None if vacuous else w_norm / G_norm
    scale = max(max(fr.norm(x) for x in u), 1e-300)
    gap = max(fr.norm(a - b) for a, b in zip(w, wd)) / scale
    checks = []
    if power_k:
        mid = ts[len(ts) // 2]
        checks = domain_power_check(fr, u[0], mid, power_k)
    return DecompositionReport(float(tau), float(nu), float(q), fr.gamma, list(ts), v, w,
                               wd, G_norm, w_norm, C, vacuous, fr.norm(w[0]), gap,
                               checks, traj.problem)


def remainder_bound(traj: Trajectory, tau: float, nus, q: float = 2.0,
                    gamma: float | None = None) -> dict:
    """``fitted_C`` over nested windows ``[tau, nu]``."""
    nus = sorted(nus, reverse=True)
    if len(nus) < 3:
        raise DecompositionError("need at least 3 nested windows")
    rows = []
    for nu in nus:
        rep = decompose(traj, tau, nu, q, gamma)
        rows.append({"nu": nu, "G_tau_norm": rep.G_tau_norm, "w_norm": rep.w_norm,
                     "fitted_C": rep.fitted_C, "vacuous": rep.vacuous})
    Cs = [r["fitted_C"] for r in rows if r["fitted_C"] is not None]
    out = {"tau": tau, "q": q, "rows": rows, "vacuous": not Cs}
    if Cs:
        out.update(C_min=min(Cs), C_max=max(Cs), ratio=max(Cs) / min(Cs))
    return out


def epsilon_window(traj: Trajectory, t: float, eps: float, q: float = 2.0,
                   gamma: float | None = None, max_halvings: int = 60) -> dict:
    """Shrink a window ``(t1, t2)`` around ``t`` until ``||u - v_{t1}|| < eps``.

    The half-width starts at the largest symmetric span inside the trajectory
    and is halved (snapped to the time grid) until the bound holds.
    """
    dt = traj.config.dt
    t0, tend = traj.times[0], traj.times[-1]
    if not t0 < t < tend:
        raise DecompositionError("t must lie strictly inside the trajectory")
    steps = int(round(min(t - t0, tend - t) / dt))
    kt = int(round((t - t0) / dt))
    history = []
    for _ in range(max_halvings):
        steps = max(steps, 1)
        t1, t2 = t0 + (kt - steps) * dt, t0 + (kt + steps) * dt
        rep = decompose(traj, t1, t2, q, gamma)
        history.append({"t1": t1, "t2": t2, "w_norm": rep.w_norm})
        if rep.w_norm < eps:
            return {"t": t, "eps": eps, "t1": t1, "t2": t2, "w_norm": rep.w_norm,
                    "found": True, "history": history}
        if steps == 1:
            break
        steps //= 2
    return {"t": t, "eps": eps, "found": False, "history": history}


def _fit_tip(fr, v, t):
    f = fr.to_field(v, t)
    try:
        fit = fit_exponent(f, 0, (1e-4, 1e-2), subtract_constant=True)
    except FitError as exc:
        return {"error": str(exc)}
    return fit.to_dict()


def domain_power_check(fr: FrozenOperator, u_tau, t: float, k_max: int = 2,
                       substep: float | None = None, gamma: float | None = None) -> list:
    """Norms of ``A_tau^k v_tau(t)`` for ``k = 1..k_max``.

    For ``t > tau`` the powers come from the backward-Euler resolvent identity
    ``A (I + d A)^{-1} = (I - (I + d A)^{-1}) / d``: with ``v_i`` a
    backward-Euler sequence of step ``d`` ending at ``t``, ``A^k v_M`` is the
    ``k``-th backward difference over ``d^k``.  This avoids the round-off
    amplification of repeated multiplication by the stiff matrix.  At
    ``t = tau`` the matrix powers are used and a condition estimate decides
    whether the value is meaningful.
    """
    v0 = fr.state(u_tau) if isinstance(u_tau, ConeField) else np.asarray(u_tau, float)
    eps = np.finfo(float).eps
    rows = []
    span = t - fr.tau
    if span < -1e-15:
        raise DecompositionError("t must not precede tau")
    if span > 1e-15:
        d = substep or min(fr.config.dt, span / max(4 * k_max, 8))
        M = max(int(round(span / d)), k_max)
        d = span / M
        solve = fr.solver(1.0, d)
        seq = [v0]
        for _ in range(M):
            seq.append(solve(seq[-1]))
        v = seq[-1]
        for k in range(1, k_max + 1):
            tail = seq[-(k + 1):]
            Akv = sum((-1) ** (k - i) * comb(k, i) * tail[i] for i in range(k + 1)) / d**k
            noise = eps * 2**k * max(np.abs(x).max() for x in tail) / d**k
            rel = noise * np.sqrt(np.sum(fr.weights)) / max(fr.norm(Akv), 1e-300)
            rows.append({"k": k, "norm": fr.norm(Akv), "route": "resolvent",
                         "substep": d, "roundoff_estimate": float(rel)})
    else:
        v = v0
        Akv = v0
        bound = np.abs(v0)
        absA = abs(fr.matrix)
        for k in range(1, k_max + 1):
            Akv = fr.matrix @ Akv
            bound = absA @ bound
            rel = eps * fr.norm(bound) / max(fr.norm(Akv), 1e-300)
            rows.append({"k": k, "norm": fr.norm(Akv), "route": "matrix-power",
                         "roundoff_estimate": float(rel)})
    for r in rows:
        r["resolved"] = bool(r["roundoff_estimate"] < 1e-3)
    if k_max > 3 and not all(r["resolved"] for r in rows):
        worst = max(r["roundoff_estimate"] for r in rows)
        raise RoundoffError(f"A^k v dominated by round-off (relative estimate {worst:.2e}) "
                            "for k_max > 3; use a coarser mesh")
    tip = _fit_tip(fr, v, t)
    g = fr.gamma if gamma is None else gamma
    for r in rows:
        spec, kk = fr.model.spectrum, r["k"] + 1
        pred = predicted_x_exponents(spec, fr.model.n, g, kk, allow_incomplete=True)
        r["predicted_exponents"] = [[float(a), int(e)] for a, e in pred]
        r["predicted_complete"] = strip_certificate(spec, fr.model.n, g, kk)
        r["tip_fit"] = tip
        if "alpha" in tip:
            gaps = [abs(tip["alpha"] - a) for a, _ in pred if a > 0]
            r["nearest_gap"] = min(gaps) if gaps else None
    return rows


@dataclass
class ProbeResult:
    K_est: float
    theta: float
    shift: float
    argmax: complex
    samples: int
    spectrum_scan: str
    notes: tuple = (R_SECTORIAL_NOTE,)

    def to_dict(self):
        return {"K_est": self.K_est, "theta": self.theta, "shift": self.shift,
                "argmax": [self.argmax.real, self.argmax.imag],
                "samples": self.samples, "spectrum_scan": self.spectrum_scan,
                "notes": list(self.notes)}


def _probe_points(theta, samples):
    per_ray = max((samples - 1) // 2, 1)
    radii = np.logspace(-3, 6, per_ray)
    pts = [0.0 + 0.0j]
    for sgn in (1, -1):
        pts += list(radii * np.exp(1j * sgn * theta))
    return pts


def _resolvent_norm(A, mu, d, dense):
    if dense is not None:
        M = dense + mu * np.eye(dense.shape[0])
        try:
            R = np.linalg.solve(M, np.diag(1.0 / d))
        except np.linalg.LinAlgError:
            return np.inf
        return float(np.linalg.norm(d[:, None] * R, 2))
    n = A.shape[0]
    try:
        lu = spla.splu(sp.csc_matrix(A + mu * sp.identity(n), dtype=complex))
    except RuntimeError:
        return np.inf
    op = spla.LinearOperator(
        (n, n), dtype=complex,
        matvec=lambda x: d * lu.solve(np.asarray(x, complex).ravel() / d),
        rmatvec=lambda x: lu.solve(d * np.asarray(x, complex).ravel(), trans="H") / d)
    try:
        v0 = np.ones(n, dtype=complex) / np.sqrt(n)  # fixed start keeps runs bit-identical
        s = spla.svds(op, k=1, return_singular_vectors=False, tol=1e-10, maxiter=5000,
                      v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"resolvent norm did not converge at {mu}") from exc
    return float(s[0])


def sectorial_probe(A, theta: float, c: float = 0.0, samples: int = 41,
                    weights=None) -> ProbeResult:
    """Estimate ``sup (1 + |lambda|) ||(A + c + lambda)^{-1}||`` over the rays
    ``arg lambda = +-theta`` (``|lambda|`` log-spaced in ``[1e-3, 1e6]``) and
    ``lambda = 0``, in the norm ``||W^{1/2} x||``.
    """
    if not np.pi / 2 < theta < np.pi:
        raise ValueError("theta must lie in (pi/2, pi)")
    if c < 0:
        raise ValueError("shift must be non-negative")
    A = sp.csr_matrix(A) if not isinstance(A, np.ndarray) else A
    n = A.shape[0]
    d = np.ones(n) if weights is None else np.sqrt(np.asarray(weights, float))
    As = (A + c * np.eye(n)) if isinstance(A, np.ndarray) else (A + c * sp.identity(n)).tocsr()
    dense = None
    if n <= DENSE_LIMIT:
        dense = np.asarray(As.toarray() if sp.issparse(As) else As, dtype=complex)
    scan = "skipped"
    if n <= SCAN_LIMIT:
        ev = np.linalg.eigvals(As.toarray() if sp.issparse(As) else As)
        big = np.max(np.abs(ev)) if len(ev) else 1.0
        for z in ev:
            if abs(z) <= 1e-13 * big:
                continue  # left to the lambda = 0 sample
            if abs(np.angle(z)) >= np.pi - theta:
                raise SingularResolventError(
                    -z, f"spectrum of A+c meets the sector: eigenvalue {z:.6g} "
                        f"(singular at lambda={-z:.6g})")
        scan = "passed"
    best, arg = 0.0, 0j
    for lam in _probe_points(theta, samples):
        r = _resolvent_norm(As, lam, d, dense)
        val = (1 + abs(lam)) * r
        if not np.isfinite(val) or val > SINGULAR_K:
            raise SingularResolventError(lam)
        if val > best:
            best, arg = val, complex(lam)
    return ProbeResult(float(best), float(theta), float(c), arg, samples, scan)


def uniform_bound_scan(traj: Trajectory, times, theta: float = 3 * np.pi / 4,
                       samples: int = 21, gamma: float | None = None,
                       shifts=(0, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024)) -> dict:
    """Smallest shift making the probe finite, and its bound, per time stamp."""
    rows = []
    for t in times:
        row = {"t": float(t)}
        try:
            fr = frozen_operator(traj, t, gamma=gamma)
        except (SolverError, KeyError, DecompositionError) as exc:
            row.update(ok=False, error=str(exc))
            rows.append(row)
            continue
        for c in shifts:
            try:
                res = sectorial_probe(fr.matrix, theta, c, samples, fr.weights)
            except SingularResolventError:
                continue
            row.update(ok=True, c_needed=float(c), K_est=res.K_est)
            break
        else:
            row.update(ok=False, error="no shift in the grid gives a finite bound")
        rows.append(row)
    good = [r for r in rows if r.get("ok")]
    out = {"theta": theta, "rows": rows, "notes": [R_SECTORIAL_NOTE]}
    if good:
        out.update(c_max=max(r["c_needed"] for r in good),
                   K_max=max(r["K_est"] for r in good))
    return out
