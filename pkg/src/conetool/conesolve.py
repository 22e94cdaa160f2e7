"""Mode-decomposed solvers on the straight model cone ``(0, 1] x cross section``.

The radial part of the Laplacian on mode ``j`` is

    L_j = x^{-2} ((x d_x)^2 + (n-1) x d_x + lambda_j),

discretized by finite volumes on the mesh in ``s = log x``.  Cell ``i`` carries
the exact volume ``int x^n dx`` of its dual cell and the fluxes are centered
differences in ``s``, so ``V L_j`` is symmetric and constants lie in the kernel
of ``L_0`` exactly.  The innermost cell is the whole ball ``x < x_{1/2}`` with
no flux through the tip; no boundary condition is imposed there.

Heat and Swift-Hohenberg linear parts are solved mode by mode.  Nonlinear terms
(``u^m`` and ``V(u, t)``) are evaluated pointwise on the physical angular grid.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.linalg
from scipy.optimize import brentq
from scipy.special import jv

from .fields import (ConeField, RadialMesh, from_physical, mode_transform,
                     read_field_csv, solver_points, to_physical, write_field_csv)
from .spectrum import ModeSpectrum, spectrum_from_dict

__all__ = [
    "SolverError",
    "PositivityError",
    "NewtonError",
    "InstabilityError",
    "ConeModel",
    "ModeOperator",
    "SolverConfig",
    "Trajectory",
    "assemble_mode_operator",
    "physical_laplacian",
    "FactoredLaplacian",
    "mode_eigenpairs",
    "bessel_zero_squares",
    "solve_heat",
    "solve_pme",
    "solve_sh",
    "mode_transform",
    "weighted_mass",
    "TRBDF2_GAMMA",
]

TRBDF2_GAMMA = 2.0 - np.sqrt(2.0)


class SolverError(RuntimeError):
    """Numerical failure inside a solver."""


class PositivityError(SolverError):
    """PME iterate left the strictly positive regime."""


class NewtonError(SolverError):
    """Newton iteration did not converge."""


class InstabilityError(SolverError):
    """Unforced norm growth beyond the configured factor."""


@dataclass(frozen=True)
class ConeModel:
    """Straight cone over the spectrum's cross section, cut at ``x = 1``.

    ``outer_bc`` is ``"dirichlet"`` (mode 0 held at ``bc_value``, other modes
    at 0) or ``"neumann"`` (no flux at ``x = 1``).
    """

    spectrum: ModeSpectrum
    mesh: RadialMesh
    outer_bc: str = "dirichlet"
    bc_value: float = 0.0
    collar_only: bool = True

    def __post_init__(self):
        if self.outer_bc not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown outer boundary condition {self.outer_bc!r}")

    @property
    def n(self) -> int:
        return self.spectrum.n

    @property
    def n_modes(self) -> int:
        return len(self.spectrum.eigenvalues)

    @property
    def is_circle(self) -> bool:
        return self.spectrum.cross_section.kind == "circle"

    def to_dict(self):
        return {"spectrum": self.spectrum.to_dict(), "mesh": self.mesh.to_dict(),
                "outer_bc": self.outer_bc, "bc_value": self.bc_value,
                "collar_only": self.collar_only}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        mesh = d["mesh"]
        if mesh.get("grading", "geometric") == "geometric":
            if "param" in mesh:
                m = RadialMesh.geometric_ratio(mesh["param"], mesh["N"])
            else:
                m = RadialMesh.geometric(mesh["N"], mesh.get("x0", 1e-6))
        else:
            m = RadialMesh.power_law(mesh["N"], mesh["param"])
        return cls(spectrum_from_dict(d["spectrum"]), m, d.get("outer_bc", "dirichlet"),
                   float(d.get("bc_value", 0.0)))


@dataclass
class ModeOperator:
    """Sparse tridiagonal ``L_j`` on all mesh nodes.

    For Dirichlet models the last row is zero, so ``u_N`` is left unchanged by
    any ``(I - c L)`` solve.
    """

    mode: int
    lam: float
    matrix: sp.csr_matrix
    volumes: np.ndarray
    outer_bc: str

    def __matmul__(self, f):
        return self.matrix @ f

    def apply(self, f):
        return self.matrix @ f

    def free(self) -> slice:
        """Unknowns that evolve (all but the Dirichlet node)."""
        N = self.matrix.shape[0]
        return slice(0, N - 1) if self.outer_bc == "dirichlet" else slice(0, N)


def _faces(mesh: RadialMesh):
    x = mesh.x
    xf = np.sqrt(x[:-1] * x[1:])
    ds = np.diff(mesh.s)
    return xf, ds


def _radial_parts(mesh: RadialMesh, n: int, outer_bc: str):
    """Radial flux matrix (``lambda = 0``), ``1/x^2`` diagonal, cell volumes."""
    x = mesh.x
    xf, ds = _faces(mesh)
    lower = np.concatenate([[0.0], xf ** (n + 1)])
    upper = np.concatenate([xf ** (n + 1), [1.0]])
    vol = (upper - lower) / (n + 1)
    cond = xf ** (n - 1) / ds  # face conductances
    N1 = len(x)
    off = cond / vol[:-1]
    sub = cond / vol[1:]
    diag = np.zeros(N1)
    diag[:-1] -= off
    diag[1:] -= sub
    L = sp.diags([sub, diag, off], [-1, 0, 1], shape=(N1, N1), format="lil")
    kappa = 1.0 / x**2
    if outer_bc == "dirichlet":
        L[N1 - 1, :] = 0.0
        kappa = kappa.copy()
        kappa[-1] = 0.0
    return L.tocsr(), kappa, vol


def assemble_mode_operator(model: ConeModel, j: int) -> ModeOperator:
    """Tridiagonal discretization of ``L_j`` with the model's outer row."""
    lam = float(model.spectrum.eigenvalues[j])
    L0, kappa, vol = _radial_parts(model.mesh, model.n, model.outer_bc)
    L = (L0 + sp.diags(lam * kappa)).tocsr()
    return ModeOperator(j, lam, L, vol, model.outer_bc)


def weighted_mass(f: ConeField, model: ConeModel, j: int = 0) -> complex:
    """Discrete ``int f_j x^n dx`` over the collar."""
    _, _, vol = _radial_parts(model.mesh, model.n, model.outer_bc)
    return np.sum(vol * f.coeffs[j])


def _angular_second_derivative(n_theta: int, a: float) -> np.ndarray:
    """Spectral ``d^2/dy^2`` on ``n_theta`` equispaced points, ``y = a theta``.

    The diagonal is reset so rows sum to zero exactly; the angular term is
    scaled by ``x^{-2}`` near the tip, where round-off in the row sums would
    otherwise leak into the constant mode.
    """
    l = np.fft.rfftfreq(n_theta, 1.0 / n_theta)
    e0 = np.zeros(n_theta)
    e0[0] = 1.0
    col = np.fft.irfft(-(l**2) * np.fft.rfft(e0), n=n_theta)
    col[np.abs(col) < 1e-14 * np.abs(col).max()] = 0.0
    col[0] = -np.sum(col[1:])
    return scipy.linalg.circulant(col) / a**2


def physical_laplacian(model: ConeModel, n_theta: int | None = None) -> sp.csr_matrix:
    """Laplacian on the flattened ``(theta, x)`` grid (theta-major ordering).

    Circle models use the spectral angular derivative on ``2*l_max + 1``
    points; other cross sections are restricted to mode 0 (``n_theta = 1``).
    """
    L0, kappa, _ = _radial_parts(model.mesh, model.n, model.outer_bc)
    if not model.is_circle:
        return L0
    if n_theta is None:
        n_theta = solver_points(model.n_modes - 1)
    if n_theta == 1:
        return L0
    D2 = _angular_second_derivative(n_theta, model.spectrum.cross_section.a)
    return (sp.kron(sp.identity(n_theta), L0)
            + sp.kron(sp.csr_matrix(D2), sp.diags(kappa))).tocsr()



def _real_fourier_basis(n_theta: int):
    """Synthesis matrix with columns ``1, cos l theta, sin l theta`` on an odd
    grid, its exact inverse and the mode index of each column."""
    if n_theta % 2 == 0:
        raise ValueError("the factored Laplacian needs an odd angular grid")
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    cols, ls = [np.ones(n_theta)], [0]
    for l in range(1, (n_theta - 1) // 2 + 1):
        cols += [np.cos(l * theta), np.sin(l * theta)]
        ls += [l, l]
    T = np.column_stack(cols)
    scale = np.where(np.array(ls) == 0, 1.0, 2.0) / n_theta
    return T, scale[:, None] * T.T, ls


class FactoredLaplacian:
    """Physical-grid Laplacian kept as ``Q B Q^{-1}``.

    ``Q`` synthesizes physical values from real Fourier coefficients and ``B``
    is block diagonal with the mode operators ``L_l``.  Shifted systems are
    solved for the coefficients, so ``B`` only ever enters inverted.  The
    assembled matrix cannot annihilate angular constants exactly near the tip,
    where ``x^{-2}`` amplifies row-sum round-off into the constant mode.
    """

    def __init__(self, model: ConeModel, n_theta: int = 1):
        self.model = model
        self.n_theta = n_theta
        if n_theta == 1:
            T, Tinv, ls = np.ones((1, 1)), np.ones((1, 1)), [0]
        else:
            T, Tinv, ls = _real_fourier_basis(n_theta)
        self.T, self.Tinv, self.ls = T, Tinv, ls
        self.ops = {l: assemble_mode_operator(model, l).matrix for l in set(ls)}
        self.nx = len(model.mesh.x)
        eye = sp.identity(self.nx, format="csr")
        self.Q = sp.kron(sp.csr_matrix(T), eye, format="csr")
        self.B = sp.block_diag([self.ops[l] for l in ls], format="csr")
        self.shape = (n_theta * self.nx, n_theta * self.nx)

    def to_modes(self, v):
        return (self.Tinv @ np.reshape(v, (self.n_theta, self.nx))).ravel()

    def from_modes(self, c):
        return (self.T @ np.reshape(c, (self.n_theta, self.nx))).ravel()

    def __matmul__(self, v):
        v = np.asarray(v)
        if v.ndim != 1:
            return np.column_stack([self @ col for col in v.T])
        return self.from_modes(self.B @ self.to_modes(v))

    def matrix(self) -> sp.csr_matrix:
        """Assembled physical matrix (for spectra and dense diagnostics)."""
        return physical_laplacian(self.model, self.n_theta)

    def _blockwise(self, factor):
        lus = {l: factor(self.ops[l]) for l in self.ops}
        nt, nx, ls = self.n_theta, self.nx, self.ls

        def solve(r, trans="N"):
            r = np.asarray(r)
            R = np.reshape(r, (nt, nx))
            C = self.Tinv @ R if trans == "N" else self.T.T @ R
            Y = np.stack([lus[l](C[k], trans) for k, l in enumerate(ls)])
            return (self.T @ Y if trans == "N" else self.Tinv.T @ Y).ravel()

        return solve

    def solver(self, alpha, beta, coef=None, side: str = "left"):
        """Solve ``(alpha I + beta C Delta) x = r`` (``side="left"``) or
        ``(alpha I + beta Delta C) x = r`` (``side="right"``) with
        ``C = diag(coef)``; ``coef=None`` means ``C = I``."""
        cplx = np.iscomplexobj(alpha) or np.iscomplexobj(beta)
        I = sp.identity(self.nx, format="csc")
        if coef is not None and np.all(coef == coef[0]):
            beta, coef = beta * float(coef[0]), None  # scalar C commutes
        if coef is None:
            def factor(L):
                M = sp.csc_matrix(alpha * I + beta * L)
                lu = _lu(M.astype(complex) if cplx else M)
                return lambda c, trans: lu.solve(np.asarray(c, complex) if cplx else c,
                                                 trans=trans)
            return self._blockwise(factor)
        coef = np.asarray(coef, float)
        QB = self.Q @ self.B
        if side == "left":
            M = alpha * self.Q + beta * (sp.diags(coef) @ QB)
            lu = _lu(M.astype(complex) if cplx else M)

            def solve(r, trans="N"):
                r = np.asarray(r, complex) if cplx else np.asarray(r)
                if trans == "N":
                    return self.Q @ lu.solve(r)
                return lu.solve(self.Q.T @ r, trans=trans)
            return solve
        inv = sp.diags(1.0 / coef)
        M = alpha * (inv @ self.Q) + beta * QB
        lu = _lu(M.astype(complex) if cplx else M)

        def solve(r, trans="N"):
            if trans != "N":
                raise NotImplementedError("transposed solves need side='left'")
            r = np.asarray(r, complex) if cplx else np.asarray(r)
            return inv @ (self.Q @ lu.solve(r))
        return solve

    def square_solver(self, alpha, beta):
        """Solve ``(alpha I + beta (Delta + 1)^2) x = r`` per mode through the
        factors ``beta (K + i r)(K - i r)``, ``K = L_l + 1``, ``r^2 = alpha/beta``."""
        root = np.sqrt(complex(alpha) / beta)
        I = sp.identity(self.nx, format="csc")
        real = not (np.iscomplexobj(alpha) or np.iscomplexobj(beta))

        def factor(L):
            K = sp.csc_matrix(L + I)
            f1 = _lu(sp.csc_matrix(K + 1j * root * I))
            f2 = _lu(sp.csc_matrix(K - 1j * root * I))

            def solve(c, trans):
                c = np.asarray(c, complex)
                if trans == "N":
                    z = f2.solve(f1.solve(c)) / beta
                else:
                    z = f1.solve(f2.solve(c, trans=trans), trans=trans) / np.conj(beta)
                return z
            return solve

        inner = self._blockwise(factor)

        def solve(r, trans="N"):
            z = inner(r, trans)
            return z.real if real and not np.iscomplexobj(r) else z
        return solve

def bessel_zero_squares(n: int, lam: float, count: int) -> np.ndarray:
    """``j_{nu,m}^2`` for ``m = 1..count``, ``nu = sqrt(((n-1)/2)^2 - lam)``."""
    nu = np.sqrt(((n - 1) / 2) ** 2 - lam)
    zeros = []
    step = 0.25
    a = max(nu, 0.0) + 1e-6
    fa = jv(nu, a)
    while len(zeros) < count:
        b = a + step
        fb = jv(nu, b)
        if fa == 0.0:
            zeros.append(a)
        elif fa * fb < 0:
            zeros.append(brentq(lambda z: jv(nu, z), a, b, xtol=1e-15, rtol=1e-15))
        a, fa = b, fb
    return np.asarray(zeros[:count]) ** 2


def mode_eigenpairs(model: ConeModel, j: int, count: int):
    """Smallest eigenpairs ``(mu, v)`` of ``-L_j``.

    Eigenvectors span all mesh nodes (zero at a Dirichlet node) and are
    normalized in the discrete ``x^n dx`` inner product, positive near the tip.
    """
    op = assemble_mode_operator(model, j)
    free = op.free()
    A = -op.matrix[free, free]
    w = np.sqrt(op.volumes[free])
    S = sp.diags(w) @ A @ sp.diags(1.0 / w)
    S = (0.5 * (S + S.T)).tocsc()
    size = S.shape[0]
    count = min(count, size - 2)
    try:
        # shift below the spectrum keeps the factorization definite
        # fixed start vector: ARPACK's default is random and breaks reproducibility
        v0 = np.linspace(1.0, 2.0, size)
        mu, vec = spla.eigsh(S, k=count, sigma=-1.0, which="LM", tol=1e-14, v0=v0)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise SolverError(f"eigen-solver failed for mode {j}: {exc}") from exc
    order = np.argsort(mu)
    out = []
    for i in order:
        v = np.zeros(len(model.mesh.x))
        v[free] = vec[:, i] / w
        v /= np.sqrt(np.sum(op.volumes * v * v))
        k = int(np.argmax(np.abs(v) > 1e-8 * np.abs(v).max()))
        if v[k] < 0:
            v = -v
        out.append((float(mu[i]), v))
    return out


@dataclass
class SolverConfig:
    """Time stepping controls.

    ``V_coeffs`` lists the polynomial coefficients ``a_k`` of
    ``V(u, t) = sum_k a_k(t) u^k``; each entry is a number, a list of
    coefficients of a polynomial in ``t`` (lowest order first) or a callable.
    ``pme_form`` is ``"transformed"`` (lagged coefficient in ``w = u^m``) or
    ``"direct"`` (Newton on ``u' = Delta u^m``).
    """

    time_stepper: str = "trbdf2"
    dt: float = 1e-3
    t_end: float = 1.0
    times: tuple | None = None
    imex_split: bool = True
    newton_tol: float = 1e-11
    max_newton: int = 30
    m: float = 1.0
    V_coeffs: tuple = ()
    pme_form: str = "transformed"
    growth_factor: float = 10.0
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if not self.m > 0:
            raise ValueError("m must be positive")
        if self.time_stepper not in ("be", "trbdf2"):
            raise ValueError(f"unknown time stepper {self.time_stepper!r}")
        if self.pme_form not in ("direct", "transformed"):
            raise ValueError(f"unknown PME form {self.pme_form!r}")
        if not self.imex_split:
            raise ValueError("only the IMEX split is implemented for V")

    def output_times(self):
        ts = (0.0, self.t_end) if self.times is None else tuple(self.times)
        steps = []
        for t in ts:
            k = int(round(t / self.dt))
            if t < 0 or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
                raise ValueError(f"output time {t} is not a multiple of dt={self.dt}")
            steps.append(k)
        if any(b < a for a, b in zip(steps, steps[1:])):
            raise ValueError("output times must be non-decreasing")
        return steps

    def V_at(self, t: float):
        out = []
        for c in self.V_coeffs:
            if callable(c):
                out.append(float(c(t)))
            elif np.ndim(c) == 0:
                out.append(float(c))
            else:
                out.append(float(np.polyval(list(c)[::-1], t)))
        return out

    def has_forcing(self) -> bool:
        return any(callable(c) or np.any(np.asarray(c) != 0) for c in self.V_coeffs)

    def to_dict(self):
        v = [c if not callable(c) else repr(c) for c in self.V_coeffs]
        v = [list(c) if isinstance(c, (tuple, list, np.ndarray)) else c for c in v]
        return {"time_stepper": self.time_stepper, "dt": self.dt, "t_end": self.t_end,
                "times": None if self.times is None else list(self.times),
                "imex_split": self.imex_split, "newton_tol": self.newton_tol,
                "max_newton": self.max_newton, "m": self.m, "V_coeffs": v,
                "pme_form": self.pme_form, "growth_factor": self.growth_factor}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "times" in d and d["times"] is not None:
            d["times"] = tuple(d["times"])
        if "V_coeffs" in d:
            d["V_coeffs"] = tuple(tuple(c) if isinstance(c, list) else c
                                  for c in d["V_coeffs"])
        return cls(**d)


@dataclass
class Trajectory:
    """Snapshots of one run, in increasing time."""

    fields: list
    model: ConeModel
    config: SolverConfig
    problem: str
    scheme: str
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return [f.t for f in self.fields]

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    def at(self, t: float, tol: float = 1e-12) -> ConeField:
        for f in self.fields:
            if abs(f.t - t) <= tol * max(1.0, abs(t)):
                return f
        raise KeyError(f"no snapshot at t={t}")

    def manifest(self):
        return {
            "problem": self.problem,
            "scheme": self.scheme,
            "dt": self.config.dt,
            "config": self.config.to_dict(),
            "model": self.model.to_dict(),
            "model_hash": self.model.digest(),
            "times": self.times,
            "files": [f"field_{i:05d}.csv" for i in range(len(self.fields))],
            "completeness": {
                "spectrum_truncated": self.model.spectrum.truncated,
                "l_max": self.model.spectrum.l_max,
                "collar_only": self.model.collar_only,
                "outer_bc": self.model.outer_bc,
            },
            **self.meta,
        }

    def to_directory(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        man = self.manifest()
        for name, f in zip(man["files"], self.fields):
            write_field_csv(f, path / name)
        (path / "manifest.json").write_text(json.dumps(man, sort_keys=True, indent=2))

    @classmethod
    def from_directory(cls, path) -> "Trajectory":
        path = Path(path)
        man = json.loads((path / "manifest.json").read_text())
        model = ConeModel.from_dict(man["model"])
        config = SolverConfig.from_dict(man["config"])
        fields = [read_field_csv(path / name, model.mesh, model.spectrum, t)
                  for name, t in zip(man["files"], man["times"])]
        extra = {k: v for k, v in man.items() if k not in (
            "problem", "scheme", "dt", "config", "model", "model_hash", "times",
            "files", "completeness")}
        return cls(fields, model, config, man["problem"], man["scheme"], extra)


def _threads(config: SolverConfig) -> int:
    if config.threads and config.threads > 1:
        return config.threads
    env = os.environ.get("CONETOOL_THREADS")
    return int(env) if env and env.isdigit() and int(env) > 0 else 1


def _as_real_columns(v):
    return np.column_stack([v.real, v.imag]) if np.iscomplexobj(v) else v


def _from_real_columns(v, like):
    return v[:, 0] + 1j * v[:, 1] if np.iscomplexobj(like) else v


def _lu(M):
    try:
        return spla.splu(sp.csc_matrix(M))
    except RuntimeError as exc:
        raise SolverError(f"linear solve failed: {exc}") from exc


def _prepare_initial(u0: ConeField, model: ConeModel) -> ConeField:
    if u0.mesh != model.mesh:
        raise ValueError("initial field does not live on the model mesh")
    c = np.array(u0.coeffs, dtype=complex if model.is_circle else float)
    if model.outer_bc == "dirichlet":
        c[:, -1] = 0.0
        c[0, -1] = model.bc_value
    return ConeField(c, model.mesh, model.spectrum, u0.t)


def _run(u0, model, config, step_modes, problem, scheme, meta=None):
    """Drive a mode-wise stepper and collect snapshots."""
    out_steps = config.output_times()
    u = _prepare_initial(u0, model)
    t0 = u0.t
    snaps = []
    k = 0
    coeffs = u.coeffs.copy()
    for target in out_steps:
        while k < target:
            t = t0 + k * config.dt
            coeffs = step_modes(coeffs, t)
            k += 1
            if not np.all(np.isfinite(coeffs)):
                raise SolverError(f"non-finite values at t={t + config.dt}")
        snaps.append(ConeField(coeffs.copy(), model.mesh, model.spectrum,
                               t0 + k * config.dt))
    return Trajectory(snaps, model, config, problem, scheme, meta or {})


def _mode_map(fn, coeffs, threads):
    idx = range(coeffs.shape[0])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(fn, idx))
    else:
        rows = [fn(j) for j in idx]
    return np.array(rows)


def solve_heat(model: ConeModel, u0: ConeField, config: SolverConfig) -> Trajectory:
    """Heat flow ``u' = Delta u`` by backward Euler or TR-BDF2, mode by mode."""
    n_modes = u0.n_modes
    ops = [assemble_mode_operator(model, j) for j in range(n_modes)]
    dt = config.dt
    I = sp.identity(len(model.mesh.x), format="csr")
    g = TRBDF2_GAMMA
    if config.time_stepper == "be":
        lus = [_lu(I - dt * op.matrix) for op in ops]

        def step_one(j, v):
            return _from_real_columns(lus[j].solve(_as_real_columns(v)), v)
    else:
        c = 0.5 * g * dt
        lus = [_lu(I - c * op.matrix) for op in ops]
        a2 = 1.0 / (g * (2 - g))
        b2 = (1 - g) ** 2 / (g * (2 - g))

        def step_one(j, v):
            rhs = v + c * (ops[j].matrix @ v)
            mid = _from_real_columns(lus[j].solve(_as_real_columns(rhs)), v)
            rhs2 = a2 * mid - b2 * v
            return _from_real_columns(lus[j].solve(_as_real_columns(rhs2)), v)

    threads = _threads(config)

    def step(coeffs, t):
        return _mode_map(lambda j: step_one(j, coeffs[j]), coeffs, threads)

    return _run(u0, model, config, step, "heat", config.time_stepper)


# --- porous medium ---------------------------------------------------------

def _physical_state(u0: ConeField, model: ConeModel):
    if not model.is_circle and not u0.axisymmetric():
        raise ValueError("nonlinear runs on non-circle cross sections need "
                         "axisymmetric data")
    if model.is_circle and u0.n_modes > 1:
        n_theta = solver_points(u0.n_modes - 1)
        return to_physical(u0, n_theta), n_theta
    return np.real(u0.coeffs[:1]).astype(float), 1


def _check_positive(u, t):
    lo = float(np.min(u))
    if not lo > 0:
        raise PositivityError(f"positivity lost at t={t:.6g} (min value {lo:.3e})")


def _newton(rhs, u_guess, Lap, cdt, m, config, t):
    """Solve ``u - cdt * Lap (u^m) = rhs`` by Newton's method."""
    u = u_guess.copy()
    for _ in range(config.max_newton):
        _check_positive(u, t)
        F = u - cdt * (Lap @ u**m) - rhs
        solve = Lap.solver(1.0, -cdt, m * u ** (m - 1), side="right")
        du = solve(-F)
        u = u + du
        if np.max(np.abs(du)) <= config.newton_tol * max(1.0, np.max(np.abs(u))):
            _check_positive(u, t)
            return u
    raise NewtonError(f"Newton did not converge at t={t:.6g}")


def solve_pme(model: ConeModel, u0: ConeField, config: SolverConfig) -> Trajectory:
    """Porous medium flow ``u' = Delta(u^m)`` for strictly positive data.

    ``config.pme_form == "direct"`` runs backward Euler or TR-BDF2 with Newton
    on ``u``; ``"transformed"`` steps ``w = u^m`` with the lagged coefficient,
    ``(I - dt m w_k^{(m-1)/m} Delta) w_{k+1} = w_k``, and returns ``w^{1/m}``.
    """
    m = config.m
    u0 = _prepare_initial(u0, model)
    if model.outer_bc == "dirichlet" and not model.bc_value > 0:
        raise PositivityError("Dirichlet value must be positive for PME")
    phys0, n_theta = _physical_state(u0, model)
    _check_positive(phys0, u0.t)
    Lap = FactoredLaplacian(model, n_theta)
    shape = phys0.shape
    n_modes = u0.n_modes
    dt = config.dt

    def to_field(vals, t):
        if n_theta == 1:
            c = vals.reshape(1, -1)
            if model.is_circle:
                c = c.astype(complex)
            if n_modes > 1:
                c = np.vstack([c, np.zeros((n_modes - 1, c.shape[1]), c.dtype)])
            return ConeField(c, model.mesh, model.spectrum, t)
        return from_physical(vals.reshape(shape), model.mesh, model.spectrum, t,
                             n_modes=n_modes)

    if config.pme_form == "transformed":
        scheme = "lagged-be"

        def advance(u, t):
            w = u**m
            w_new = Lap.solver(1.0, -dt, m * w ** ((m - 1) / m))(w)
            _check_positive(w_new, t + dt)
            return w_new ** (1.0 / m)
    elif config.time_stepper == "be":
        scheme = "newton-be"

        def advance(u, t):
            return _newton(u, u, Lap, dt, m, config, t + dt)
    else:
        scheme = "newton-trbdf2"
        g = TRBDF2_GAMMA
        c = 0.5 * g * dt
        a2 = 1.0 / (g * (2 - g))
        b2 = (1 - g) ** 2 / (g * (2 - g))

        def advance(u, t):
            mid = _newton(u + c * (Lap @ u**m), u, Lap, c, m, config, t + g * dt)
            return _newton(a2 * mid - b2 * u, mid, Lap, c, m, config, t + dt)

    out_steps = config.output_times()
    u = phys0.ravel().copy()
    snaps, k = [], 0
    for target in out_steps:
        while k < target:
            u = advance(u, u0.t + k * dt)
            k += 1
        snaps.append(to_field(u, u0.t + k * dt))
    return Trajectory(snaps, model, config, "pme", scheme,
                      {"n_theta": n_theta, "pme_form": config.pme_form})


# --- Swift-Hohenberg ---------------------------------------------------------

def _evaluate_V(coeffs, model, config, t, n_modes):
    a = config.V_at(t)
    if not a:
        return np.zeros_like(coeffs)
    f = ConeField(coeffs, model.mesh, model.spectrum, t)
    if model.is_circle and n_modes > 1:
        vals = to_physical(f, solver_points(n_modes - 1))
    else:
        if not f.axisymmetric():
            raise ValueError("nonlinear runs on non-circle cross sections need "
                             "axisymmetric data")
        vals = np.real(coeffs[:1])
    V = np.polynomial.polynomial.polyval(vals, a)
    if model.is_circle and n_modes > 1:
        return from_physical(V, model.mesh, model.spectrum, t, n_modes=n_modes).coeffs
    out = np.zeros_like(coeffs)
    out[0] = V[0]
    return out


class _ShiftedSquareSolver:
    """Solves ``(I + beta (L + 1)^2) u = r`` through the complex factors
    ``(I + i sqrt(beta)(L + 1)) (I - i sqrt(beta)(L + 1))``."""

    def __init__(self, L, beta):
        N = L.shape[0]
        I = sp.identity(N, format="csc")
        K = sp.csc_matrix(L + I)
        rb = np.sqrt(beta)
        self.plus = _lu((I + 1j * rb * K).astype(complex))
        self.minus = _lu((I - 1j * rb * K).astype(complex))

    def solve(self, r):
        cols = _as_real_columns(r).astype(complex)
        z = self.minus.solve(self.plus.solve(cols))
        return _from_real_columns(z.real, r)


def solve_sh(model: ConeModel, u0: ConeField, config: SolverConfig) -> Trajectory:
    """Swift-Hohenberg flow ``u' + (Delta + 1)^2 u = V(u, t)``.

    The fourth-order part is implicit per mode, ``V`` is explicit and is
    evaluated on the physical grid.
    """
    if model.outer_bc == "dirichlet" and model.bc_value != 0.0:
        raise ValueError("Swift-Hohenberg runs need a homogeneous outer value")
    n_modes = u0.n_modes
    ops = [assemble_mode_operator(model, j) for j in range(n_modes)]
    dt = config.dt
    g = TRBDF2_GAMMA
    forced = config.has_forcing()
    u_ref = [None]

    def A(j, v):
        w = ops[j].matrix @ v + v
        return ops[j].matrix @ w + w

    if config.time_stepper == "be":
        solvers = [_ShiftedSquareSolver(op.matrix, dt) for op in ops]

        def step(coeffs, t):
            rhs = coeffs + dt * _evaluate_V(coeffs, model, config, t, n_modes)
            return _mode_map(lambda j: solvers[j].solve(rhs[j]), coeffs, _threads(config))
    else:
        c = 0.5 * g * dt
        solvers = [_ShiftedSquareSolver(op.matrix, c) for op in ops]
        a2 = 1.0 / (g * (2 - g))
        b2 = (1 - g) ** 2 / (g * (2 - g))

        def step(coeffs, t):
            V0 = _evaluate_V(coeffs, model, config, t, n_modes)
            rhs = np.array([coeffs[j] - c * A(j, coeffs[j]) for j in range(n_modes)])
            rhs = rhs + g * dt * V0
            mid = _mode_map(lambda j: solvers[j].solve(rhs[j]), coeffs, _threads(config))
            V1 = _evaluate_V(mid, model, config, t + g * dt, n_modes)
            rhs2 = a2 * mid - b2 * coeffs + c * V1
            return _mode_map(lambda j: solvers[j].solve(rhs2[j]), coeffs, _threads(config))

    def guarded(coeffs, t):
        new = step(coeffs, t)
        if not forced:
            if u_ref[0] is None:
                u_ref[0] = max(float(np.max(np.abs(coeffs))), 1e-300)
            if np.max(np.abs(new)) > config.growth_factor * u_ref[0]:
                raise InstabilityError(
                    f"unforced growth beyond factor {config.growth_factor} at t={t + dt:.6g}")
        return new

    return _run(u0, model, config, guarded, "sh", "imex-" + config.time_stepper)
