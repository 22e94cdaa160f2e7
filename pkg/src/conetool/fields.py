"""Radial meshes, fields on the model cone and the angular mode transform.

A :class:`ConeField` stores one radial profile per cross-section mode.  For
circle cross sections mode ``l`` holds the complex coefficient ``c_l`` of
``exp(i l theta)``; the physical field is ``c_0 + 2 Re sum_{l>=1} c_l
exp(i l theta)``.  For spheres and custom spectra each mode holds the real
coefficient of one representative harmonic, normalized to sup-norm one, and
only axisymmetric (mode-0) fields have a physical-grid representation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .spectrum import ModeSpectrum

__all__ = [
    "RadialMesh",
    "ConeField",
    "TransformError",
    "angular_points",
    "solver_points",
    "to_physical",
    "from_physical",
    "mode_transform",
    "cutoff",
    "write_field_csv",
    "read_field_csv",
]


class TransformError(ValueError):
    """Field cannot be mapped to the physical cross-section grid."""


@dataclass(frozen=True)
class RadialMesh:
    """Nodes ``x_0 < ... < x_N = 1`` on the open collar (the tip is excluded)."""

    x: np.ndarray
    grading: str
    param: float

    @classmethod
    def geometric(cls, N: int, x0: float = 1e-6) -> "RadialMesh":
        """Geometric mesh with ``x_0 = x0`` and constant ratio ``x0**(1/N)``."""
        if N < 2:
            raise ValueError("need N >= 2")
        if not 0 < x0 < 1:
            raise ValueError("x0 must lie in (0, 1)")
        return cls.geometric_ratio(x0 ** (1.0 / N), N)

    @classmethod
    def geometric_ratio(cls, r: float, N: int) -> "RadialMesh":
        if not 0 < r < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if N < 2:
            raise ValueError("need N >= 2")
        # uniform in log x, so x_i / x_{i+1} = r up to rounding
        s = np.log(r) * np.arange(N, -1, -1, dtype=float)
        x = np.exp(s)
        x[-1] = 1.0
        return cls(x, "geometric", float(r))

    @classmethod
    def power_law(cls, N: int, beta: float) -> "RadialMesh":
        if beta < 1:
            raise ValueError("power-law exponent must be >= 1")
        x = (np.arange(1, N + 2, dtype=float) / (N + 1)) ** beta
        x[-1] = 1.0
        return cls(x, "power", float(beta))

    @property
    def N(self) -> int:
        return len(self.x) - 1

    @property
    def s(self) -> np.ndarray:
        return np.log(self.x)

    @property
    def h(self) -> float:
        """Log spacing of a geometric mesh (max log spacing otherwise)."""
        return float(np.max(np.diff(self.s)))

    @property
    def x0(self) -> float:
        return float(self.x[0])

    def window(self, lo: float, hi: float) -> np.ndarray:
        return np.flatnonzero((self.x >= lo) & (self.x <= hi))

    def to_dict(self):
        return {"grading": self.grading, "param": self.param, "N": self.N,
                "x0": self.x0}

    def __eq__(self, other):
        return (isinstance(other, RadialMesh) and self.grading == other.grading
                and np.array_equal(self.x, other.x))

    def __hash__(self):
        return hash((self.grading, self.N, self.x0))


@dataclass
class ConeField:
    """Time-stamped field: ``coeffs[j]`` is the radial profile of mode ``j``."""

    coeffs: np.ndarray
    mesh: RadialMesh
    spectrum: ModeSpectrum
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs))
        if self.coeffs.shape[1] != len(self.mesh.x):
            raise ValueError("mode vectors must live on the mesh nodes")
        if self.coeffs.shape[0] > len(self.spectrum.eigenvalues):
            raise ValueError("more modes than retained eigenvalues")

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_circle(self) -> bool:
        return self.spectrum.cross_section.kind == "circle"

    def mode(self, j: int) -> np.ndarray:
        return self.coeffs[j]

    def with_coeffs(self, coeffs, t=None) -> "ConeField":
        return replace(self, coeffs=np.array(coeffs), t=self.t if t is None else t,
                       meta=dict(self.meta))

    def axisymmetric(self, tol: float = 0.0) -> bool:
        return self.n_modes == 1 or bool(np.all(np.abs(self.coeffs[1:]) <= tol))

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, c):
        return self.with_coeffs(self.coeffs * c)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, mesh, spectrum, n_modes=None, t=0.0, dtype=None):
        n_modes = len(spectrum.eigenvalues) if n_modes is None else n_modes
        if dtype is None:
            dtype = complex if spectrum.cross_section.kind == "circle" else float
        return cls(np.zeros((n_modes, len(mesh.x)), dtype=dtype), mesh, spectrum, t)


def angular_points(l_max: int) -> int:
    """Physical grid size for band-limited circle fields of degree ``l_max``."""
    return 2 * l_max + 2


def solver_points(l_max: int) -> int:
    """Odd grid used by the nonlinear solvers.

    With ``2 l_max + 1`` points the grid values and the retained modes are in
    one-to-one correspondence (there is no Nyquist component), so a physical
    state survives the round trip through a :class:`ConeField` exactly.
    """
    return 2 * l_max + 1


def to_physical(f: ConeField, n_theta: int | None = None) -> np.ndarray:
    """Values on the ``(theta, x)`` grid, shape ``(n_theta, n_nodes)``.

    ``n_theta`` defaults to :func:`angular_points`; any count of at least
    ``2 l_max + 1`` is accepted.  Non-circle cross sections only support
    axisymmetric fields (``n_theta = 1``).
    """
    if not f.is_circle:
        if not f.axisymmetric():
            raise TransformError(
                f"{f.spectrum.cross_section.kind} cross sections support "
                "axisymmetric (mode-0) physical fields only")
        return np.real(f.coeffs[:1]).astype(float)
    l_max = f.n_modes - 1
    if l_max == 0:
        return np.real(f.coeffs[:1]).astype(float)
    n_theta = angular_points(l_max) if n_theta is None else int(n_theta)
    if n_theta < 2 * l_max + 1:
        raise TransformError(f"{n_theta} points cannot resolve modes up to {l_max}")
    spec = np.zeros((n_theta // 2 + 1, f.coeffs.shape[1]), dtype=complex)
    spec[: f.n_modes] = f.coeffs
    spec[0] = spec[0].real
    return np.fft.irfft(spec * n_theta, n=n_theta, axis=0)


def from_physical(values, mesh: RadialMesh, spectrum: ModeSpectrum, t: float = 0.0,
                  n_modes: int | None = None) -> ConeField:
    """Inverse of :func:`to_physical` for ``2 l_max + 2`` or ``2 l_max + 1``
    points."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    n_theta = values.shape[0]
    if spectrum.cross_section.kind != "circle" or n_theta == 1:
        if n_theta != 1:
            raise TransformError("non-circle cross sections need n_theta = 1")
        coeffs = values.copy()
        if spectrum.cross_section.kind == "circle":
            coeffs = coeffs.astype(complex)
        return ConeField(coeffs, mesh, spectrum, t)
    l_max = (n_theta - 1) // 2 if n_theta % 2 else (n_theta - 2) // 2
    coeffs = np.fft.rfft(values, axis=0)[: l_max + 1] / n_theta
    if n_modes is not None:
        coeffs = coeffs[:n_modes]
    return ConeField(coeffs, mesh, spectrum, t)


def mode_transform(obj, mesh: RadialMesh | None = None,
                   spectrum: ModeSpectrum | None = None, t: float = 0.0):
    """ConeField -> physical values, or physical values -> ConeField."""
    if isinstance(obj, ConeField):
        return to_physical(obj)
    if mesh is None or spectrum is None:
        raise TypeError("mesh and spectrum are required for the inverse transform")
    return from_physical(obj, mesh, spectrum, t)


def cutoff(x, inner: float = 0.5, outer: float = 1.0) -> np.ndarray:
    """Smooth cut-off: 1 for ``x <= inner``, 0 for ``x >= outer``."""
    x = np.asarray(x, dtype=float)
    t = np.clip((outer - x) / (outer - inner), 0.0, 1.0)

    def g(z):
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.exp(-1.0 / z[pos])
        return out

    return g(t) / (g(t) + g(1.0 - t))


def _columns(f: ConeField):
    names, cols = [], []
    for j in range(f.n_modes):
        c = f.coeffs[j]
        if f.is_circle and j > 0:
            names += [f"mode_{j}_re", f"mode_{j}_im"]
            cols += [np.real(c), np.imag(c)]
        else:
            names.append(f"mode_{j}")
            cols.append(np.real(c))
    return names, cols


def write_field_csv(f: ConeField, path) -> None:
    """Columnar CSV: ``x`` then one column per mode (re/im pairs for circle
    modes ``l >= 1``)."""
    names, cols = _columns(f)
    data = np.column_stack([f.mesh.x] + cols) + 0.0  # no -0 in files
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=",".join(["x"] + names),
               comments="")


def read_field_csv(path, mesh: RadialMesh, spectrum: ModeSpectrum, t: float = 0.0) -> ConeField:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not np.allclose(data[:, 0], mesh.x, rtol=1e-14, atol=0):
        raise ValueError(f"{path}: x column does not match the model mesh")
    circle = spectrum.cross_section.kind == "circle"
    cols = dict(zip(header, data.T))
    coeffs = []
    j = 0
    while True:
        if f"mode_{j}" in cols:
            coeffs.append(cols[f"mode_{j}"].astype(complex if circle else float))
        elif f"mode_{j}_re" in cols:
            coeffs.append(cols[f"mode_{j}_re"] + 1j * cols[f"mode_{j}_im"])
        else:
            break
        j += 1
    return ConeField(np.array(coeffs), mesh, spectrum, t)
