"""Conormal-symbol calculus for the Laplacian on straight cones.

For a cross-section eigenvalue ``lambda_j`` the conormal symbol of the
Laplacian restricted to that mode is the quadratic

    p_j(z) = z**2 - (n - 1) z + lambda_j,

and the symbol of the k-th power is ``prod_{nu<k} p_j(z + 2 nu)``.  A point
``rho`` at which that product vanishes produces tip terms ``x**(-rho)
log(x)**eta`` in the domain of the k-th power; which of them matter is decided
by the strips below.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

from .spectrum import ModeSpectrum, SpectrumError

__all__ = [
    "ROOT_MERGE_TOL",
    "BOUNDARY_TOL",
    "IncompleteSpectrumError",
    "ConormalRoot",
    "IndicialRoot",
    "Strip",
    "Constraint",
    "ParameterWindow",
    "conormal_roots",
    "make_strip",
    "strip_certificate",
    "q_set",
    "q_set_report",
    "predicted_x_exponents",
    "weight_window",
    "validate_parameters",
    "delta_window",
    "pointwise_bound_exponent",
]

ROOT_MERGE_TOL = 1e-9
BOUNDARY_TOL = 1e-12


class IncompleteSpectrumError(SpectrumError):
    """The spectrum cutoff may hide roots inside the requested strip."""


class ConormalRoot(NamedTuple):
    mode: int
    rho_plus: float
    rho_minus: float
    double: bool


@dataclass
class IndicialRoot:
    """One point of the shifted root set with its pole order.

    ``sources`` lists ``(mode, nu, multiplicity)`` triples: the root
    ``rho + 2 nu`` of ``p_mode`` with the given multiplicity.
    """

    rho: complex
    eta: int
    sources: list = field(default_factory=list)
    boundary_ambiguous: bool = False

    @property
    def x_exponent(self) -> complex:
        return -self.rho

    @property
    def eta_standard(self) -> int:
        # log powers 0..eta-1, the usual convention for a pole of order eta
        return self.eta - 1

    def to_dict(self):
        return {
            "rho_re": float(self.rho.real),
            "rho_im": float(self.rho.imag),
            "eta": int(self.eta),
            "eta_standard": int(self.eta_standard),
            "x_exponent": float((-self.rho).real),
            "sources": [{"mode": j, "nu": nu, "mult": m} for j, nu, m in self.sources],
            "boundary_ambiguous": self.boundary_ambiguous,
        }


@dataclass(frozen=True)
class Strip:
    """Vertical strip ``re_min <= Re z < re_max`` (upper end closed for V_k)."""

    re_min: float
    re_max: float
    kind: str
    closed_upper: bool = False

    def contains(self, z) -> bool:
        re = complex(z).real
        if re < self.re_min:
            return False
        return re <= self.re_max if self.closed_upper else re < self.re_max

    def near_boundary(self, z, tol=BOUNDARY_TOL) -> bool:
        re = complex(z).real
        return abs(re - self.re_min) < tol or abs(re - self.re_max) < tol

    def to_dict(self):
        return {"kind": self.kind, "re_min": self.re_min, "re_max": self.re_max,
                "closed_upper": self.closed_upper}


@dataclass(frozen=True)
class Constraint:
    description: str
    satisfied: bool
    lhs: float
    rhs: float

    def to_dict(self):
        return {"description": self.description, "satisfied": self.satisfied,
                "lhs": self.lhs, "rhs": self.rhs}


@dataclass
class ParameterWindow:
    """Open (by default) interval for one parameter plus a ledger of the
    inequalities that were checked to produce it."""

    name: str
    lo: float
    hi: float
    lo_open: bool = True
    hi_open: bool = True
    constraints: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        if self.lo_open or self.hi_open:
            return not self.lo < self.hi
        return not self.lo <= self.hi

    @property
    def admissible(self) -> bool:
        return not self.empty and all(c.satisfied for c in self.constraints)

    def contains(self, v: float) -> bool:
        above = v > self.lo if self.lo_open else v >= self.lo
        below = v < self.hi if self.hi_open else v <= self.hi
        return above and below

    def violated(self):
        return [c for c in self.constraints if not c.satisfied]

    def to_dict(self):
        return {
            "name": self.name,
            "interval": [self.lo, self.hi],
            "open": [self.lo_open, self.hi_open],
            "empty": self.empty,
            "admissible": self.admissible,
            "constraints": [c.to_dict() for c in self.constraints],
        }


def _dim(s: ModeSpectrum, n):
    if n is None:
        return s.n
    if n != s.n:
        raise SpectrumError(f"dimension mismatch: spectrum has n={s.n}, got n={n}")
    return n


def _roots_of(lam: float, n: int):
    half = 0.5 * (n - 1)
    disc = half * half - lam
    if disc < 0:  # cannot happen for lambda <= 0, kept for custom misuse
        r = math.sqrt(-disc)
        return complex(half, r), complex(half, -r), False
    r = math.sqrt(disc)
    return half + r, half - r, disc == 0.0


def conormal_roots(s: ModeSpectrum, n: int | None = None):
    """Both roots of ``z**2 - (n-1) z + lambda_j`` for every retained mode."""
    n = _dim(s, n)
    out = []
    for j, lam in enumerate(s.eigenvalues):
        rp, rm, double = _roots_of(lam, n)
        out.append(ConormalRoot(j, rp, rm, double))
    return out


def make_strip(kind: str, n: int, gamma: float, mu_or_k: int) -> Strip:
    """Strip ``I_{mu,gamma}``, ``S_k`` or ``V_k`` (``kind`` in ``"I"``,
    ``"S"``, ``"V"``)."""
    top = 0.5 * (n + 1) - gamma
    if kind == "I":
        if mu_or_k < 1:
            raise ValueError("operator order mu must be >= 1")
        return Strip(top - mu_or_k, top, "I_mu_gamma")
    if mu_or_k < 1:
        raise ValueError("k must be >= 1")
    k = mu_or_k
    if kind == "S":
        return Strip(top - 2 * k, top - 2, "S_k")
    if kind == "V":
        return Strip(top - 2 * k, top - 2 * (k - 1), "V_k", closed_upper=True)
    raise ValueError(f"unknown strip kind {kind!r}")


def strip_certificate(s: ModeSpectrum, n: int, gamma: float, k: int) -> bool:
    """True when no omitted mode can contribute a root to ``S_k``.

    Omitted modes have eigenvalues ``<= s.omitted_bound``; their upper roots
    grow and lower roots decrease monotonically in ``|lambda|``, so checking
    the bound is enough.
    """
    if k < 2 or not s.truncated or s.omitted_bound is None:
        return True
    strip = make_strip("S", n, gamma, k)
    rp, rm, _ = _roots_of(s.omitted_bound, n)
    lowest_upper = complex(rp).real - 2 * (k - 1)
    return lowest_upper >= strip.re_max and complex(rm).real < strip.re_min


def _candidate_points(roots, k):
    pts = []
    for r in roots:
        for nu in range(k):
            pts.append(complex(r.rho_plus) - 2 * nu)
            pts.append(complex(r.rho_minus) - 2 * nu)
    return pts


def _merge(points, tol=ROOT_MERGE_TOL):
    merged = []
    for z in sorted(points, key=lambda z: (-z.real, z.imag)):
        if not any(abs(z - w) < tol for w in merged):
            merged.append(z)
    return merged


def _pole_order(rho, roots, k, tol=ROOT_MERGE_TOL):
    """Max over modes of the summed multiplicities of ``rho + 2 nu``."""
    best, sources = 0, []
    for r in roots:
        count = 0
        for nu in range(k):
            z = rho + 2 * nu
            if r.double:
                m = 2 if abs(z - r.rho_plus) < tol else 0
            else:
                m = int(abs(z - r.rho_plus) < tol) + int(abs(z - r.rho_minus) < tol)
            if m:
                sources.append((r.mode, nu, m))
                count += m
        best = max(best, count)
    return best, sources


def _check_gamma(s, n, gamma):
    if len(s.eigenvalues) < 2:
        return
    win = weight_window("laplacian", n, s.eigenvalues[1])
    if not win.contains(gamma):
        warnings.warn(
            f"gamma={gamma} lies outside the weight window ({win.lo}, {win.hi}) "
            "for which the Laplacian realization is sectorial",
            stacklevel=3,
        )


def q_set(s: ModeSpectrum, n: int | None, gamma: float, k: int,
          allow_incomplete: bool = False):
    """Shifted root set inside ``S_k`` with pole orders, sorted by
    decreasing ``Re rho``.

    This is the candidate superset for a straight cone: every point
    ``rho_j^{+/-} - 2 nu`` (``nu < k``) that lies in ``S_k``.  Raises
    :class:`IncompleteSpectrumError` when the cutoff could hide a root unless
    ``allow_incomplete`` is set.
    """
    n = _dim(s, n)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return []
    _check_gamma(s, n, gamma)
    if not allow_incomplete and not strip_certificate(s, n, gamma, k):
        raise IncompleteSpectrumError(
            f"spectrum truncated at l_max={s.l_max} may omit roots in S_{k}; "
            "increase l_max")
    strip = make_strip("S", n, gamma, k)
    roots = conormal_roots(s, n)
    out = []
    for rho in _merge([z for z in _candidate_points(roots, k) if strip.contains(z)]):
        eta, sources = _pole_order(rho, roots, k)
        if rho.imag == 0.0:
            rho = complex(rho.real + 0.0, 0.0)
        out.append(IndicialRoot(rho, eta, sources, strip.near_boundary(rho)))
    return out


def q_set_report(s: ModeSpectrum, n: int | None, gamma: float, k: int):
    """JSON-ready description of ``q_set`` including the strip and the
    completeness flag (never raises on truncation)."""
    n = _dim(s, n)
    complete = strip_certificate(s, n, gamma, k)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        roots = q_set(s, n, gamma, k, allow_incomplete=True)
    return {
        "n": n,
        "gamma": gamma,
        "k": k,
        "strip": make_strip("S", n, gamma, max(k, 1)).to_dict(),
        "complete": complete,
        "superset": True,
        "log_power_convention": "eta in {0..eta_rho} as stated; eta_standard = eta_rho - 1",
        "warnings": [str(w.message) for w in caught],
        "roots": [r.to_dict() for r in roots],
    }


def predicted_x_exponents(s: ModeSpectrum, n: int | None, gamma: float, k: int,
                          allow_incomplete: bool = False):
    """Menu of tip exponents ``(alpha, max_log_power)``, ``alpha = -Re rho``.

    Always starts with ``(0, 0)``, the locally constant part of the domain.
    """
    roots = q_set(s, n, gamma, k, allow_incomplete=allow_incomplete)
    pairs = [(0.0, 0)] + [(-r.rho.real + 0.0, r.eta) for r in roots]
    return sorted(pairs)


def _upper_gamma(n, lam1):
    half = 0.5 * (n - 1)
    return min(-1.0 + math.sqrt(half * half - lam1), 0.5 * (n + 1))


def weight_window(problem: str, n: int, lam1: float, q: float | None = None) -> ParameterWindow:
    """Admissible weights ``gamma`` for ``"laplacian"``, ``"pme"`` or ``"sh"``.

    The upper end is ``min{-1 + sqrt(((n-1)/2)**2 - lambda_1), (n+1)/2}``; the
    lower end is ``(n-3)/2``, raised by ``2/q`` for the nonlinear problems.
    """
    if lam1 >= 0:
        raise ValueError("lambda_1 must be negative")
    lo = 0.5 * (n - 3)
    if problem in ("pme", "sh"):
        if q is None or q <= 1:
            raise ValueError("q > 1 required for the nonlinear windows")
        lo += 2.0 / q
    elif problem != "laplacian":
        raise ValueError(f"unknown problem {problem!r}")
    hi = _upper_gamma(n, lam1)
    win = ParameterWindow("gamma", lo, hi)
    win.constraints.append(Constraint("gamma window non-empty (lo < hi)", lo < hi, lo, hi))
    return win


def validate_parameters(problem: str, n: int, lam1: float, p: float, q: float,
                        gamma: float | None = None, s0: float | None = None) -> ParameterWindow:
    """Check the integrability conditions on ``p``, ``q``, ``gamma``, ``s0``.

    Returns the window of admissible ``s0`` (``pme``) or ``s`` (``sh``,
    ``laplacian``) together with a ledger of every inequality.
    """
    if p <= 1 or q <= 1:
        raise ValueError("p and q must exceed 1")
    half = 0.5 * (n - 1)
    spectral_gap = -half + math.sqrt(half * half - lam1)
    cons = []
    if problem in ("pme", "sh"):
        cons.append(Constraint("2/q < -(n-1)/2 + sqrt(((n-1)/2)^2 - lambda_1)",
                               2 / q < spectral_gap, 2 / q, spectral_gap))
    if problem == "pme":
        lhs = (n + 1) / p + 2 / q
        cons.append(Constraint("(n+1)/p + 2/q < 1", lhs < 1, lhs, 1.0))
        lo = max(-1 + (n + 1) / p + 2 / q, -2 / q)
        name = "s0"
    elif problem == "sh":
        lhs = 2 / q + (n + 1) / p
        cons.append(Constraint("2/q + (n+1)/p < 2", lhs < 2, lhs, 2.0))
        lo, name = 0.0, "s"
    elif problem == "laplacian":
        lo, name = 0.0, "s"
    else:
        raise ValueError(f"unknown problem {problem!r}")
    if gamma is not None:
        gw = weight_window(problem, n, lam1, q if problem != "laplacian" else None)
        cons.append(Constraint("gamma > lower end of weight window", gamma > gw.lo, gamma, gw.lo))
        cons.append(Constraint("gamma < upper end of weight window", gamma < gw.hi, gamma, gw.hi))
    lo_open = problem == "pme"
    win = ParameterWindow(name, lo, math.inf, lo_open=lo_open, hi_open=True, constraints=cons)
    if s0 is not None:
        ok = s0 > lo if lo_open else s0 >= lo
        cons.append(Constraint(f"{name} inside ({'(' if lo_open else '['}{lo}, inf)", ok, s0, lo))
    return win


def delta_window(n: int, p: float, q: float, gamma: float) -> ParameterWindow:
    """Hoelder exponents ``delta`` in
    ``(0, min{2 - (n+1)/p - 2/q, gamma - (n-3)/2 - 2/q} / 2)``."""
    if p <= 1 or q <= 1:
        raise ValueError("p and q must exceed 1")
    first = 2 - (n + 1) / p - 2 / q
    second = gamma - 0.5 * (n - 3) - 2 / q
    hi = 0.5 * min(first, second)
    cons = [
        Constraint("2 - (n+1)/p - 2/q > 0", first > 0, first, 0.0),
        Constraint("gamma - (n-3)/2 - 2/q > 0", second > 0, second, 0.0),
    ]
    return ParameterWindow("delta", 0.0, hi, constraints=cons)


def pointwise_bound_exponent(n: int, gamma: float, k: int, eps: float) -> float:
    """Decay exponent ``gamma + 2k - (n+1)/2 - eps`` of minimal-domain
    functions of the k-th power near the tip."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return gamma + 2 * k - 0.5 * (n + 1) - eps
