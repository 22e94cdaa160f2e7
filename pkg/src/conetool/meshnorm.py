"""Discrete Mellin-Sobolev norms, near-tip exponent fits and decay checks.

Cross-section integrals use the normalized measure (unit total volume), so a
mode-0 field has the same norm as its radial profile.  Circle fields are
integrated on the physical angular grid; other cross sections use the
mode-space magnitude ``sqrt(sum_j |c_j|^2)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fields import ConeField, RadialMesh, cutoff, to_physical

__all__ = [
    "NOISE_FLOOR",
    "MIN_FIT_NODES",
    "FitResult",
    "FitError",
    "mellin_norm",
    "weighted_lp_norm",
    "tip_limit",
    "fit_power",
    "fit_exponent",
    "decay_bound_check",
    "sup_profile",
]

NOISE_FLOOR = 1e-13
MIN_FIT_NODES = 8
LOG_POWERS = (0, 1, 2)


class FitError(ValueError):
    """Exponent fit is not possible on the requested window."""


@dataclass(frozen=True)
class FitResult:
    alpha: float
    log_power: int
    residual: float
    window: tuple
    mode: int = 0
    tip_limit: float | None = None

    def __iter__(self):
        return iter((self.alpha, self.log_power, self.residual))

    def to_dict(self):
        out = {"mode": self.mode, "alpha": self.alpha, "log_power": self.log_power,
               "residual": self.residual, "window": list(self.window)}
        if self.tip_limit is not None:
            out["tip_limit"] = self.tip_limit
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _log_derivative(values, s):
    # x d/dx = d/ds with s = log x
    if values.shape[-1] < 3:
        raise ValueError("need at least 3 nodes for a log-derivative")
    return np.gradient(values, s, axis=-1, edge_order=2)


def _tangential_factor(f: ConeField, order: int) -> np.ndarray:
    lam = np.asarray(f.spectrum.eigenvalues[: f.n_modes], dtype=float)
    if f.is_circle:
        # d/dy on exp(i l theta) with y = a theta
        return (1j * np.sqrt(-lam)) ** order
    return np.sqrt(-lam) ** order


def _cross_section_lp(coeffs, f: ConeField, p: float) -> np.ndarray:
    """Per-node cross-section ``L^p`` norm to the power ``p``."""
    if f.is_circle:
        g = f.with_coeffs(coeffs)
        vals = to_physical(g)
        return np.mean(np.abs(vals) ** p, axis=0)
    mag = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=0))
    return mag ** p


def mellin_norm(f: ConeField, s: int, gamma: float, p: float,
                mesh: RadialMesh | None = None, *, include_interior: bool = False,
                omega: tuple = (0.5, 1.0)) -> float:
    """Discrete ``H^{s,gamma}_p`` norm of ``f`` near the tip.

    Sums, over ``k + |alpha| <= s``, the ``L^p(dx/x dy)`` norms of
    ``x^{(n+1)/2 - gamma} (x d_x)^k d_y^alpha (omega f)``.  Quadrature is the
    trapezoid rule in ``log x``.  ``omega`` gives the cut-off's (inner, outer)
    radii.  With ``include_interior`` the ``L^p(x^n dx)`` norms of the same
    derivatives of ``(1 - omega) f`` are added.
    """
    if int(s) != s or s < 0:
        raise ValueError("s must be a non-negative integer")
    if s > 2:
        raise ValueError("s > 2 is not supported; apply the operator instead")
    if not p > 1:
        raise ValueError("p must exceed 1")
    mesh = f.mesh if mesh is None else mesh
    x, logx = mesh.x, mesh.s
    n = f.spectrum.n
    w = cutoff(x, *omega)
    parts = [(w, x ** ((n + 1) / 2 - gamma))]
    if include_interior:
        parts.append((1.0 - w, x ** ((n + 1) / p)))
    total = 0.0
    for weight_cut, weight in parts:
        g = f.coeffs * weight_cut
        for k in range(s + 1):
            for alpha in range(s - k + 1):
                h = g * _tangential_factor(f, alpha)[:, None]
                integrand = _cross_section_lp(h * weight, f, p)
                total += np.trapezoid(integrand, logx) ** (1.0 / p)
            g = _log_derivative(g, logx)
    return float(total)


def weighted_lp_norm(f: ConeField, gamma: float, p: float = 2.0) -> float:
    """``X_0``-type norm: the ``s = 0`` Mellin norm including the interior."""
    return mellin_norm(f, 0, gamma, p, include_interior=True)


def tip_limit(values, x=None) -> float:
    """Extrapolated value at ``x = 0`` from the three innermost nodes.

    Aitken's delta-squared step on ``f_2, f_1, f_0``; falls back to ``f_0``
    when the differences do not contract.
    """
    f0, f1, f2 = (float(np.real(v)) for v in values[:3])
    d1, d2 = f1 - f0, f2 - f1
    denom = d2 - d1
    if denom == 0.0 or abs(d1) >= abs(d2):
        return f0
    return f0 - d1 * d1 / denom


def fit_power(x, values, *, log_powers=LOG_POWERS):
    """Fit ``log|f| = alpha log x + eta log|log x| + c`` with ``eta`` chosen
    by a penalized residual.  Returns ``(alpha, eta, rms residual)``."""
    x = np.asarray(x, dtype=float)
    a = np.abs(np.asarray(values))
    m = len(x)
    if m < MIN_FIT_NODES:
        raise FitError(f"fit window holds {m} nodes, need {MIN_FIT_NODES}")
    if np.any(x >= 1.0):
        raise FitError("fit window must stay inside x < 1")
    if a.max() < NOISE_FLOOR:
        raise FitError("field below noise floor on the fit window")
    if np.any(a == 0):
        raise FitError("field vanishes inside the fit window")
    lx = np.log(x)
    design = np.column_stack([lx, np.ones(m)])
    best = None
    for eta in log_powers:
        rhs = np.log(a) - eta * np.log(np.abs(lx))
        coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
        rss = float(np.sum((design @ coef - rhs) ** 2))
        score = m * np.log(rss / m + 1e-300) + 2.0 * np.log(m) * eta
        if best is None or score < best[0]:
            best = (score, float(coef[0]), eta, np.sqrt(rss / m))
    _, alpha, eta, res = best
    return alpha, eta, float(res)


def fit_exponent(f: ConeField, j: int = 0, fit_window=(1e-4, 1e-2),
                 subtract_constant: bool = False) -> FitResult:
    """Near-tip power and log power of mode ``j`` over ``fit_window``.

    With ``subtract_constant`` the extrapolated tip value of the mode is
    removed first, which isolates the decaying part of mode 0.
    """
    lo, hi = fit_window
    if not 0 < lo < hi:
        raise FitError("degenerate fit window")
    idx = f.mesh.window(lo, hi)
    vals = np.asarray(f.coeffs[j])
    c = None
    if subtract_constant:
        c = tip_limit(vals)
        vals = vals - c
    alpha, eta, res = fit_power(f.mesh.x[idx], vals[idx])
    return FitResult(alpha, eta, res, (float(lo), float(hi)), int(j), c)


def sup_profile(f: ConeField) -> np.ndarray:
    """``sup_y |f(x, y)|`` per node (an upper bound off the circle)."""
    if f.is_circle:
        return np.max(np.abs(to_physical(f)), axis=0)
    return np.sum(np.abs(f.coeffs), axis=0)


def decay_bound_check(f: ConeField, n: int, gamma: float, k: int, eps: float,
                      L: float = 1.0):
    """Check ``|f(x, y)| <= L x^{gamma + 2k - (n+1)/2 - eps}`` on the collar.

    Returns ``(ok, worst)`` where ``worst`` is the largest attained ratio
    ``|f| / x^{...}`` over nodes with ``x < 1``.
    """
    x = f.mesh.x
    inside = x < 1.0
    expo = gamma + 2 * k - (n + 1) / 2 - eps
    ratio = sup_profile(f)[inside] / x[inside] ** expo
    worst = float(np.max(ratio))
    return bool(worst <= L * (1 + 1e-12)), worst
