"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle reaches its answer by a route
that shares no code with the library (power series, exact polynomial algebra,
closed-form integrals, scalar arithmetic).
"""
from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import numpy as np
import sympy as sy


# --- Bessel zeros -----------------------------------------------------------

def bessel_j_series(nu, x, dps=50):
    """``J_nu(x)`` from its power series in high precision."""
    with mpmath.workdps(dps):
        nu = mpmath.mpf(nu)
        h = mpmath.mpf(x) / 2
        term = h**nu / mpmath.gamma(nu + 1)
        total = term
        k = 0
        while True:
            k += 1
            term *= -h * h / (k * (k + nu))
            total += term
            if abs(term) < mpmath.mpf(10) ** (-dps + 5) * max(1, abs(total)) and k > x:
                break
        return total


def bessel_zeros(nu, count, step=0.1, tol=1e-15):
    """First ``count`` positive zeros of ``J_nu`` by sign scan plus bisection."""
    zeros = []
    a = 1e-3
    fa = bessel_j_series(nu, a)
    while len(zeros) < count:
        b = a + step
        fb = bessel_j_series(nu, b)
        if fa * fb < 0:
            lo, hi, flo = a, b, fa
            while hi - lo > tol * hi:
                mid = 0.5 * (lo + hi)
                fm = bessel_j_series(nu, mid)
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            zeros.append(0.5 * (lo + hi))
        a, fa = b, fb
    return np.array(zeros)


# --- pole orders by polynomial algebra ---------------------------------------

def exact(v):
    """Exact rational for a float or a string like ``'1/3'``."""
    return sy.Rational(Fraction(v).limit_denominator(10**12)) if isinstance(v, float) \
        else sy.Rational(v)


def q_set_oracle(lams, n, gamma, k):
    """Brute-force ``Q_k``: expand ``prod_nu p_j(z + 2 nu)`` per mode, read off
    root multiplicities, keep roots in ``S_k`` and maximize over modes.

    ``lams`` are exact rationals.  Returns ``{rho: eta}`` with exact keys.
    """
    z = sy.symbols("z")
    g = exact(gamma)
    top = sy.Rational(n + 1, 2) - g
    lo, hi = top - 2 * k, top - 2
    best = {}
    for lam in lams:
        P = sy.Integer(1)
        for nu in range(k):
            w = z + 2 * nu
            P *= w**2 - (n - 1) * w + lam
        for r, mult in sy.roots(sy.Poly(sy.expand(P), z)).items():
            if not r.is_real:
                continue
            if lo <= r < hi:
                best[r] = max(best.get(r, 0), mult)
    return best


# --- closed-form integrals ---------------------------------------------------

def power_weight_integral(beta, p, x0, x1):
    """``int_{x0}^{x1} x^{p beta} dx / x``."""
    e = p * beta
    if e == 0:
        return math.log(x1 / x0)
    return (x1**e - x0**e) / e


def smooth_cutoff(x, inner=0.5, outer=1.0):
    """Standard C-infinity transition built from ``exp(-1/t)``."""
    def g(t):
        return mpmath.exp(-1 / t) if t > 0 else mpmath.mpf(0)
    t = min(max((outer - x) / (outer - inner), 0), 1)
    return g(t) / (g(t) + g(1 - t))


def mellin_power_norm(alpha, n, gamma, p, x0, inner=0.5, outer=1.0):
    """``s = 0`` norm of ``x^alpha`` with the cut-off, via exact and adaptive
    quadrature pieces."""
    beta = alpha + (n + 1) / 2 - gamma
    core = power_weight_integral(beta, p, x0, inner)
    tail = mpmath.quad(lambda x: smooth_cutoff(x, inner, outer) ** p * x ** (p * beta - 1),
                       [inner, outer])
    return float((core + tail) ** (1.0 / p))


# --- scalar resolvent --------------------------------------------------------

def scalar_sector_bound(diag, theta, c, samples):
    """``max (1 + |lam|) max_i 1/|d_i + c + lam|`` over the probe samples."""
    per_ray = max((samples - 1) // 2, 1)
    lams = [0j]
    for r in np.logspace(-3, 6, per_ray):
        lams += [r * complex(math.cos(theta), math.sin(theta)),
                 r * complex(math.cos(theta), -math.sin(theta))]
    best = 0.0
    for lam in lams:
        best = max(best, max((1 + abs(lam)) / abs(d + c + lam) for d in diag))
    return best
