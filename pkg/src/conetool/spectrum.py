"""Cross-section Laplacian spectra for straight model cones.

The eigenvalues of the cross-section Laplacian are the only geometric input
to the tip asymptotics.  Sign convention: the Laplacian is negative, so every
eigenvalue is <= 0 and the constant mode carries eigenvalue 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb

import numpy as np

__all__ = [
    "CrossSection",
    "ModeSpectrum",
    "SpectrumError",
    "circle_spectrum",
    "sphere_spectrum",
    "custom_spectrum",
    "lambda1",
    "spectrum_from_dict",
]


class SpectrumError(ValueError):
    """Invalid cross-section or spectrum input."""


@dataclass(frozen=True)
class CrossSection:
    """Geometry of the cross section at the tip.

    ``kind`` is one of ``"circle"``, ``"sphere"`` or ``"custom"``.  For a
    circle ``a`` is the circumference factor (circumference ``2*pi*a``); for
    a round sphere ``a`` is the radius.
    """

    kind: str
    dim: int
    a: float = 1.0
    pairs: tuple = ()

    def to_dict(self):
        out = {"kind": self.kind, "dim": self.dim, "a": self.a}
        if self.kind == "custom":
            out["pairs"] = [[lam, mult] for lam, mult in self.pairs]
        return out


@dataclass(frozen=True)
class ModeSpectrum:
    """Truncated spectrum ``0 = lambda_0 > lambda_1 > ...`` with multiplicities.

    ``omitted_bound`` is an upper bound for every eigenvalue that is *not*
    listed: the exact next eigenvalue for closed-form presets, and the
    smallest retained eigenvalue for user lists (omitted eigenvalues can only
    be smaller).  Downstream completeness certificates rely on it.
    """

    cross_section: CrossSection
    eigenvalues: tuple
    multiplicities: tuple
    l_max: int
    omitted_bound: float | None = None
    truncated: bool = True

    @property
    def n(self) -> int:
        return self.cross_section.dim

    @property
    def entries(self):
        return [(j, lam, mult) for j, (lam, mult)
                in enumerate(zip(self.eigenvalues, self.multiplicities))]

    def __len__(self):
        return len(self.eigenvalues)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.eigenvalues, dtype=float)

    def to_dict(self):
        return {
            "n": self.n,
            "entries": [{"lambda": float(lam), "mult": int(mult)}
                        for lam, mult in zip(self.eigenvalues, self.multiplicities)],
            "l_max": self.l_max,
            "cross_section": self.cross_section.to_dict(),
            "omitted_bound": self.omitted_bound,
            "truncated": self.truncated,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _validated(cross, lams, mults, l_max, omitted_bound, truncated):
    lams = tuple(float(v) + 0.0 for v in lams)  # no -0.0
    mults = tuple(int(m) for m in mults)
    if not lams:
        raise SpectrumError("spectrum is empty")
    if any(m < 1 for m in mults):
        raise SpectrumError("multiplicities must be >= 1")
    if any(v > 0 for v in lams):
        raise SpectrumError("positive eigenvalue in cross-section spectrum")
    if lams[0] != 0.0:
        raise SpectrumError("eigenvalue 0 missing")
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise SpectrumError("eigenvalues must be strictly decreasing")
    return ModeSpectrum(cross, lams, mults, l_max, omitted_bound, truncated)


def circle_spectrum(a: float, l_max: int) -> ModeSpectrum:
    """Spectrum of the circle of circumference ``2*pi*a`` (``n = 1``).

    ``lambda_l = -(l/a)**2`` with multiplicity 1 for ``l = 0`` and 2 otherwise.
    """
    if not a > 0:
        raise SpectrumError(f"circle factor a must be positive, got {a!r}")
    if int(l_max) != l_max or l_max < 1:
        raise SpectrumError(f"l_max must be an integer >= 1, got {l_max!r}")
    l = np.arange(l_max + 1)
    lams = -(l / a) ** 2
    mults = [1] + [2] * l_max
    nxt = -((l_max + 1) / a) ** 2
    return _validated(CrossSection("circle", 1, float(a)), lams, mults,
                      int(l_max), nxt, True)


def _sphere_multiplicity(n: int, l: int) -> int:
    # harmonic polynomials of degree l on S^n
    if l == 0:
        return 1
    return comb(l + n, n) - comb(l + n - 2, n)


def sphere_spectrum(n: int, a: float, l_max: int) -> ModeSpectrum:
    """Spectrum of the round ``n``-sphere of radius ``a``.

    ``lambda_l = -l (l + n - 1) / a**2`` with the spherical-harmonic
    multiplicity (``2l + 1`` on the 2-sphere).
    """
    if int(n) != n or n < 2:
        raise SpectrumError(f"sphere dimension must be an integer >= 2, got {n!r}")
    if not a > 0:
        raise SpectrumError(f"sphere radius must be positive, got {a!r}")
    if int(l_max) != l_max or l_max < 1:
        raise SpectrumError(f"l_max must be an integer >= 1, got {l_max!r}")
    l = np.arange(l_max + 1)
    lams = -l * (l + n - 1) / a**2
    mults = [_sphere_multiplicity(n, int(k)) for k in l]
    nxt = -(l_max + 1) * (l_max + n) / a**2
    return _validated(CrossSection("sphere", int(n), float(a)), lams, mults,
                      int(l_max), nxt, True)


def custom_spectrum(pairs, n: int) -> ModeSpectrum:
    """Validated spectrum from ``(eigenvalue, multiplicity)`` pairs.

    Pairs are sorted by decreasing eigenvalue.  Repeated eigenvalues are an
    error rather than being merged, so that multiplicities stay explicit.
    """
    pairs = [(float(v), int(m)) for v, m in pairs]
    if not pairs:
        raise SpectrumError("spectrum is empty")
    if int(n) != n or n < 1:
        raise SpectrumError(f"cross-section dimension must be >= 1, got {n!r}")
    if any(v > 0 for v, _ in pairs):
        raise SpectrumError("positive eigenvalue in cross-section spectrum")
    if not any(v == 0.0 for v, _ in pairs):
        raise SpectrumError("eigenvalue 0 missing")
    values = [v for v, _ in pairs]
    if len(set(values)) != len(values):
        raise SpectrumError("duplicate eigenvalue; give its total multiplicity once")
    pairs.sort(key=lambda p: -p[0])
    lams, mults = zip(*pairs)
    cross = CrossSection("custom", int(n), 1.0, tuple(pairs))
    return _validated(cross, lams, mults, len(pairs) - 1, lams[-1], True)


def lambda1(s: ModeSpectrum) -> float:
    """Largest strictly negative eigenvalue."""
    if len(s.eigenvalues) < 2:
        raise SpectrumError("spectrum contains only the eigenvalue 0")
    return float(s.eigenvalues[1])


def spectrum_from_dict(d) -> ModeSpectrum:
    """Inverse of :meth:`ModeSpectrum.to_dict` (also accepts the bare
    ``{"n", "entries", "l_max"}`` form, read as a custom list)."""
    cross = d.get("cross_section")
    if cross is not None and cross.get("kind") == "circle":
        return circle_spectrum(cross["a"], d["l_max"])
    if cross is not None and cross.get("kind") == "sphere":
        return sphere_spectrum(cross["dim"], cross["a"], d["l_max"])
    pairs = [(e["lambda"], e["mult"]) for e in d["entries"]]
    return custom_spectrum(pairs, d["n"])
