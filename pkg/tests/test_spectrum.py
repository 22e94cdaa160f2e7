import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conetool.spectrum import (SpectrumError, circle_spectrum, custom_spectrum, lambda1,
                               sphere_spectrum, spectrum_from_dict)


def table(s):
    return [(lam, m) for _, lam, m in s.entries]


def test_unit_circle():
    s = circle_spectrum(1, 2)
    assert table(s) == [(0, 1), (-1, 2), (-4, 2)]
    assert s.n == 1 and s.l_max == 2


def test_circle_half():
    assert table(circle_spectrum(0.5, 1)) == [(0, 1), (-4, 2)]


def test_circle_two():
    assert list(circle_spectrum(2, 3).eigenvalues) == [0, -0.25, -1, -2.25]


def test_sphere_two():
    assert table(sphere_spectrum(2, 1, 2)) == [(0, 1), (-2, 3), (-6, 5)]


def test_sphere_three():
    assert table(sphere_spectrum(3, 1, 1)) == [(0, 1), (-3, 4)]


def test_sphere_scaled():
    assert list(sphere_spectrum(2, 2, 1).eigenvalues) == [0, -0.5]


@pytest.mark.parametrize("bad", [(0, 2), (-1, 2), (1, 0), (1, 1.5)])
def test_circle_errors(bad):
    with pytest.raises(SpectrumError):
        circle_spectrum(*bad)


@pytest.mark.parametrize("bad", [(1, 1, 2), (2, 0, 2), (2, 1, 0)])
def test_sphere_errors(bad):
    with pytest.raises(SpectrumError):
        sphere_spectrum(*bad)


def test_custom_valid():
    s = custom_spectrum([(-2, 3), (0, 1)], 2)
    assert table(s) == [(0, 1), (-2, 3)]


def test_custom_missing_zero():
    with pytest.raises(SpectrumError, match="eigenvalue 0 missing"):
        custom_spectrum([(-2, 3)], 2)


def test_custom_positive():
    with pytest.raises(SpectrumError, match="positive eigenvalue"):
        custom_spectrum([(0, 1), (1, 1)], 2)


def test_custom_duplicate():
    with pytest.raises(SpectrumError, match="duplicate"):
        custom_spectrum([(0, 1), (-2, 1), (-2, 2)], 2)


def test_lambda1_values():
    assert lambda1(circle_spectrum(1, 3)) == -1
    assert lambda1(sphere_spectrum(2, 1, 3)) == -2
    with pytest.raises(SpectrumError):
        lambda1(custom_spectrum([(0, 1)], 1))


def test_json_round_trip():
    for s in (circle_spectrum(0.5, 4), sphere_spectrum(3, 1, 2),
              custom_spectrum([(0, 1), (-2.5, 2)], 2)):
        d = json.loads(s.to_json())
        assert {"n", "entries", "l_max"} <= set(d)
        assert spectrum_from_dict(d) == s


def test_bare_json_form():
    d = {"n": 2, "entries": [{"lambda": 0, "mult": 1}, {"lambda": -2, "mult": 3}],
         "l_max": 1}
    assert table(spectrum_from_dict(d)) == [(0, 1), (-2, 3)]


@settings(max_examples=60, deadline=None)
@given(st.fractions(min_value=Fraction(1, 8), max_value=8), st.integers(1, 12))
def test_circle_closed_form(a, l_max):
    s = circle_spectrum(float(a), l_max)
    lam = s.eigenvalues
    assert lam[0] == 0
    assert all(b < c < 0 for c, b in zip(lam[1:], lam[2:]))
    for l, v in enumerate(lam):
        exact = -Fraction(l, 1) ** 2 / a**2
        assert v == pytest.approx(float(exact), rel=1e-14, abs=0)
    assert lambda1(s) == pytest.approx(-1 / float(a) ** 2, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(1, 10))
def test_sphere_closed_form(n, l_max):
    s = sphere_spectrum(n, 1, l_max)
    for l, (v, m) in enumerate(zip(s.eigenvalues, s.multiplicities)):
        assert v == -l * (l + n - 1)
        # dimension of degree-l harmonics: C(l+n,n) - C(l+n-2,n)
        from math import comb
        assert m == (1 if l == 0 else comb(l + n, n) - comb(l + n - 2, n))
    assert all(b < c for c, b in zip(s.eigenvalues, s.eigenvalues[1:]))


def test_sphere_two_multiplicity():
    s = sphere_spectrum(2, 1, 8)
    assert list(s.multiplicities) == [2 * l + 1 for l in range(9)]
