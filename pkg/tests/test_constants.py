import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats, integers
from scipy.integrate import quad

from born_infeld.constants import (DerivedConstants, P_poly, S_profile, c_ball, excess_constant, haarala_constant,
                                   morrey_chain, mono_constants, moser_series, moser_series_closed,
                                   sobolev_constant, talenti_bubble)
from born_infeld.errors import ConfigError, DivergenceError
from born_infeld.fields import ParamSet


def test_mono_constants():
    gamma, C = mono_constants(3)
    assert gamma == pytest.approx(1 / 24)
    assert C == pytest.approx(7 / 384)


@settings(max_examples=100, deadline=None)
@given(integers(3, 5), floats(0.5, 2.5), floats(1e-3, 0.95))
def test_S_profile_quadrature(N, t, frac):
    l = frac * t
    exact, _ = quad(lambda s: 0.5 * s ** (-N - 1) * (s * s - l * l), l, t, epsabs=0.0, epsrel=1e-13)
    assert S_profile(t, l, N) == pytest.approx(exact, rel=1e-8, abs=1e-300)


def test_S_profile_outside():
    assert S_profile(1.0, 1.5, 3) == 0.0
    assert S_profile(1.0, 1.0, 3) == 0.0
    np.testing.assert_array_equal(S_profile(np.ones(2), np.array([2.0, 3.0]), 4), 0.0)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_c_ball_is_lower_bound(N):
    c = c_ball(N)
    assert c > 0
    ls = np.linspace(1e-4, 0.5, 500)
    assert np.all(S_profile(1.0, ls, N) >= c * (1 - 1e-10))


def test_sobolev_constant_known_value():
    # sharp constant of |phi|_6 <= c |grad phi|_2 in R^3
    assert sobolev_constant(3, 2) == pytest.approx(3 ** -0.5 * (2 / math.pi) ** (2 / 3), rel=1e-12)
    with pytest.raises(ConfigError):
        sobolev_constant(3, 3)


def test_talenti_bubble_is_extremal():
    N, k = 3, 2
    phi6, _ = quad(lambda r: talenti_bubble(r, N, k) ** 6 * r ** 2, 0, np.inf)
    grad2, _ = quad(lambda r: r ** 4 * (1 + r * r) ** -3, 0, np.inf)
    ratio = (4 * math.pi * phi6) ** (1 / 6) / (4 * math.pi * grad2) ** 0.5
    assert ratio == pytest.approx(sobolev_constant(N, k), rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(integers(3, 8), floats(0.05, 20.0))
def test_moser_series_closed_forms(N, excess):
    q = N + excess
    for a, b in zip(moser_series(q, N), moser_series_closed(q, N)):
        assert a == pytest.approx(b, rel=1e-12)


def test_moser_series_diverge():
    with pytest.raises(DivergenceError):
        moser_series(3.0, 3)
    with pytest.raises(DivergenceError):
        moser_series_closed(2.5, 3)


def test_excess_constant():
    assert excess_constant(4.0, 1.5) == pytest.approx(math.sqrt(24) / (1 - 1 / 2.25))
    with pytest.raises(ConfigError):
        excess_constant(4.0, 1.0)


def test_P_poly():
    assert P_poly(0.0, 4.0, 3) == 0.0
    k = np.linspace(0.0, 5.0, 50)
    assert np.all(np.diff(P_poly(k, 4.0, 3)) > 0)


def test_haarala_constant_finite():
    c = haarala_constant(3, 4.0)
    assert math.isfinite(c) and c > 1


def test_assemble_branches():
    smooth = DerivedConstants.assemble(ParamSet(N=3, q=4.0, m=1.2, s=6.0))
    assert smooth.c_sobolev_m is not None and smooth.c1_energy is not None
    assert len(smooth.energy_terms(ParamSet(N=3, q=4.0, m=1.2, s=6.0), 1.0)) == 1
    params = ParamSet(N=3, q=4.0, m=1.0, s=6.0)
    l1 = DerivedConstants.assemble(params)
    assert l1.c_sobolev_m is None and l1.c1_energy is None
    terms = l1.energy_terms(params, 2.0)
    assert len(terms) == 2
    assert terms[0] == (l1.c4, pytest.approx(2.0 ** 1.2))
    assert l1.moser_sum1 == pytest.approx(3.0)
    assert set(l1.asdict()) >= {"gamma", "C_mono", "haarala"}


def test_assemble_overrides(params):
    consts = DerivedConstants.assemble(params, {"C_mono": 1e6})
    assert consts.C_mono == 1e6
    with pytest.raises(ConfigError):
        DerivedConstants.assemble(params, {"not_a_constant": 1.0})


def test_morrey_chain_needs_large_s():
    with pytest.raises(ConfigError):
        morrey_chain(3, 4.0)
    with pytest.raises(ConfigError):
        DerivedConstants.assemble(ParamSet(N=3, q=4.0, m=1.2, s=4.0))
