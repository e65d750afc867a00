import math

import numpy as np
import pytest

from born_infeld.densities import RadialDensity
from born_infeld.errors import ConfigError, DivergenceError
from born_infeld.estimates import (DatumNorms, GronwallParams, ball_mass, collar_radius, exterior_gradient_bound,
                                   global_gradient_bound, gradient_certificate_check, gronwall_bound,
                                   gronwall_saturate, haarala_check, jet_inequality_check, local_gradient_bound,
                                   nu_excess_check, riesz_potential, step1_sup_bound, step3_nu_bound,
                                   theorem1_gap)
from born_infeld.fields import RadialGrid, omega
from born_infeld.geometry import Jet2
from born_infeld.radial import radial_solve


@pytest.mark.parametrize("C1", [0.0, 0.5, 2.0])
def test_gronwall_saturation_below_bound(C1):
    p = GronwallParams(C0=1.3, C1=C1, C2=0.7, q=4.0, beta=0.5, T=2.0)
    t = np.linspace(0.0, 2.0, 101)
    psi = gronwall_saturate(p)(t)
    bound = gronwall_bound(p, t)
    assert psi[0] == pytest.approx(1.3)
    assert np.all(psi <= bound * (1 + 1e-9))
    if C1 == 0.0:
        np.testing.assert_allclose(psi, bound, rtol=1e-10)


def test_gronwall_validation():
    p = GronwallParams(C0=1.0, C1=1.0, C2=1.0, q=3.0, beta=1.0, T=1.0)
    with pytest.raises(ValueError):
        gronwall_bound(p, 2.0)
    with pytest.raises(ValueError):
        gronwall_saturate(p)(-0.1)
    with pytest.raises(ConfigError):
        GronwallParams(C0=1.0, C1=1.0, C2=1.0, q=2.0, beta=1.0, T=1.0)
    with pytest.raises(ConfigError):
        GronwallParams(C0=1.0, C1=1.0, C2=1.0, q=3.0, beta=2.0, T=1.0)
    with pytest.raises(ConfigError):
        GronwallParams(C0=0.0, C1=1.0, C2=1.0, q=3.0, beta=1.0, T=1.0)


def test_flat_jet_inequality_is_tight():
    jet = Jet2(grad=np.zeros(3), hess=np.zeros((3, 3)))
    assert jet_inequality_check(jet, 1 / 24, 7 / 384) == 0.0


def test_zero_density_certificate(params, consts):
    assert global_gradient_bound(DatumNorms(0.0, 0.0), params, consts) == 1.0


def test_local_below_global(params, consts, bump):
    norms = DatumNorms.from_density(bump, params)
    glob = global_gradient_bound(norms, params, consts)
    for R in (0.1, 1.0, 10.0):
        assert local_gradient_bound(R, norms.rho_q, norms, params, consts) <= glob + 1e-12


@pytest.mark.parametrize("t", [0.5, 2.0, 5.0])
def test_certificate_scale_invariance(params, consts, t):
    rho = RadialDensity(kind="constant", amplitude=1.0, radius=1.0)
    base = global_gradient_bound(DatumNorms.from_density(rho, params), params, consts)
    scaled = global_gradient_bound(DatumNorms.from_density(rho.rescale(t), params), params, consts)
    assert scaled == pytest.approx(base, rel=1e-8, abs=1e-10)


def test_certificate_check_small_datum(params, consts, radial_grid):
    sol = radial_solve(RadialDensity(kind="constant", amplitude=0.01, radius=1.0), params, radial_grid)
    report = gradient_certificate_check(sol, consts, instance_id="small")
    assert report.status == "pass"
    assert 0 < report.rhs <= 1


def test_theorem1_zero_density(params, consts, radial_grid):
    sol = radial_solve(RadialDensity(), params, radial_grid)
    report = theorem1_gap(sol, np.zeros(3), 1.0, params, consts, instance_id="zero")
    assert report.lhs == pytest.approx(omega(3))
    assert report.rhs == pytest.approx(omega(3), rel=1e-8)
    assert report.status == "pass"


def test_theorem1_bump(params, consts, bump_solution):
    report = theorem1_gap(bump_solution, np.zeros(3), 1.0, params, consts, instance_id="bump")
    assert report.status == "pass"
    assert report.constants["rho_q_KR"] > 0
    with pytest.raises(ValueError):
        theorem1_gap(bump_solution, np.ones(3), 1.0, params, consts)


def test_haarala(consts, bump_solution):
    report = haarala_check(bump_solution, None, np.zeros(3), 1.0, 4.0, consts, instance_id="bump")
    assert report.status == "pass"
    assert report.constants["fitted"] <= consts.haarala
    rejected = haarala_check(bump_solution, None, np.zeros(3), 2e3, 4.0, consts)
    assert rejected.status == "rejected"


def test_nu_excess(params):
    grid = RadialGrid.log_spaced(1e-6, 1e3, 4000, dim=3)
    strong = RadialDensity(kind="bump", amplitude=10.0, radius=1.0)
    report = nu_excess_check(radial_solve(strong, params, grid), None, 1.5, 4.0, instance_id="strong")
    assert report.status == "pass"
    assert report.rhs > 0

    short = RadialGrid.log_spaced(1e-6, 0.5, 2000, dim=3)
    report = nu_excess_check(radial_solve(strong, params, short), None, 1.5, 4.0)
    assert report.status == "rejected"


def test_regularity_step_constants(params, consts, bump):
    norms = DatumNorms.from_density(bump, params)
    sup_bound = step1_sup_bound(norms, params, consts)
    assert math.isfinite(sup_bound) and sup_bound > 0
    near, far = exterior_gradient_bound(1.0, norms, params, consts), exterior_gradient_bound(4.0, norms, params, consts)
    assert 0 <= far < near < 1
    assert collar_radius(3.0, 2.0) == pytest.approx(5.0)
    step3 = step3_nu_bound(norms, params, consts, 1.0, 1.5, sup_bound)
    assert step3.nu_bar > 0
    assert 0 <= step3.theta < 1


def test_ball_mass_off_center():
    unit = RadialDensity(kind="constant", amplitude=1.0, radius=1.0)
    x = np.array([0.2, 0.0, 0.0])
    assert ball_mass(unit, x, 3.0, 3) == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert ball_mass(unit, x, 0.5, 3) == pytest.approx(4 * math.pi * 0.125 / 3, rel=1e-8)


def test_riesz_unit_ball():
    unit = RadialDensity(kind="constant", amplitude=1.0, radius=1.0)
    res = riesz_potential(unit, np.zeros(3), 1.0, 0.1, 4.0, 3)
    assert res.value == pytest.approx((4 * math.pi / 3) / 0.9, rel=1e-8)
    assert res.ok


@pytest.mark.parametrize("kind,exponent", [("bump", 0.0), ("power", 0.3)])
def test_riesz_bound(kind, exponent):
    rho = RadialDensity(kind=kind, amplitude=2.0, radius=1.0, exponent=exponent)
    res = riesz_potential(rho, np.zeros(3), 1.5, -0.2, 4.0, 3)
    assert 0 < res.value <= res.bound


def test_riesz_divergence():
    unit = RadialDensity(kind="constant", amplitude=1.0, radius=1.0)
    with pytest.raises(DivergenceError):
        riesz_potential(unit, np.zeros(3), 1.0, 0.25, 4.0, 3)
    with pytest.raises(ValueError):
        riesz_potential(unit, np.zeros(2), 1.0, 0.1, 4.0, 3)
    assert riesz_potential(RadialDensity(), np.zeros(3), 1.0, 0.1, 4.0, 3).value == 0.0
