import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import integers

from born_infeld.densities import RadialDensity
from born_infeld.errors import InfeasibleError
from born_infeld.estimates import expansion_residual, jet_inequality_check
from born_infeld.fields import CartesianGrid, ScalarField
from born_infeld.geometry import (Jet2, RadialGraph, coarea_check, delta_l_norm_sq, gauss_map_norm, lorentz_ball,
                                  mean_curvature, minkowski_inner, monotonicity_residual, random_jets,
                                  second_form_sq)
from born_infeld.radial import radial_solve
from born_infeld.suites import GRAPHS, laplace_beltrami_order


def test_minkowski_signature():
    X = np.array([1.0, 2.0, 3.0, 4.0])
    assert minkowski_inner(X, X) == pytest.approx(1 + 4 + 9 - 16)


def test_jet_validation():
    with pytest.raises(InfeasibleError):
        Jet2(grad=np.array([0.8, 0.6, 0.0]), hess=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        Jet2(grad=np.zeros(3), hess=np.triu(np.ones((3, 3))))


def test_flat_jet():
    jet = Jet2(grad=np.zeros(3), hess=np.zeros((3, 3)))
    assert jet.v == 1.0
    assert mean_curvature(jet) == 0.0
    direct, decomposed = second_form_sq(jet)
    assert direct == 0.0 and decomposed == 0.0


@settings(max_examples=20, deadline=None)
@given(integers(0, 2 ** 32 - 1), integers(3, 5))
def test_gauss_map_and_second_form(seed, N):
    jet = random_jets(200, N, np.random.default_rng(seed))
    scale = np.sum(jet.nu_vec ** 2, axis=-1)
    assert np.max(np.abs(gauss_map_norm(jet) + 1.0) / scale) <= 1e-14
    direct, decomposed = second_form_sq(jet)
    assert np.all(direct >= 0)
    np.testing.assert_allclose(direct, decomposed, rtol=1e-10)


@settings(max_examples=20, deadline=None)
@given(integers(0, 2 ** 32 - 1), integers(3, 5))
def test_pointwise_monotonicity_inequality(seed, N):
    jet = random_jets(500, N, np.random.default_rng(seed), hess_scale=3.0)
    slack = jet_inequality_check(jet, 1 / (8 * N), 7 / (128 * N))
    size = np.sum(jet.hess ** 2, axis=(-1, -2)) + jet.v ** 2 * jet.rho ** 2
    assert np.all(slack >= -1e-12 * size)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_v_gamma_expansion(rng, N):
    jet = random_jets(500, N, rng, max_grad=0.9, third=True)
    assert np.max(expansion_residual(jet, 1 / (8 * N))) <= 1e-9


def test_expansion_needs_third_derivatives(rng):
    jet = random_jets(4, 3, rng)
    with pytest.raises(ValueError):
        expansion_residual(jet, 1 / 24)


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_laplace_beltrami_second_order(name):
    order, errs = laplace_beltrami_order(GRAPHS[name], 41)
    assert order >= 1.8
    assert errs[1] < errs[0]


def test_delta_l_norm_at_least_one(rng):
    jet = random_jets(100, 3, rng, max_grad=0.5)
    dx = rng.normal(size=(100, 3))
    du = 0.3 * np.linalg.norm(dx, axis=-1) * rng.uniform(-1, 1, size=100)
    assert np.all(delta_l_norm_sq(jet, dx, du) >= 1.0)


def test_flat_lorentz_ball_is_euclidean():
    grid = CartesianGrid(1.0, 21, dim=3)
    ball = lorentz_ball(ScalarField.zeros(grid), np.zeros(3), 0.55)
    np.testing.assert_array_equal(ball.mask, grid.radius() < 0.55)
    np.testing.assert_allclose(ball.l.values, grid.radius(), rtol=1e-14)
    assert ball.bounded and ball.inclusion_ok


def test_radial_lorentz_ball(bump_solution):
    ball = lorentz_ball(bump_solution, np.zeros(3), 1.0)
    assert ball.bounded
    assert ball.inclusion_ok
    assert np.all(bump_solution.r[ball.mask] <= ball.enclosing_radius)
    with pytest.raises(ValueError):
        lorentz_ball(bump_solution, np.ones(3), 1.0)


def test_radial_graph(bump_solution):
    graph = RadialGraph(bump_solution)
    assert graph.l_max > 100
    r = graph.radius_at(1.0)
    assert float(graph.l(r)) == pytest.approx(1.0, abs=1e-10)
    volume = graph.integral(np.ones_like(graph.r), area=False)(1.0)
    assert volume == pytest.approx(4 * np.pi * r ** 3 / 3, rel=1e-6)
    with pytest.raises(ValueError):
        graph.radius_at(-1.0)


def test_radial_graph_rejects_degenerate(params, radial_grid):
    sol = radial_solve(RadialDensity(kind="bump", amplitude=1.0), params, radial_grid)
    sol.degenerate[5] = True
    with pytest.raises(InfeasibleError):
        RadialGraph(sol)


def test_coarea(bump_solution, params):
    s_values = np.linspace(0.1, 2.0, 8)
    assert coarea_check(bump_solution, bump_solution.v ** params.gamma, s_values) <= 1e-4


@pytest.mark.parametrize("s", [0.1, 0.5, 1.0, 2.0])
def test_monotonicity_identity(bump_solution, params, s):
    assert monotonicity_residual(bump_solution, params.gamma, s) <= 1e-3
