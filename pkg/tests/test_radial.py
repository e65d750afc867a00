import numpy as np
import pytest

from born_infeld.densities import RadialDensity
from born_infeld.fields import RadialGrid
from born_infeld.radial import (asymptotic_margin, ode_residual, radial_energy, radial_flux, radial_solve,
                                rescale)


def test_zero_density(params, radial_grid):
    sol = radial_solve(RadialDensity(), params, radial_grid)
    assert not np.any(sol.u)
    np.testing.assert_array_equal(sol.v, 1.0)
    assert radial_energy(sol) == 0.0
    assert not np.any(sol.degenerate)


def test_constant_density_flux(params, radial_grid):
    rho = RadialDensity(kind="constant", amplitude=2.0, radius=1.0)
    sol = radial_solve(rho, params, radial_grid)
    inside = sol.r <= 1.0
    w = -2.0 * sol.r[inside] / 3
    np.testing.assert_allclose(sol.w[inside], w, rtol=1e-13)
    np.testing.assert_allclose(sol.uprime[inside], w / np.sqrt(1 + w ** 2), rtol=1e-13)
    # outside the support the flux is -M r^{1-N}
    outside = sol.r > 1.0
    np.testing.assert_allclose(sol.w[outside], -(2.0 / 3) * sol.r[outside] ** -2, rtol=1e-13)
    assert sol.u[-1] == 0.0
    assert np.all(np.diff(sol.u) < 0)


def test_toy_datum_blows_up(params, radial_grid):
    toy = RadialDensity(kind="power", amplitude=1.0, radius=1.0, exponent=1.5)
    r = np.array([1e-4, 0.25, 1.0])
    np.testing.assert_allclose(radial_flux(toy, 3, r), -r ** -0.5 / 1.5, rtol=1e-13)
    sol = radial_solve(toy, params, radial_grid)
    assert abs(np.interp(1e-4, sol.r, sol.uprime)) > 0.99
    assert np.max(np.abs(sol.uprime)) < 1.0


def test_flux_needs_positive_radius(bump):
    with pytest.raises(ValueError):
        radial_flux(bump, 3, np.array([0.0, 1.0]))


def test_ode_residual(bump_solution, bump):
    r = bump_solution.r
    scale = np.max(r ** 2 * bump(r))
    inner = (r > 1e-3) & (r < 2.0)
    assert np.max(np.abs(ode_residual(bump_solution)[inner])) <= 1e-2 * scale


def test_uprime2_matches_differences(bump_solution):
    r = bump_solution.r
    fd = np.gradient(bump_solution.uprime, r, edge_order=2)
    inner = (r > 1e-2) & (r < 0.9)
    np.testing.assert_allclose(bump_solution.uprime2[inner], fd[inner], atol=1e-3)


@pytest.mark.parametrize("t", [0.5, 2.0, 5.0])
def test_rescale(bump, params, radial_grid, t):
    sol = radial_solve(bump, params, radial_grid)
    scaled = rescale(sol, t)
    direct = radial_solve(bump.rescale(t), params, radial_grid.scaled(t))
    np.testing.assert_allclose(scaled.uprime, direct.uprime, rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose(scaled.u, t * sol.u, rtol=1e-14)
    back = rescale(scaled, 1.0 / t)
    np.testing.assert_allclose(back.u, sol.u, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(back.r, sol.r, rtol=1e-12)
    with pytest.raises(ValueError):
        rescale(sol, 0.0)


def test_energy_is_negative(bump_solution):
    assert radial_energy(bump_solution) < 0


def test_asymptotic_margin(bump_solution):
    assert asymptotic_margin(bump_solution) > 0.0


def test_solution_frame(bump_solution, tmp_path):
    bump_solution.to_csv(tmp_path / "radial.csv")
    df = bump_solution.to_frame()
    assert list(df.columns) == ["r", "u", "uprime", "v", "nu", "w"]
    assert len(df) == len(bump_solution.r)


def test_grid_dimension_follows_params(params, bump):
    grid = RadialGrid.log_spaced(1e-3, 10.0, 100, dim=5)
    sol = radial_solve(bump, params, grid)
    assert sol.grid.dim == 3
