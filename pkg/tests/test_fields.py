import json
import math

import numpy as np
import pandas as pd
import pytest
from omegaconf import OmegaConf

from born_infeld.errors import ConfigError
from born_infeld.fields import (CartesianGrid, ParamSet, RadialField, RadialGrid, ScalarField, gradient, hessian,
                                lq_norm, omega, sigma, write_field_csv)


def test_unit_ball_and_sphere():
    assert omega(3) == pytest.approx(4 * math.pi / 3)
    assert sigma(3) == pytest.approx(4 * math.pi)
    assert omega(2) == pytest.approx(math.pi)


def test_param_defaults():
    params = ParamSet.from_config(OmegaConf.create({"N": 3, "q": 4.0}))
    assert params.m == pytest.approx(1.2)
    assert params.s == pytest.approx(6.0)
    assert params.gamma == pytest.approx(1 / 24)
    assert params.beta == pytest.approx(1.5)
    assert params.alpha_holder == pytest.approx(0.25)
    assert params.m_star == pytest.approx(2.0)


@pytest.mark.parametrize("kwargs, key", [
    (dict(N=3, q=3.0, m=1.2, s=6.0), "params.q"),
    (dict(N=3, q=2.5, m=1.2, s=6.0), "params.q"),
    (dict(N=2, q=4.0, m=1.0, s=6.0), "params.N"),
    (dict(N=3, q=4.0, m=1.5, s=6.0), "params.m"),
    (dict(N=3, q=4.0, m=1.2, s=3.0), "params.s"),
    (dict(N=3, q=4.0, m=1.2, s=6.0, gamma=0.5), "params.gamma"),
])
def test_param_validation(kwargs, key):
    with pytest.raises(ConfigError) as e:
        ParamSet(**kwargs)
    assert e.value.key == key
    assert key in str(e.value)


def test_radial_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        RadialGrid(np.array([1.0, 0.5]))
    grid = RadialGrid.log_spaced(1e-3, 1.0, 10)
    assert grid.scaled(2.0).nodes[-1] == pytest.approx(2.0)
    assert len(grid) == 10


def test_cartesian_grid():
    grid = CartesianGrid(1.0, 5, dim=2)
    assert grid.h == pytest.approx(0.5)
    assert grid.shape == (5, 5)
    assert grid.boundary_mask().sum() == 16
    assert grid.nearest_index([0.0, 0.0]) == (2, 2)
    with pytest.raises(ConfigError):
        CartesianGrid(1.0, 2)


def test_cartesian_lq_norm():
    grid = CartesianGrid(1.0, 5, dim=3)
    field = ScalarField(grid, np.full(grid.shape, 2.0))
    expected = (125 * 2.0 ** 3 * grid.h ** 3) ** (1 / 3)
    assert lq_norm(field, p=3) == pytest.approx(expected)
    assert lq_norm(field, p=math.inf) == 2.0
    assert lq_norm(field, np.zeros(grid.shape, dtype=bool), p=2) == 0.0
    with pytest.raises(ValueError):
        lq_norm(field, p=0.5)


def test_radial_lq_norm_power():
    grid = RadialGrid.log_spaced(1e-6, 1.0, 4000, dim=3)
    a, p = 0.5, 4.0
    field = RadialField(grid, grid.nodes ** -a, leading_power=a)
    exact = (4 * math.pi / (3 - p * a)) ** (1 / p)
    assert lq_norm(field, p=p) == pytest.approx(exact, rel=1e-4)


def test_radial_lq_norm_divergent():
    grid = RadialGrid.log_spaced(1e-6, 1.0, 100, dim=3)
    field = RadialField(grid, grid.nodes ** -1.0, leading_power=1.0)
    assert lq_norm(field, p=4.0) == math.inf


def test_finite_differences_exact_on_quadratics():
    grid = CartesianGrid(1.0, 9, dim=2)
    x, y = grid.mesh()
    field = ScalarField(grid, 3 * x ** 2 + x * y - y)
    g = gradient(field)
    np.testing.assert_allclose(g[0], 6 * x + y, atol=1e-12)
    np.testing.assert_allclose(g[1], x - 1, atol=1e-12)
    H = hessian(field)
    np.testing.assert_allclose(H[0, 0], 6.0, atol=1e-10)
    np.testing.assert_allclose(H[0, 1], 1.0, atol=1e-10)
    np.testing.assert_allclose(H[1, 1], 0.0, atol=1e-10)


def test_write_field_csv(tmp_path):
    grid = CartesianGrid(1.0, 3, dim=2)
    field = ScalarField(grid, np.arange(9.0).reshape(3, 3))
    path = tmp_path / "f.csv"
    write_field_csv(field, path, name="u")
    df = pd.read_csv(path)
    assert list(df.columns) == ["x1", "x2", "u"]
    assert len(df) == 9
    header = json.loads((tmp_path / "f.json").read_text())
    assert header["kind"] == "cartesian"
    assert header["num_nodes"] == 3
