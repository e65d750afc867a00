import numpy as np
import pytest
from omegaconf import OmegaConf

from born_infeld.densities import RadialDensity
from born_infeld.errors import ConfigError, EstimateRejected
from born_infeld.fields import CartesianGrid, ParamSet, ScalarField, lq_norm
from born_infeld.mollify import (PipelineSettings, coefficients, ellipticity_bounds, hoelder_seminorms,
                                 mollifier_kernel, mollify, rhs_field, run_pipeline, spacelike_report, w2q_norm,
                                 window_mask)


@pytest.fixture
def grid():
    return CartesianGrid(2.0, 33, dim=3)


@pytest.fixture
def rho(grid):
    return RadialDensity(kind="bump", amplitude=1.0, radius=0.5).sample(grid)


def test_kernel(grid):
    K = mollifier_kernel(4, grid)
    assert K.shape == (5, 5, 5)
    assert K.sum() == pytest.approx(1.0)
    assert np.all(K >= 0)
    np.testing.assert_array_equal(K, K[::-1, ::-1, ::-1])
    assert mollifier_kernel(20, grid).shape == (1, 1, 1)


def test_mollify_preserves_mass_and_contracts(rho):
    smooth = mollify(rho, 4)
    assert smooth.values.sum() == pytest.approx(rho.values.sum(), rel=1e-12)
    for p in (1.2, 4.0, np.inf):
        assert lq_norm(smooth, p=p) <= lq_norm(rho, p=p) * (1 + 1e-12)
    assert np.count_nonzero(smooth.values) > np.count_nonzero(rho.values)


def test_mollify_rejects_boundary_support(grid):
    with pytest.raises(EstimateRejected):
        mollify(ScalarField(grid, np.ones(grid.shape)), 4)
    with pytest.raises(ValueError):
        mollify(ScalarField.zeros(grid), 0)
    assert not np.any(mollify(ScalarField.zeros(grid), 4).values)


def test_coefficients(rng):
    p = rng.normal(size=(3, 50))
    p *= rng.uniform(0.0, 0.95, size=50) / np.linalg.norm(p, axis=0)
    a = coefficients(p)
    assert a.shape == (3, 3, 50)
    np.testing.assert_allclose(a, np.swapaxes(a, 0, 1))
    lo, hi = ellipticity_bounds(p)
    assert lo >= 1 - np.max(np.sum(p ** 2, axis=0)) - 1e-12
    assert hi <= 1 + 1e-12


def test_rhs_field(grid, rho):
    f = rhs_field(ScalarField.zeros(grid), rho)
    np.testing.assert_array_equal(f.values, -rho.values)


def test_hoelder_of_linear_field(grid):
    x, y, z = grid.mesh()
    u = ScalarField(grid, 0.3 * x - 0.2 * y + 0.1 * z)
    semi = hoelder_seminorms(u, 0.4, levels=3)
    assert len(semi) == 3
    assert np.all(semi < 1e-10)


def test_window_and_w2q(grid):
    mask = window_mask(grid, 0.5)
    assert mask.sum() == 17 ** 3
    assert w2q_norm(ScalarField.zeros(grid), 4.0, mask) == 0.0


def test_settings_from_config():
    cfg = OmegaConf.create({"n_list": [4, 8], "R_bar": 0.25, "hoelder_levels": 3})
    settings = PipelineSettings.from_config(cfg, nu0=2.0)
    assert settings.n_list == [4, 8] and settings.R_bar == 0.25 and settings.nu0 == 2.0
    with pytest.raises(ConfigError):
        PipelineSettings.from_config(OmegaConf.create({"n_list": [8, 4]}))


def test_pipeline_rejects_unsorted_scales(rho):
    with pytest.raises(ValueError):
        run_pipeline(rho, [8, 4], ParamSet(N=3, q=4.0, m=1.2, s=6.0))


@pytest.mark.slow
def test_small_pipeline(tmp_path):
    grid = CartesianGrid(2.0, 17, dim=3)
    rho = RadialDensity(kind="bump", amplitude=1.0, radius=0.5).sample(grid)
    summary = run_pipeline(rho, [2, 4], ParamSet(N=3, q=4.0, m=1.2, s=6.0))
    assert [s.n for s in summary.stages] == [2, 4]
    assert summary.theta_star < 1
    for report in summary.reports:
        if report.name.startswith(("contraction", "ellipticity", "spacelike")):
            assert report.status == "pass", report.summary_line()
    summary.write(tmp_path)
    assert (tmp_path / "pipeline.csv").exists() and (tmp_path / "pipeline.json").exists()


def test_spacelike_is_strict():
    assert spacelike_report(4, 0.999, {}).status == "pass"
    assert spacelike_report(4, 1.0, {}).status == "fail"
