import numpy as np
import pytest

from config import CONFIG, load_config
from born_infeld.errors import ConfigError
from born_infeld.reports import exit_code
from born_infeld.suites import SUITES, radial_family, run_suite


def _configure(*overrides):
    load_config(None, include_cmd_line=False, overrides=["progress=False", *overrides])


def _assert_no_failures(reports):
    assert reports
    failed = [r.summary_line() for r in reports if r.status == "fail"]
    assert not failed, failed
    assert exit_code(reports) == 0


@pytest.mark.parametrize("name,overrides", [
    ("moser", ["verify.moser.count=10"]),
    ("gronwall", ["verify.gronwall.count=10", "verify.gronwall.points=51"]),
    ("riesz", ["verify.riesz.count=6"]),
    ("identities", ["verify.identities.dims=[3]", "verify.identities.jets=200",
                    "verify.identities.batch=100", "verify.identities.profile_samples=20"]),
    ("theorem1", ["sweep.count=3"]),
])
def test_fast_suites(name, overrides):
    _configure(*overrides)
    _assert_no_failures(run_suite(name, seed=7))


def test_geometry_suite():
    _configure("verify.geometry.s_points=5")
    reports = run_suite("geometry", seed=7)
    _assert_no_failures(reports)
    assert {r.instance_id for r in reports if r.name == "laplace_beltrami"} == {"quadratic", "sine", "hyperboloid"}


def test_moser_guard_reported():
    _configure("verify.moser.count=2")
    reports = run_suite("moser", seed=1)
    assert [r.name for r in reports] == ["moser_series", "moser_guard"]


def test_suites_are_reproducible():
    _configure("verify.riesz.count=3")
    first = [r.asdict() for r in run_suite("riesz", seed=11)]
    second = [r.asdict() for r in run_suite("riesz", seed=11)]
    assert first == second


def test_unknown_suite():
    with pytest.raises(ConfigError):
        run_suite("nonsense", seed=0)
    assert "all" not in SUITES


def test_radial_family():
    cfg = CONFIG.sweep
    one = radial_family(6, np.random.default_rng([3, 1]), cfg)
    two = radial_family(6, np.random.default_rng([3, 1]), cfg)
    assert one == two
    assert [iid for iid, _, _ in one] == [f"power-{i:03d}" for i in range(6)]
    assert [R for _, _, R in one] == [0.5, 1.0, 2.0] * 2
    for _, rho, _ in one:
        assert 0 <= rho.exponent <= cfg.exponent_max
        assert cfg.amplitude_min <= rho.amplitude <= cfg.amplitude_max


def test_oracle_suite():
    _configure("verify.oracle.nodes=[17,33]")
    reports = run_suite("oracle", seed=0)
    names = [r.name for r in reports]
    assert names.count("grid_oracle_grad") == 2 and names.count("grid_oracle_energy") == 2
    assert {"grid_oracle_refine_grad_err", "grid_oracle_refine_energy_err"} <= set(names)
    for r in reports:
        if r.name == "grid_oracle_grad":
            assert r.status == "pass", r.summary_line()


def test_default_sizes():
    _configure()
    assert CONFIG.grid.num_nodes == 64
    assert CONFIG.grid.half_width == 4 * CONFIG.density.radius
    assert CONFIG.pipeline.grid.half_width == 4 * CONFIG.pipeline.density.radius
    assert CONFIG.verify.identities.jets == 10 ** 5
