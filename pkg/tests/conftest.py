import numpy as np
import pytest

from config import load_config
from born_infeld.constants import DerivedConstants
from born_infeld.densities import RadialDensity
from born_infeld.fields import ParamSet, RadialGrid
from born_infeld.radial import radial_solve


@pytest.fixture(autouse=True)
def default_config():
    """ Every test starts from configs/default.yaml, without progress bars """
    load_config(None, include_cmd_line=False, overrides=["progress=False"])
    yield
    load_config(None, include_cmd_line=False, overrides=["progress=False"])


@pytest.fixture
def params():
    return ParamSet(N=3, q=4.0, m=1.2, s=6.0)


@pytest.fixture
def consts(params):
    return DerivedConstants.assemble(params)


@pytest.fixture
def radial_grid():
    return RadialGrid.log_spaced(1e-6, 1e3, 4000, dim=3)


@pytest.fixture
def bump():
    return RadialDensity(kind="bump", amplitude=1.0, radius=1.0)


@pytest.fixture
def bump_solution(bump, params, radial_grid):
    return radial_solve(bump, params, radial_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
