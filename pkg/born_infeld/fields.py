""" Grids, fields, masks, finite differences and norms shared by the
rest of the package. Everything here is pure numpy. """

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import pandas as pd
from omegaconf import DictConfig
from scipy.integrate import trapezoid
from scipy.special import gamma as gamma_fn

from born_infeld.errors import ConfigError

logger = logging.getLogger(__name__)

# boolean array over grid nodes
Mask = np.ndarray


def omega(N):
    """ Volume of the unit ball in R^N """
    return math.pi ** (N / 2) / gamma_fn(N / 2 + 1)


def sigma(N):
    """ Area of the unit sphere S^{N-1} """
    return N * omega(N)


@dataclass(frozen=True)
class ParamSet:
    """ Dimension and exponent bundle that gates every estimate.
    gamma defaults to 1/(8N) when not given. """

    N: int
    q: float
    m: float
    s: float
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", 1.0 / (8 * self.N))
        self.validate()

    @property
    def beta(self):
        return 2 * self.N / self.q

    @property
    def alpha_holder(self):
        return 1 - self.N / self.q

    @property
    def two_star(self):
        return 2 * self.N / (self.N + 2)

    @property
    def m_star(self):
        """ Sobolev conjugate Nm/(N-m) of m """
        return self.N * self.m / (self.N - self.m)

    def validate(self):
        N = self.N
        if int(N) != N or N < 3:
            raise ConfigError(f"N must be an integer >= 3, got {N}", key="params.N")
        if not self.q > N:
            raise ConfigError(f"q must exceed N={N}, got {self.q}", key="params.q")
        if not 1 <= self.m <= self.two_star + 1e-12:
            raise ConfigError(f"m must lie in [1, 2N/(N+2)] = [1, {self.two_star:.6g}], got {self.m}",
                              key="params.m")
        if not self.s > N:
            raise ConfigError(f"s must exceed N={N}, got {self.s}", key="params.s")
        if not 0 < self.gamma < 1.0 / N:
            raise ConfigError(f"gamma must lie in (0, 1/N), got {self.gamma}", key="params.gamma")

    @staticmethod
    def from_config(cfg: DictConfig):
        N = int(cfg.N)
        s = cfg.get("s", None)
        if s is None:
            s = 2 * N / (N - 2)
        m = cfg.get("m", None)
        if m is None:
            m = 2 * N / (N + 2)
        return ParamSet(N=N, q=float(cfg.q), m=float(m), s=float(s),
                        gamma=cfg.get("gamma", None))

    def asdict(self):
        return {"N": self.N, "q": self.q, "m": self.m, "s": self.s, "gamma": self.gamma}


@dataclass(frozen=True)
class RadialGrid:
    """ Strictly increasing positive radii. dim is the ambient N used
    for the sigma_{N-1} r^{N-1} measure. """

    nodes: np.ndarray
    dim: int = 3

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ValueError("radial grid needs at least two nodes")
        if nodes[0] <= 0 or np.any(np.diff(nodes) <= 0):
            raise ValueError("radial nodes must be positive and strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @staticmethod
    def log_spaced(r_min=1e-6, r_max=1e3, num_nodes=4000, dim=3):
        return RadialGrid(np.geomspace(r_min, r_max, num_nodes), dim)

    @staticmethod
    def from_config(cfg: DictConfig, dim=3):
        return RadialGrid.log_spaced(cfg.r_min, cfg.r_max, cfg.num_nodes, dim)

    def scaled(self, t):
        return RadialGrid(self.nodes * t, self.dim)

    def __len__(self):
        return len(self.nodes)


@dataclass
class RadialField:
    """ Values on a RadialGrid. leading_power a means f ~ c r^{-a}
    near the origin; it drives the integrability check in lq_norm. """

    grid: RadialGrid
    values: np.ndarray
    leading_power: Optional[float] = None


@dataclass(frozen=True)
class CartesianGrid:
    """ Uniform box [-L, L]^d with num_nodes nodes per axis """

    half_width: float
    num_nodes: int
    dim: int = 3

    def __post_init__(self):
        if self.half_width <= 0 or self.num_nodes < 3:
            raise ConfigError("grid needs half_width > 0 and at least 3 nodes per axis", key="grid")

    @property
    def h(self):
        return 2 * self.half_width / (self.num_nodes - 1)

    @property
    def shape(self):
        return (self.num_nodes,) * self.dim

    @property
    def axis(self):
        return np.linspace(-self.half_width, self.half_width, self.num_nodes)

    def mesh(self):
        """ Coordinate arrays, one per axis, each of grid shape """
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij")

    def radius(self, center=None):
        X = self.mesh()
        if center is None:
            center = np.zeros(self.dim)
        return np.sqrt(sum((X[i] - center[i]) ** 2 for i in range(self.dim)))

    def ball_mask(self, center, R):
        return self.radius(center) < R

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for i in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[i] = 0
            mask[tuple(idx)] = True
            idx[i] = -1
            mask[tuple(idx)] = True
        return mask

    def interior(self):
        return (slice(1, -1),) * self.dim

    def nearest_index(self, x):
        idx = np.rint((np.asarray(x, dtype=float) + self.half_width) / self.h).astype(int)
        return tuple(np.clip(idx, 0, self.num_nodes - 1))

    def header(self):
        return {"half_width": self.half_width, "num_nodes": self.num_nodes,
                "dim": self.dim, "h": self.h}

    @staticmethod
    def from_config(cfg: DictConfig):
        return CartesianGrid(float(cfg.half_width), int(cfg.num_nodes), int(cfg.get("dim", 3)))


@dataclass
class ScalarField:

    grid: CartesianGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    @staticmethod
    def zeros(grid):
        return ScalarField(grid, np.zeros(grid.shape))


def _radial_lq(field: RadialField, mask, p):
    r = field.grid.nodes
    N = field.grid.dim
    f = np.abs(field.values)
    if mask is None:
        mask = np.ones(len(r), dtype=bool)
    if not np.any(mask):
        return 0.0

    a = field.leading_power or 0.0
    if mask[0] and a > 0 and (p == math.inf or p * a >= N):
        logger.warning("L^%s norm diverges at the origin: p*a = %s >= N = %s", p, p * a, N)
        return math.inf

    if p == math.inf:
        return float(np.max(f[mask]))

    integrand = np.where(mask, sigma(N) * f ** p * r ** (N - 1), 0.0)
    total = trapezoid(integrand, r)
    if mask[0]:
        # f ~ c r^{-a} on (0, r_1]
        c = f[0] * r[0] ** a
        total += sigma(N) * c ** p * r[0] ** (N - p * a) / (N - p * a)
    return float(total ** (1.0 / p))


def lq_norm(field: Union[ScalarField, RadialField], mask: Optional[Mask] = None, p=2.0):
    """ Discrete L^p norm over the masked nodes. Cartesian fields use
    (sum |f|^p h^d)^{1/p}; radial fields use the sigma_{N-1} r^{N-1} dr
    measure. An empty mask gives 0. """
    if p != math.inf and p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    if isinstance(field, RadialField):
        return _radial_lq(field, mask, p)

    f = np.abs(field.values)
    if mask is not None:
        f = f[mask]
    if f.size == 0:
        return 0.0
    if p == math.inf:
        return float(np.max(f))
    return float((np.sum(f ** p) * field.grid.h ** field.grid.dim) ** (1.0 / p))


def gradient(field: ScalarField):
    """ Centered differences inside, second-order one-sided at the
    boundary. Returns an array of shape (d, *grid.shape). """
    grid = field.grid
    if grid.dim == 1:
        return np.gradient(field.values, grid.h, edge_order=2)[None]
    return np.stack(np.gradient(field.values, grid.h, edge_order=2))


def hessian(field: ScalarField):
    """ Symmetrized second differences, shape (d, d, *grid.shape) """
    grid = field.grid
    grad = gradient(field)
    H = np.stack([gradient(ScalarField(grid, g)) for g in grad])
    return 0.5 * (H + np.swapaxes(H, 0, 1))


def write_field_csv(field: Union[ScalarField, RadialField], path, name="value"):
    """ One node per row (coordinates, value) plus a JSON header next
    to the CSV describing the grid """
    if isinstance(field, RadialField):
        df = pd.DataFrame({"r": field.grid.nodes, name: field.values})
        header = {"kind": "radial", "num_nodes": len(field.grid), "dim": field.grid.dim,
                  "r_min": float(field.grid.nodes[0]), "r_max": float(field.grid.nodes[-1])}
    else:
        grid = field.grid
        cols = {f"x{i + 1}": X.ravel() for i, X in enumerate(grid.mesh())}
        cols[name] = field.values.ravel()
        df = pd.DataFrame(cols)
        header = {"kind": "cartesian", **grid.header()}
    df.to_csv(path, index=False, float_format="%.17g")
    with open(str(path).rsplit(".", 1)[0] + ".json", "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
