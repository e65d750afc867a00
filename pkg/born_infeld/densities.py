import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from omegaconf import DictConfig
from scipy.integrate import cumulative_trapezoid, quad
from scipy.interpolate import CubicSpline

from born_infeld.errors import ConfigError, DivergenceError
from born_infeld.fields import CartesianGrid, ScalarField, sigma

logger = logging.getLogger(__name__)

KINDS = ("zero", "power", "constant", "bump", "tabulated")

# resolution of the tabulated bump flux
BUMP_TABLE_NODES = 20001


def _bump_profile(x):
    """ exp(1 - 1/(1-x^2)) on |x| < 1, zero outside; peak value 1 at x = 0 """
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    safe = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe ** 2)), 0.0)


@lru_cache(maxsize=16)
def _bump_mass_spline(N):
    """ s -> int_0^s t^{N-1} bump(t) dt for the unit bump """
    s = np.linspace(0.0, 1.0, BUMP_TABLE_NODES)
    cum = cumulative_trapezoid(s ** (N - 1) * _bump_profile(s), s, initial=0.0)
    return CubicSpline(s, cum)


@dataclass(frozen=True)
class RadialDensity:
    """ Analytic description of a radial datum rho(|x|).

    kinds:
        zero
        power      A r^{-a} on (0, R0]
        constant   A on r <= R0
        bump       A exp(1 - 1/(1 - (r/R0)^2)) on r < R0
        tabulated  piecewise-linear table, zero beyond the last radius
    """

    kind: str = "zero"
    amplitude: float = 0.0
    radius: float = 1.0
    exponent: float = 0.0
    table_r: Optional[np.ndarray] = field(default=None, repr=False)
    table_values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown density kind {self.kind!r}, expected one of {KINDS}",
                              key="density.kind")
        if self.radius <= 0:
            raise ConfigError("support radius must be positive", key="density.radius")
        if self.exponent < 0:
            raise ConfigError("power exponent must be nonnegative", key="density.exponent")
        if self.kind == "tabulated":
            if self.table_r is None or self.table_values is None:
                raise ConfigError("tabulated density needs table_r and table_values", key="density")
            if np.any(np.diff(self.table_r) <= 0) or self.table_r[0] < 0:
                raise ConfigError("table_r must be nonnegative and increasing", key="density.table_r")
            vals = np.asarray(self.table_values)
            if np.any(vals > 0) and np.any(vals < 0):
                raise ConfigError("tabulated density must be sign-definite", key="density.table_values")

    @staticmethod
    def from_config(cfg: DictConfig):
        kind = cfg.get("kind", "zero")
        table_r = cfg.get("table_r", None)
        table_values = cfg.get("table_values", None)
        return RadialDensity(
            kind=kind,
            amplitude=float(cfg.get("amplitude", 0.0)),
            radius=float(cfg.get("radius", 1.0)),
            exponent=float(cfg.get("exponent", 0.0)),
            table_r=None if table_r is None else np.asarray(list(table_r), dtype=float),
            table_values=None if table_values is None else np.asarray(list(table_values), dtype=float),
        )

    @property
    def is_zero(self):
        if self.kind == "tabulated":
            return not np.any(self.table_values)
        return self.kind == "zero" or self.amplitude == 0.0

    @property
    def leading_power(self):
        return self.exponent if self.kind == "power" else 0.0

    @property
    def support_radius(self):
        if self.kind == "tabulated":
            return float(self.table_r[-1])
        return self.radius

    def in_lq_loc(self, q, N):
        """ rho in L^q_loc iff q a < N for the power family """
        if q == math.inf:
            return self.leading_power == 0
        return q * self.leading_power < N

    def describe(self):
        """ Instance descriptor used in reports """
        ret = {"kind": self.kind, "amplitude": self.amplitude,
               "radius": self.radius, "exponent": self.exponent}
        if self.kind == "tabulated":
            ret["table_size"] = int(len(self.table_r))
        return ret

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        A, R0 = self.amplitude, self.radius
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "power":
            safe = np.where(r > 0, r, 1.0)
            return np.where((r > 0) & (r <= R0), A * safe ** (-self.exponent), 0.0)
        if self.kind == "constant":
            return np.where(r <= R0, A, 0.0)
        if self.kind == "bump":
            return A * _bump_profile(r / R0)
        return np.interp(r, self.table_r, self.table_values, right=0.0)

    def mass(self, r, N):
        """ int_0^r s^{N-1} rho(s) ds """
        r = np.asarray(r, dtype=float)
        A, R0 = self.amplitude, self.radius
        rc = np.minimum(r, R0)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "power":
            a = self.exponent
            if a >= N:
                raise DivergenceError(f"r^(N-1) rho is not integrable at 0: a = {a} >= N = {N}")
            return A * rc ** (N - a) / (N - a)
        if self.kind == "constant":
            return A * rc ** N / N
        if self.kind == "bump":
            return A * R0 ** N * _bump_mass_spline(N)(rc / R0)
        # exact on each linear piece rho = alpha + beta s
        tr = np.concatenate([[0.0], self.table_r]) if self.table_r[0] > 0 else np.asarray(self.table_r)
        tv = np.interp(tr, self.table_r, self.table_values)
        beta = np.diff(tv) / np.diff(tr)
        alpha = tv[:-1] - beta * tr[:-1]

        def piece(i, a, b):
            return alpha[i] * (b ** N - a ** N) / N + beta[i] * (b ** (N + 1) - a ** (N + 1)) / (N + 1)

        cum = np.concatenate([[0.0], np.cumsum(piece(np.arange(len(beta)), tr[:-1], tr[1:]))])
        rc = np.minimum(r, tr[-1])
        i = np.clip(np.searchsorted(tr, rc, side="right") - 1, 0, len(beta) - 1)
        return cum[i] + piece(i, tr[i], rc)

    def lq_norm(self, p, N, r_max=math.inf):
        """ |rho|_{L^p(B_{r_max})}, analytic where the kind allows it """
        R = min(self.support_radius, r_max)
        A = abs(self.amplitude)
        if self.is_zero:
            return 0.0
        if p == math.inf:
            if self.kind == "power" and self.exponent > 0:
                return math.inf
            if self.kind == "tabulated":
                mask = self.table_r <= R
                return float(np.max(np.abs(self.table_values[mask]))) if np.any(mask) else 0.0
            return A
        if self.kind == "power":
            a = self.exponent
            if p * a >= N:
                logger.warning("|rho|_%s diverges: p*a = %s >= N = %s", p, p * a, N)
                return math.inf
            return (sigma(N) * A ** p * R ** (N - p * a) / (N - p * a)) ** (1.0 / p)
        if self.kind == "constant":
            return (sigma(N) * A ** p * R ** N / N) ** (1.0 / p)
        integrand = lambda s: abs(float(self(s))) ** p * s ** (N - 1)
        points = None
        if self.kind == "tabulated":
            points = [x for x in self.table_r if 0 < x < R][:50] or None
        val, _ = quad(integrand, 0.0, R, points=points, limit=200, epsabs=0.0, epsrel=1e-12)
        return (sigma(N) * val) ** (1.0 / p)

    def rescale(self, t):
        """ rho_t(x) = rho(x/t)/t """
        if self.kind == "zero":
            return self
        if self.kind == "tabulated":
            return RadialDensity(kind="tabulated", radius=self.radius * t,
                                 table_r=self.table_r * t, table_values=self.table_values / t)
        amplitude = self.amplitude / t
        if self.kind == "power":
            amplitude = self.amplitude * t ** (self.exponent - 1)
        return RadialDensity(kind=self.kind, amplitude=amplitude, radius=self.radius * t,
                             exponent=self.exponent)

    def sample(self, grid: CartesianGrid, center=None):
        """ Nodal values on a Cartesian grid. A singular origin is sampled at r = h/2. """
        r = grid.radius(center)
        if self.leading_power > 0:
            r = np.maximum(r, 0.5 * grid.h)
        return ScalarField(grid, self(r))
