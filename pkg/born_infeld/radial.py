""" Exact (quadrature-limited) radial solutions of
-div(grad u / sqrt(1 - |grad u|^2)) = rho.

For radial data the equation integrates once: with w = u'/v,
(r^{N-1} w)' = -r^{N-1} rho, so w(r) = -r^{1-N} int_0^r s^{N-1} rho ds
and u' = w/sqrt(1+w^2), v = 1/sqrt(1+w^2). """

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid

from born_infeld.densities import RadialDensity
from born_infeld.fields import ParamSet, RadialField, RadialGrid, sigma

logger = logging.getLogger(__name__)


@dataclass
class RadialSolution:
    """ u, u', v, nu and the flux w on a radial grid. Nodes where the
    flux diverges are flagged in `degenerate` and carry v = 0, nu = inf. """

    grid: RadialGrid
    u: np.ndarray = field(repr=False)
    uprime: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    nu: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    params: ParamSet
    rho: RadialDensity
    degenerate: np.ndarray = field(repr=False)

    @property
    def r(self):
        return self.grid.nodes

    @property
    def N(self):
        return self.params.N

    @property
    def uprime2(self):
        """ u'' = w'/(1+w^2)^{3/2} with w' = -rho - (N-1) w / r """
        r = self.r
        wp = -self.rho(r) - (self.N - 1) * self.w / r
        ret = wp / np.hypot(1.0, self.w) ** 3
        return np.where(self.degenerate, np.nan, ret)

    def as_field(self, name):
        lead = self.rho.leading_power if name == "rho" else None
        values = self.rho(self.r) if name == "rho" else getattr(self, name)
        return RadialField(self.grid, values, leading_power=lead)

    def to_frame(self):
        return pd.DataFrame({"r": self.r, "u": self.u, "uprime": self.uprime,
                             "v": self.v, "nu": self.nu, "w": self.w})

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def radial_flux(rho: RadialDensity, N, r):
    """ w(r) = -r^{1-N} int_0^r s^{N-1} rho(s) ds """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radial flux is only defined for r > 0")
    return -r ** (1 - N) * rho.mass(r, N)


def radial_solve(rho: RadialDensity, params: ParamSet, grid: RadialGrid = None):
    """ Radial strictly spacelike solution with u(r_M) = 0. Nodes where
    the flux is not finite are reported as degenerate, not raised. """
    N = params.N
    if grid is None:
        grid = RadialGrid.log_spaced(dim=N)
    elif grid.dim != N:
        grid = RadialGrid(grid.nodes, N)
    r = grid.nodes

    with np.errstate(over="ignore", invalid="ignore"):
        w = radial_flux(rho, N, r)
        hyp = np.hypot(1.0, w)
        uprime = w / hyp
        v = 1.0 / hyp

    degenerate = ~np.isfinite(w) | (v == 0.0)
    if np.any(degenerate):
        logger.warning("flux diverges at %d of %d radial nodes", int(degenerate.sum()), len(r))
        uprime = np.where(degenerate, np.sign(np.nan_to_num(w, nan=-1.0)), uprime)
        v = np.where(degenerate, 0.0, v)
    nu = np.where(degenerate, np.inf, hyp)

    cum = cumulative_trapezoid(uprime, r, initial=0.0)
    u = cum - cum[-1]

    if np.max(np.abs(uprime)) > 0.99:
        logger.info("gradient degenerates: max |u'| = %.12f at r = %.3g",
                    np.max(np.abs(uprime)), r[np.argmax(np.abs(uprime))])

    return RadialSolution(grid=grid, u=u, uprime=uprime, v=v, nu=nu, w=w,
                          params=params, rho=rho, degenerate=degenerate)


def ode_residual(sol: RadialSolution):
    """ (r^{N-1} w)' + r^{N-1} rho at every node, by second-order
    differences on the nonuniform grid """
    r = sol.r
    flux = r ** (sol.N - 1) * sol.w
    return np.gradient(flux, r, edge_order=2) + r ** (sol.N - 1) * sol.rho(r)


def rescale(sol: RadialSolution, t):
    """ u_t(x) = t u(x/t), rho_t(x) = rho(x/t)/t; grad u_t(t x) = grad u(x) """
    if t <= 0:
        raise ValueError(f"rescale needs t > 0, got {t}")
    return replace(sol, grid=sol.grid.scaled(t), u=t * sol.u, rho=sol.rho.rescale(t))


def asymptotic_margin(sol: RadialSolution):
    """ min over the outer half of the grid of (1 - u'^2) r^2. A margin
    that collapses toward 0 means K_R is not guaranteed to close up. """
    half = len(sol.r) // 2
    r = sol.r[half:]
    up = sol.uprime[half:]
    margin = float(np.min((1.0 - up ** 2) * r ** 2))
    if margin < 1e-2:
        logger.warning("asymptotic margin %.3g: (1 - u'^2) r^2 is not bounded below", margin)
    return margin


def radial_energy(sol: RadialSolution):
    """ I(u) = sigma int (1 - v) r^{N-1} dr - sigma int rho u r^{N-1} dr """
    r = sol.r
    N = sol.N
    weight = sigma(N) * r ** (N - 1)
    return float(trapezoid((1.0 - sol.v) * weight, r) - trapezoid(sol.rho(r) * sol.u * weight, r))
