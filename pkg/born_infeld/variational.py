""" Discrete minimizer of the Born-Infeld energy

    I(u) = int (1 - sqrt(1 - |grad u|^2)) - int rho u

over grid functions with fixed values on the box boundary (zero by
default) and |grad u| <= 1.

u lives on nodes. Every cell carries the 2^d one-sided "corner"
gradients built from its edge differences, and the cell energy is their
average. The energy is convex in the nodal values, hourglass modes are
penalized, and feasibility means every corner gradient has length <= 1.
The solver runs damped Newton on the tau-regularized energy, lowering
tau until the cap is inactive, then polishes on the true energy. Newton
systems are solved matrix-free by CG preconditioned with the exact
Dirichlet Laplacian (DST-I). """

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, NamedTuple, Optional, Tuple

import h5py
import numpy as np
from numpy.polynomial.legendre import leggauss
from omegaconf import DictConfig
from scipy.fft import dstn, idstn
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import LinearOperator, cg

from config import CONFIG
from born_infeld.densities import RadialDensity
from born_infeld.errors import InfeasibleError
from born_infeld.fields import CartesianGrid, ScalarField
from born_infeld.radial import RadialSolution, radial_energy

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = leggauss(16)


class RegularizedOperator:
    """ a_tau(z) = z / sqrt(1 - c(|z|)^2), with the cap c(r) = eta_tau(r) r
    equal to r below 1 - tau and to 1 - tau/2 above 1 - tau/2. In
    between c is the quintic Hermite blend r0 + (tau/2) p(x),
    p(x) = x + 4x^3 - 7x^4 + 3x^5, which is C^2 and increasing.
    tau = 0 gives the true operator z / sqrt(1 - |z|^2). """

    def __init__(self, tau):
        if not 0 <= tau < 1:
            raise ValueError(f"tau must lie in [0, 1), got {tau}")
        self.tau = tau
        self.r0 = 1.0 - tau
        self.r1 = 1.0 - 0.5 * tau

    def _blend(self, r):
        x = np.clip((r - self.r0) / (0.5 * self.tau), 0.0, 1.0)
        p = x + 4 * x ** 3 - 7 * x ** 4 + 3 * x ** 5
        dp = 1 + 12 * x ** 2 - 28 * x ** 3 + 15 * x ** 4
        return p, dp

    def cap(self, r):
        r = np.asarray(r, dtype=float)
        if self.tau == 0:
            return r
        p, _ = self._blend(r)
        return np.where(r <= self.r0, r, np.where(r >= self.r1, self.r1, self.r0 + 0.5 * self.tau * p))

    def cap_derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.tau == 0:
            return np.ones_like(r)
        _, dp = self._blend(r)
        return np.where(r <= self.r0, 1.0, np.where(r >= self.r1, 0.0, dp))

    def phi(self, r):
        """ |a(z)| / |z| as a function of r = |z| """
        c = self.cap(r)
        return 1.0 / np.sqrt(1.0 - c * c)

    def slope(self, r):
        """ Coefficient s(r) in da = phi I + s z z^T """
        r = np.asarray(r, dtype=float)
        c = self.cap(r)
        phi = 1.0 / np.sqrt(1.0 - c * c)
        safe = np.where(r > 0, r, 1.0)
        ratio = np.where(r > 0, c * self.cap_derivative(r) / safe, 1.0)
        return ratio * phi ** 3

    def flux(self, z):
        """ a_tau(z) for z of shape (d, ...) """
        z = np.asarray(z, dtype=float)
        r = np.sqrt(np.sum(z * z, axis=0))
        return z * self.phi(r)

    def jacobian_apply(self, z, dz):
        r = np.sqrt(np.sum(z * z, axis=0))
        return self.phi(r) * dz + self.slope(r) * np.sum(z * dz, axis=0) * z

    def density(self, r):
        """ Phi_tau(r) with Phi_tau' = r phi(r) and Phi_tau(0) = 0 """
        r = np.asarray(r, dtype=float)
        if self.tau == 0:
            return 1.0 - np.sqrt(1.0 - r * r)
        r0, r1 = self.r0, self.r1
        base0 = 1.0 - math.sqrt(1.0 - r0 * r0)
        inner = 1.0 - np.sqrt(1.0 - np.minimum(r, r0) ** 2)

        # Gauss-Legendre on [r0, min(r, r1)]
        upper = np.clip(r, r0, r1)
        half = 0.5 * (upper - r0)
        s = r0 + half[..., None] * (1.0 + _GL_NODES)
        middle = half * np.sum(_GL_WEIGHTS * s * self.phi(s), axis=-1)

        top = self.density_at_r1() + 0.5 * self.phi(r1) * (np.maximum(r, r1) ** 2 - r1 ** 2)
        return np.where(r <= r0, inner, np.where(r <= r1, base0 + middle, top))

    def density_at_r1(self):
        r0, r1 = self.r0, self.r1
        half = 0.5 * (r1 - r0)
        s = r0 + half * (1.0 + _GL_NODES)
        return 1.0 - math.sqrt(1.0 - r0 * r0) + half * float(np.sum(_GL_WEIGHTS * s * self.phi(s)))

    def lipschitz_constant(self):
        """ L_tau = sup_r (2 phi + r phi'); bounds |a(z)| + |da(z)| |z| <= L |z| """
        if self.tau == 0:
            return math.inf
        r = np.linspace(0.0, self.r1, 20001)
        c = self.cap(r)
        phi = self.phi(r)
        return float(np.max(2 * phi + r * c * self.cap_derivative(r) * phi ** 3)) * (1 + 1e-9)


def regularized_flux(z, tau):
    return RegularizedOperator(tau).flux(np.asarray(z, dtype=float))


class EllipticityResult(NamedTuple):
    growth_ok: bool
    ellipticity_ok: bool
    L: float
    min_rayleigh: float


def ellipticity_check(z, tau, step=1e-6):
    """ Growth |a(z)| + |da(z)||z| <= L_tau |z| and ellipticity
    (da(z) l, l) >= |l|^2, with da from central finite differences """
    op = RegularizedOperator(tau)
    z = np.asarray(z, dtype=float)
    d = len(z)
    eps = step * max(1.0, float(np.linalg.norm(z)))
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        J[:, j] = (op.flux(z + e) - op.flux(z - e)) / (2 * eps)
    min_rayleigh = float(np.min(np.linalg.eigvalsh(0.5 * (J + J.T))))
    norm_z = float(np.linalg.norm(z))
    jac_norm = float(np.linalg.norm(J, 2))
    L = (float(np.linalg.norm(op.flux(z))) + jac_norm * norm_z) / norm_z if norm_z > 0 else jac_norm
    growth_ok = L <= op.lipschitz_constant() * (1 + 1e-6)
    return EllipticityResult(bool(growth_ok), bool(min_rayleigh >= 1 - 1e-6), L, min_rayleigh)


@lru_cache(maxsize=8)
def _corner_slices(n, d):
    """ For each of the 2^d cell corners, the slice of every edge
    difference array that corner reads """
    ret = []
    for corner in itertools.product((0, 1), repeat=d):
        ret.append(tuple(
            tuple(slice(None) if j == k else slice(corner[j], corner[j] + n - 1) for j in range(d))
            for k in range(d)))
    return tuple(ret)


def corner_gradients(u, h):
    """ List of 2^d arrays of shape (d, *cells) """
    d, n = u.ndim, u.shape[0]
    D = [np.diff(u, axis=k) / h for k in range(d)]
    return [np.stack([D[k][idx[k]] for k in range(d)]) for idx in _corner_slices(n, d)]


def _scatter(fluxes, n, d):
    """ Adjoint of corner_gradients up to the 1/h factor: corner fluxes
    -> nodal divergence """
    G = [np.zeros([n - 1 if j == k else n for j in range(d)]) for k in range(d)]
    for F, idx in zip(fluxes, _corner_slices(n, d)):
        for k in range(d):
            G[k][idx[k]] += F[k]
    out = np.zeros((n,) * d)
    for k in range(d):
        hi = [slice(None)] * d
        lo = [slice(None)] * d
        hi[k] = slice(1, None)
        lo[k] = slice(None, -1)
        out[tuple(hi)] += G[k]
        out[tuple(lo)] -= G[k]
    return out


def max_gradient(u, h):
    """ max over all cells and corners of |grad u| """
    return float(max(np.max(np.sqrt(np.sum(g * g, axis=0))) for g in corner_gradients(u, h)))


def cell_gradient(u, h):
    """ Cell-centered gradient, the mean of the corner gradients """
    g = corner_gradients(u, h)
    return sum(g) / len(g)


def discrete_energy(u, rho, grid: CartesianGrid, tau=0.0):
    """ Discrete I_rho (tau = 0) or its tau-regularized version """
    op = RegularizedOperator(tau)
    h, d = grid.h, grid.dim
    corners = corner_gradients(np.asarray(u, dtype=float), h)
    if tau == 0 and max(np.max(np.sum(g * g, axis=0)) for g in corners) > 1.0:
        raise InfeasibleError("|grad u| > 1 on some cell; the energy is undefined")
    cells = sum(np.sum(op.density(np.sqrt(np.sum(g * g, axis=0)))) for g in corners)
    return float(h ** d * (cells / len(corners) - np.sum(rho * u)))


class _DirichletPoisson:
    """ Exact inverse of the (2d+1)-point Dirichlet Laplacian on the
    interior nodes, scaled to match the quadratic part of the energy """

    def __init__(self, m, d, h):
        j = np.arange(1, m + 1)
        lam1 = 4.0 * np.sin(np.pi * j / (2 * (m + 1))) ** 2
        lam = np.zeros((m,) * d)
        for k in range(d):
            shape = [1] * d
            shape[k] = m
            lam = lam + lam1.reshape(shape)
        self.lam = lam
        self.shape = (m,) * d
        self.scale = h ** (d - 2)

    def solve(self, x):
        X = np.asarray(x).reshape(self.shape)
        return (idstn(dstn(X, type=1) / self.lam, type=1) / self.scale).ravel()


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 5000
    tau_start: float = 0.5
    tau_min: float = 1e-3
    tau_factor: float = 0.5
    cg_rtol: float = 1e-10
    cg_maxiter: int = 500
    feasibility_margin: float = 1e-12
    armijo: float = 1e-4
    verbose: bool = False
    # False stops at the last tau of the schedule
    polish: bool = True

    @staticmethod
    def from_config(cfg: DictConfig):
        return SolverOptions(**{k: cfg[k] for k in SolverOptions.__dataclass_fields__ if k in cfg})

    def tau_schedule(self):
        taus = []
        tau = self.tau_start
        while tau >= self.tau_min:
            taus.append(tau)
            tau *= self.tau_factor
        return taus


@dataclass
class GridSolution:
    """ Discrete minimizer plus derived fields and solver diagnostics.
    v and nu live on the cell-center grid. """

    grid: CartesianGrid
    u: ScalarField
    rho: ScalarField
    v: ScalarField
    nu: ScalarField
    energy: float
    residual: float
    iterations: int
    tau_final: float
    theta: float
    converged: bool
    message: str = ""
    # energies of the last stage's accepted steps, starting point first
    energy_history: List[float] = field(default_factory=list, repr=False)
    stage_histories: List[Tuple[float, List[float]]] = field(default_factory=list, repr=False)

    def diagnostics(self):
        return {"energy": self.energy, "residual": self.residual, "iterations": self.iterations,
                "tau_final": self.tau_final, "theta": self.theta, "converged": self.converged,
                "message": self.message}

    def to_h5(self, path):
        """ u, rho on the nodes and v, nu on the cell centers; grid and
        diagnostics as attributes """
        with h5py.File(path, "w") as f:
            for key in ("u", "rho", "v", "nu"):
                f.create_dataset(key, data=getattr(self, key).values)
            for key, val in {**self.grid.header(), **self.diagnostics()}.items():
                f.attrs[key] = val
            f.create_dataset("energy_history", data=np.asarray(self.energy_history))


class _EnergyModel:
    """ Energy, gradient and Hessian action for one operator """

    def __init__(self, rho, grid, op):
        self.rho = rho
        self.grid = grid
        self.op = op
        self.n = grid.num_nodes
        self.d = grid.dim
        self.h = grid.h
        self.inner = grid.interior()

    def energy(self, u):
        h, d = self.h, self.d
        corners = corner_gradients(u, h)
        cells = sum(np.sum(self.op.density(np.sqrt(np.sum(g * g, axis=0)))) for g in corners)
        return float(h ** d * (cells / len(corners) - np.sum(self.rho * u)))

    def linearize(self, u):
        """ Returns (energy, interior gradient, hessian matvec) at u """
        h, d, n = self.h, self.d, self.n
        corners = corner_gradients(u, h)
        radii = [np.sqrt(np.sum(g * g, axis=0)) for g in corners]
        phis = [self.op.phi(r) for r in radii]
        slopes = [self.op.slope(r) for r in radii]
        cells = sum(np.sum(self.op.density(r)) for r in radii)
        energy = float(h ** d * (cells / len(corners) - np.sum(self.rho * u)))

        scale = h ** (d - 1) / len(corners)
        grad = scale * _scatter([g * p for g, p in zip(corners, phis)], n, d) - h ** d * self.rho
        grad_in = grad[self.inner].ravel()

        def matvec(x):
            du = np.zeros((n,) * d)
            du[self.inner] = np.asarray(x).reshape((n - 2,) * d)
            dg = corner_gradients(du, h)
            fluxes = [p * dgi + s * np.sum(g * dgi, axis=0) * g
                      for g, dgi, p, s in zip(corners, dg, phis, slopes)]
            return (scale * _scatter(fluxes, n, d))[self.inner].ravel()

        return energy, grad_in, matvec


def _newton(u, model: _EnergyModel, opts: SolverOptions, budget, history):
    """ Damped Newton with feasibility-preserving backtracking. Returns
    (u, iterations used, last residual). """
    h, d = model.h, model.d
    m = model.n - 2
    precond = _DirichletPoisson(m, d, h)
    M = LinearOperator((m ** d, m ** d), matvec=precond.solve, dtype=float)
    limit = 1.0 - opts.feasibility_margin

    its = 0
    residual = math.inf
    while its < budget:
        energy, grad, matvec = model.linearize(u)
        residual = float(np.max(np.abs(grad))) / h ** d if grad.size else 0.0
        if opts.verbose:
            logger.debug("tau=%g it=%d energy=%.15g residual=%.3e", model.op.tau, its, energy, residual)
        if residual <= opts.tol:
            break

        A = LinearOperator((m ** d, m ** d), matvec=matvec, dtype=float)
        step, info = cg(A, -grad, rtol=opts.cg_rtol, maxiter=opts.cg_maxiter, M=M)
        if info != 0:
            logger.debug("cg stopped early (info=%d) at tau=%g", info, model.op.tau)
        slope = float(grad @ step)
        if slope >= 0:
            step = -precond.solve(grad)
            slope = float(grad @ step)

        full = np.zeros_like(u)
        full[model.inner] = step.reshape((m,) * d)
        alpha = 1.0
        accepted = False
        while alpha > 1e-14:
            trial = u + alpha * full
            if max_gradient(trial, h) <= limit:
                trial_energy = model.energy(trial)
                if trial_energy <= energy + opts.armijo * alpha * slope:
                    accepted = True
                    break
            alpha *= 0.5
        its += 1
        if not accepted:
            logger.debug("line search stalled at tau=%g, residual %.3e", model.op.tau, residual)
            break
        u = trial
        history.append(trial_energy)
    return u, its, residual


def minimize_energy(rho: ScalarField, grid: CartesianGrid = None, opts: Optional[SolverOptions] = None,
                    boundary: Optional[ScalarField] = None):
    """ Discrete minimizer of I_rho, zero on the box boundary unless
    `boundary` is given: its outer node values are then kept fixed and
    its interior values are the starting guess. Never raises on
    non-convergence; the returned solution says so instead. """
    if grid is None:
        grid = rho.grid
    if opts is None:
        opts = SolverOptions.from_config(CONFIG.solver)
    rho_values = np.asarray(rho.values, dtype=float)
    if not np.all(np.isfinite(rho_values)):
        raise ValueError("rho must be finite on the grid")

    h = grid.h
    u = np.zeros(grid.shape)
    if boundary is not None:
        u = np.array(boundary.values, dtype=float)
        if u.shape != grid.shape:
            raise ValueError(f"boundary data has shape {u.shape}, grid has {grid.shape}")
        if max_gradient(u, h) > 1.0 - opts.feasibility_margin:
            raise InfeasibleError("boundary data is not a feasible starting point")
    stages = []
    iterations = 0
    tau_final = 0.0
    residual = math.inf

    def run(tau, budget):
        model = _EnergyModel(rho_values, grid, RegularizedOperator(tau))
        history = [model.energy(u)]
        stages.append((tau, history))
        ret = _newton(u, model, opts, budget, history)
        return (model, *ret)

    for tau in opts.tau_schedule():
        model, u, its, residual = run(tau, opts.max_iter - iterations)
        iterations += its
        tau_final = tau
        theta = max_gradient(u, h)
        logger.info("tau=%g: %d Newton steps, residual %.3e, max|grad u| = %.6f", tau, its, residual, theta)
        if theta < 1.0 - tau or iterations >= opts.max_iter:
            break

    if opts.polish or not stages:
        # on the true energy
        model, u, its, residual = run(0.0, max(opts.max_iter - iterations, 1))
        iterations += its

    theta = max_gradient(u, h)
    converged = residual <= opts.tol
    message = "converged" if converged else f"residual {residual:.3e} above tol {opts.tol:.1e} after {iterations} steps"
    if not converged:
        logger.warning("minimize_energy did not converge: %s", message)

    g = cell_gradient(u, h)
    v = np.sqrt(np.clip(1.0 - np.sum(g * g, axis=0), 0.0, None))
    with np.errstate(divide="ignore"):
        nu = np.where(v > 0, 1.0 / np.where(v > 0, v, 1.0), np.inf)
    dual = CartesianGrid(grid.half_width - 0.5 * h, grid.num_nodes - 1, grid.dim)

    return GridSolution(grid=grid, u=ScalarField(grid, u), rho=ScalarField(grid, rho_values),
                        v=ScalarField(dual, v), nu=ScalarField(dual, nu),
                        energy=model.energy(u), residual=residual, iterations=iterations,
                        tau_final=tau_final, theta=theta, converged=converged, message=message,
                        energy_history=stages[-1][1], stage_histories=stages)


class WeakResidual(NamedTuple):
    value: float
    excluded: int


def weak_residual(sol, rho: Optional[ScalarField] = None):
    """ max over interior hat functions psi_i of
    |int grad u . grad psi_i / v - int rho psi_i| / |psi_i|_{L^1},
    i.e. the nodal residual of -div_h a(grad u) - rho. Cells with v = 0
    are dropped and the nodes touching them are excluded and counted. """
    u = sol.u if rho is None else sol
    rho = sol.rho if rho is None else rho
    grid = u.grid
    h, d, n = grid.h, grid.dim, grid.num_nodes
    corners = corner_gradients(u.values, h)
    radii = [np.sqrt(np.sum(g * g, axis=0)) for g in corners]
    if max(np.max(r) for r in radii) > 1.0 + 1e-12:
        raise InfeasibleError("weak residual needs a feasible field (|grad u| <= 1)")

    degenerate = np.zeros((n - 1,) * d, dtype=bool)
    fluxes = []
    for g, r in zip(corners, radii):
        dead = r >= 1.0
        degenerate |= dead
        safe = np.where(dead, 0.0, r)
        fluxes.append(np.where(dead, 0.0, g / np.sqrt(1.0 - safe * safe)))

    div = _scatter(fluxes, n, d) / (h * len(corners))
    res = np.abs(div - rho.values)

    excluded = np.zeros((n,) * d, dtype=bool)
    if np.any(degenerate):
        for corner in itertools.product((0, 1), repeat=d):
            idx = tuple(slice(c, c + n - 1) for c in corner)
            excluded[idx] |= degenerate
    inner = grid.interior()
    keep = ~excluded[inner]
    value = float(np.max(res[inner][keep])) if np.any(keep) else 0.0
    return WeakResidual(value, int(np.sum(excluded[inner])))


def interpolate_radial(sol: RadialSolution, grid: CartesianGrid):
    """ Sample an oracle solution onto a Cartesian grid, keeping the
    oracle's own values on the boundary """
    spline = CubicSpline(sol.r, sol.u)
    r = np.clip(grid.radius(), sol.r[0], sol.r[-1])
    return ScalarField(grid, spline(r))


class OracleGap(NamedTuple):
    grad_err: float
    energy_err: float
    whole_space_energy_err: float


def compare_with_oracle(grid_sol: GridSolution, oracle: RadialSolution):
    """ grad_err is the max over cells of ||grad u_h| - |u'(|x_c|)||.
    energy_err is the relative gap to the discrete energy of the oracle
    interpolated onto the same grid, which is the minimum's own reference
    when the solve used the oracle trace as boundary data (see
    solve_against_oracle). whole_space_energy_err compares with the
    oracle's energy on all of R^N and carries the box truncation. """
    grid = grid_sol.grid
    g = cell_gradient(grid_sol.u.values, grid.h)
    dual = grid_sol.v.grid
    rc = np.clip(dual.radius(), oracle.r[0], oracle.r[-1])
    exact = np.abs(np.interp(rc, oracle.r, oracle.uprime))
    grad_err = float(np.max(np.abs(np.sqrt(np.sum(g * g, axis=0)) - exact)))
    try:
        ref = discrete_energy(interpolate_radial(oracle, grid).values, grid_sol.rho.values, grid)
    except InfeasibleError:
        # the sampled oracle is not spacelike on this grid
        ref = math.nan
    whole = radial_energy(oracle)
    return OracleGap(grad_err=grad_err,
                     energy_err=abs(grid_sol.energy - ref) / max(abs(ref), 1e-300),
                     whole_space_energy_err=abs(grid_sol.energy - whole) / max(abs(whole), 1e-300))


def solve_against_oracle(rho: RadialDensity, oracle: RadialSolution, grid: CartesianGrid,
                         opts: Optional[SolverOptions] = None):
    """ Grid solve of a radial datum with the oracle's values on the box
    boundary, so both sides solve the same Dirichlet problem """
    sol = minimize_energy(rho.sample(grid), grid, opts, boundary=interpolate_radial(oracle, grid))
    return sol, compare_with_oracle(sol, oracle)
