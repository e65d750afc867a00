""" Geometry of the spacelike graph M = graph(u) in Lorentz-Minkowski
space: Gauss map, second fundamental form, mean curvature, the
Laplace-Beltrami operator, Lorentz distance and Lorentz balls, plus the
radial machinery behind the coarea and monotonicity checks. """

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.optimize import brentq

from born_infeld.errors import InfeasibleError
from born_infeld.fields import CartesianGrid, RadialField, ScalarField, sigma
from born_infeld.radial import RadialSolution

logger = logging.getLogger(__name__)


def minkowski_inner(X, Y):
    """ (X, Y) = sum_{i<=N} X_i Y_i - X_{N+1} Y_{N+1}, over the last axis """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return np.sum(X[..., :-1] * Y[..., :-1], axis=-1) - X[..., -1] * Y[..., -1]


@dataclass
class Jet2:
    """ Pointwise jet of u: gradient (..., N), Hessian (..., N, N) and
    optionally third derivatives (..., N, N, N). Leading axes batch. """

    grad: np.ndarray
    hess: np.ndarray
    rho: Optional[np.ndarray] = None
    third: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.grad = np.asarray(self.grad, dtype=float)
        self.hess = np.asarray(self.hess, dtype=float)
        if np.any(np.sum(self.grad ** 2, axis=-1) >= 1.0):
            raise InfeasibleError("jet gradient must satisfy |grad u| < 1")
        if not np.allclose(self.hess, np.swapaxes(self.hess, -1, -2), rtol=0, atol=1e-12):
            raise ValueError("jet Hessian must be symmetric")
        if self.third is not None:
            self.third = np.asarray(self.third, dtype=float)
        if self.rho is None:
            self.rho = mean_curvature(self)
        else:
            self.rho = np.asarray(self.rho, dtype=float)

    @property
    def N(self):
        return self.grad.shape[-1]

    @property
    def v(self):
        return np.sqrt(1.0 - np.sum(self.grad ** 2, axis=-1))

    @property
    def nu(self):
        """ Spatial Gauss map components nu_i = u_i / v """
        return self.grad / self.v[..., None]

    @property
    def nu_vec(self):
        """ Future-directed unit normal (grad u, 1)/v in L^{N+1} """
        return np.concatenate([self.grad, np.ones(self.grad.shape[:-1] + (1,))], axis=-1) / self.v[..., None]

    def inverse_metric(self):
        """ g^{ij} = delta_ij + nu_i nu_j """
        nu = self.nu
        return np.eye(self.N) + nu[..., :, None] * nu[..., None, :]

    def grad_v(self):
        """ grad v = -D^2u grad u / v """
        return -np.einsum("...ij,...j->...i", self.hess, self.grad) / self.v[..., None]


def gauss_map_norm(jet: Jet2):
    return minkowski_inner(jet.nu_vec, jet.nu_vec)


def second_form_sq(jet: Jet2):
    """ ||II||^2 by full index contraction g^{ij}g^{kl}u_ik u_jl / v^2 and
    by the decomposition (|D^2u|^2 + 2|grad v|^2 + v^{-2}(grad u . grad v)^2)/v^2 """
    G = jet.inverse_metric()
    H = jet.hess
    v2 = jet.v ** 2
    direct = np.einsum("...ij,...kl,...ik,...jl->...", G, G, H, H) / v2
    gv = jet.grad_v()
    decomposed = (np.sum(H * H, axis=(-1, -2)) + 2 * np.sum(gv * gv, axis=-1)
                  + np.sum(jet.grad * gv, axis=-1) ** 2 / v2) / v2
    return direct, decomposed


def mean_curvature(jet: Jet2):
    """ H = -(1/v) sum g^{ij} u_ij, not divided by N """
    return -np.einsum("...ij,...ij->...", jet.inverse_metric(), jet.hess) / jet.v


def laplace_beltrami(jet: Jet2, grad_f, hess_f):
    """ Delta_M f = sum g^{ij} f_ij - H sum nu_i f_i for f independent of x_{N+1} """
    grad_f = np.asarray(grad_f, dtype=float)
    hess_f = np.asarray(hess_f, dtype=float)
    G = jet.inverse_metric()
    H = mean_curvature(jet)
    return np.einsum("...ij,...ij->...", G, hess_f) - H * np.sum(jet.nu * grad_f, axis=-1)


def laplace_beltrami_fd(u, f, h):
    """ Brute-force metric Laplacian (1/sqrt|g|) d_i(sqrt|g| g^{ij} d_j f)
    on a uniform grid, with the induced metric g_ij = delta_ij - u_i u_j
    built from finite differences of u """
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)
    d = u.ndim
    du = np.gradient(u, h) if d > 1 else [np.gradient(u, h)]
    df = np.gradient(f, h) if d > 1 else [np.gradient(f, h)]
    du = np.stack(du)
    df = np.stack(df)
    metric = np.eye(d)[(...,) + (None,) * d] - du[:, None] * du[None, :]
    metric = np.moveaxis(metric, (0, 1), (-2, -1))
    inv = np.linalg.inv(metric)
    sqrt_det = np.sqrt(np.linalg.det(metric))
    flux = sqrt_det[..., None] * np.einsum("...ij,...j->...i", inv, np.moveaxis(df, 0, -1))
    div = sum(np.gradient(flux[..., i], h, axis=i) for i in range(d))
    return div / sqrt_det


def mean_curvature_gradient(jet: Jet2):
    """ grad H from the third derivatives of u """
    if jet.third is None:
        raise ValueError("mean curvature gradient needs third derivatives")
    p, H, T = jet.grad, jet.hess, jet.third
    v = jet.v
    a = np.einsum("...ij,...j->...i", H, p)
    A = np.einsum("...ii->...", H) + np.einsum("...i,...i->...", p, a) / v ** 2
    tr_T = np.einsum("...iik->...k", T)
    pTp = np.einsum("...i,...j,...ijk->...k", p, p, T)
    Ha = np.einsum("...ki,...i->...k", H, a)
    dA = (tr_T + (2 * Ha + pTp) / v[..., None] ** 2
          + 2 * np.einsum("...i,...i->...", p, a)[..., None] * a / v[..., None] ** 4)
    return -dA / v[..., None] - A[..., None] * a / v[..., None] ** 3


def _v_derivatives(jet: Jet2):
    """ (grad v, D^2 v) by the chain rule from the 3-jet """
    if jet.third is None:
        raise ValueError("D^2 v needs third derivatives")
    p, H, T = jet.grad, jet.hess, jet.third
    v = jet.v[..., None]
    a = np.einsum("...ij,...j->...i", H, p)
    dv = -a / v
    HH = np.einsum("...ik,...kl->...il", H, H)
    Tp = np.einsum("...ikl,...i->...kl", T, p)
    d2v = -(HH + Tp) / v[..., None] - a[..., :, None] * a[..., None, :] / v[..., None] ** 3
    return dv, d2v


def laplace_v_gamma(jet: Jet2, gamma):
    """ Delta_M v^gamma evaluated directly from the 3-jet """
    v = jet.v
    dv, d2v = _v_derivatives(jet)
    grad_f = gamma * v[..., None] ** (gamma - 1) * dv
    hess_f = (gamma * v[..., None, None] ** (gamma - 1) * d2v
              + gamma * (gamma - 1) * v[..., None, None] ** (gamma - 2) * dv[..., :, None] * dv[..., None, :])
    return laplace_beltrami(jet, grad_f, hess_f)


def vertical_derivative(jet: Jet2, grad_g):
    """ delta_{N+1} g = (1/v) sum nu_i g_i """
    return np.sum(jet.nu * grad_g, axis=-1) / jet.v


def v_gamma_expansion(jet: Jet2, gamma):
    """ Split Delta_M v^gamma into its algebraic bracket and the
    delta_{N+1}(v^{gamma+1} rho) term, with rho = H.

    Returns (bracket_term, vertical_term) where
    bracket_term = -gamma v^{gamma-2} [S - gamma T^2 + (1-gamma) v rho T + v^2 rho^2 + (1-gamma) Q],
    S = |D^2u|^2, T = tr D^2u, Q = |D^2u nu|^2. """
    v = jet.v
    H = jet.hess
    rho = mean_curvature(jet)
    S = np.sum(H * H, axis=(-1, -2))
    T = np.einsum("...ii->...", H)
    Hnu = np.einsum("...ij,...i->...j", H, jet.nu)
    Q = np.sum(Hnu * Hnu, axis=-1)
    bracket = S - gamma * T ** 2 + (1 - gamma) * v * rho * T + v ** 2 * rho ** 2 + (1 - gamma) * Q
    bracket_term = -gamma * v ** (gamma - 2) * bracket

    dv, _ = _v_derivatives(jet)
    drho = mean_curvature_gradient(jet)
    grad_g = (gamma + 1) * v[..., None] ** gamma * dv * rho[..., None] + v[..., None] ** (gamma + 1) * drho
    vertical_term = gamma * vertical_derivative(jet, grad_g)
    return bracket_term, vertical_term


def random_jets(n, N, rng: np.random.Generator, max_grad=0.99, third=False, hess_scale=1.0):
    """ n random jets with |grad| <= max_grad, uniform in the ball of that
    radius, and Gaussian symmetric derivatives. rho is the jet's own
    mean curvature. """
    direction = rng.normal(size=(n, N))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    radius = max_grad * rng.uniform(size=(n, 1)) ** (1.0 / N)
    grad = direction * radius
    A = rng.normal(scale=hess_scale, size=(n, N, N))
    hess = 0.5 * (A + np.swapaxes(A, -1, -2))
    T = None
    if third:
        B = rng.normal(scale=hess_scale, size=(n, N, N, N))
        T = (B + B.transpose(0, 1, 3, 2) + B.transpose(0, 2, 1, 3)
             + B.transpose(0, 2, 3, 1) + B.transpose(0, 3, 1, 2) + B.transpose(0, 3, 2, 1)) / 6
    return Jet2(grad=grad, hess=hess, third=T)


def delta_l_norm_sq(jet: Jet2, dx, du):
    """ ||delta l||^2 = 1 + l^{-2} (nu, X - X0)^2 with X - X0 = (dx, du) """
    dx = np.asarray(dx, dtype=float)
    du = np.asarray(du, dtype=float)
    l2 = np.sum(dx * dx, axis=-1) - du ** 2
    X = np.concatenate([dx, np.asarray(du)[..., None]], axis=-1)
    pairing = minkowski_inner(jet.nu_vec, X)
    return 1.0 + pairing ** 2 / l2


@dataclass
class LorentzBallData:
    """ K_R(x0) = {l < R}. enclosing_radius is sqrt(R^2 + 4|u|_inf^2). """

    center: np.ndarray
    radius: float
    mask: np.ndarray = field(repr=False)
    l: Union[ScalarField, RadialField] = field(repr=False)
    bounded: bool
    enclosing_radius: float
    inclusion_ok: bool


def lorentz_ball(u: Union[ScalarField, RadialSolution], x0, R):
    """ Projected Lorentz ball on a Cartesian grid or, for a radial
    solution, on its radial nodes (center at the origin only) """
    if isinstance(u, RadialSolution):
        if np.any(np.asarray(x0, dtype=float) != 0):
            raise ValueError("radial Lorentz balls are centered at the origin")
        graph = RadialGraph(u)
        l = graph.l(u.r)
        mask = l < R
        sup_u = float(np.max(np.abs(u.u)))
        enclosing = float(np.sqrt(R ** 2 + 4 * sup_u ** 2))
        inclusion_ok = bool(np.all(u.r[mask] <= enclosing * (1 + 1e-12)))
        return LorentzBallData(center=np.zeros(u.N), radius=R, mask=mask,
                               l=RadialField(u.grid, l), bounded=not bool(mask[-1]),
                               enclosing_radius=enclosing, inclusion_ok=inclusion_ok)

    grid = u.grid
    x0 = np.asarray(x0, dtype=float)
    interp = RegularGridInterpolator([grid.axis] * grid.dim, u.values)
    u0 = float(interp(x0[None])[0])
    dist = grid.radius(x0)
    l = np.sqrt(np.clip(dist ** 2 - (u.values - u0) ** 2, 0.0, None))
    mask = l < R
    sup_u = float(np.max(np.abs(u.values)))
    enclosing = float(np.sqrt(R ** 2 + 4 * sup_u ** 2))
    inclusion_ok = bool(np.all(dist[mask] <= enclosing * (1 + 1e-12)))
    if not inclusion_ok:
        logger.error("Lorentz ball K_%g(%s) leaves B_%g", R, x0, enclosing)
    bounded = not bool(np.any(mask & grid.boundary_mask()))
    return LorentzBallData(center=x0, radius=R, mask=mask, l=ScalarField(grid, l), bounded=bounded,
                           enclosing_radius=enclosing, inclusion_ok=inclusion_ok)


class RadialGraph:
    """ Spline view of a radial solution centered at the origin:
    U = u - u(0), l = sqrt(r^2 - U^2), (X, nu) = (r u' - U)/v and the
    radial Delta_M. Integrals over K_s use spline antiderivatives in r so
    they are smooth in s. """

    def __init__(self, sol: RadialSolution):
        if np.any(sol.degenerate):
            raise InfeasibleError("radial graph needs a strictly spacelike solution")
        self.sol = sol
        self.N = sol.N
        self.r = sol.r
        u0 = sol.u[0] - sol.r[0] * sol.uprime[0]
        self.U = sol.u - u0
        self._u = CubicSpline(self.r, self.U)
        self.uprime = sol.uprime
        self.uprime2 = sol.uprime2
        self.v = sol.v
        self.l_values = np.sqrt(np.clip(self.r ** 2 - self.U ** 2, 0.0, None))
        self._l = CubicSpline(self.r, self.l_values)
        self.Xnu = (self.r * self.uprime - self.U) / self.v

        increasing = np.diff(self.l_values) > 0
        if np.all(increasing):
            self.l_max = float(self.l_values[-1])
        else:
            stop = int(np.argmin(increasing))
            self.l_max = float(self.l_values[stop])
            logger.warning("l(r) stops increasing at r = %.4g; s is restricted to (0, %.4g)",
                           self.r[stop], self.l_max)

    def l(self, r):
        return self._l(r)

    def radius_at(self, s):
        """ r_s with l(r_s) = s """
        if not 0 < s < self.l_max:
            raise ValueError(f"s = {s} is outside the monotone range (0, {self.l_max:.6g})")
        i = int(np.searchsorted(self.l_values, s))
        lo = self.r[i - 1] if i > 0 else 0.0
        hi = self.r[min(i + 1, len(self.r) - 1)]
        return brentq(lambda r: self._l(r) - s, lo, hi, xtol=1e-15, rtol=1e-14)

    def delta_l_norm(self):
        """ ||delta l|| = |r - u' U| / (v l) on the nodes """
        return np.abs(self.r - self.uprime * self.U) / (self.v * self.l_values)

    def integral(self, values, area=True):
        """ s -> int_{K_s} f dA (dA = v dx) or int_{K_s} f dx, as a callable """
        weight = sigma(self.N) * self.r ** (self.N - 1)
        if area:
            weight = weight * self.v
        G = CubicSpline(self.r, values * weight).antiderivative()
        g0 = G(self.r[0])

        def ret(s):
            return float(G(self.radius_at(s)) - g0)
        return ret

    def laplace_beltrami(self, values):
        """ Delta_M f = f''/v^2 + (N-1) f'/r - rho u' f'/v for radial f """
        spline = CubicSpline(self.r, values)
        f1 = spline(self.r, 1)
        f2 = spline(self.r, 2)
        rho = self.sol.rho(self.r)
        return f2 / self.v ** 2 + (self.N - 1) * f1 / self.r - rho * self.uprime * f1 / self.v


def _relative(lhs, rhs, scale):
    diff = abs(lhs - rhs)
    return diff / scale if scale > 0 else diff


def coarea_check(sol: RadialSolution, h_values, s_values, ds_rel=1e-3):
    """ max over s of the relative gap in
    D_s int_{L_s} h dA = int_{partial L_s} h ||delta l||^{-1} dmu """
    graph = RadialGraph(sol)
    h_values = np.asarray(h_values, dtype=float)
    if h_values.ndim == 0:
        h_values = np.full_like(graph.r, float(h_values))
    F = graph.integral(h_values)
    h_spline = CubicSpline(graph.r, h_values)
    norm_spline = CubicSpline(graph.r, graph.delta_l_norm())
    N = graph.N

    worst = 0.0
    for s in np.atleast_1d(s_values):
        if s + s * ds_rel >= graph.l_max:
            logger.warning("coarea check skips s = %g beyond the monotone range", s)
            continue
        ds = s * ds_rel
        lhs = (F(s + ds) - F(s - ds)) / (2 * ds)
        rs = graph.radius_at(s)
        rhs = sigma(N) * rs ** (N - 1) * float(h_spline(rs)) / float(norm_spline(rs))
        worst = max(worst, _relative(lhs, rhs, max(abs(lhs), abs(rhs))))
    return worst


def monotonicity_terms(sol: RadialSolution, gamma, s, ds_rel=1e-3):
    """ (lhs, rhs, scale) of
    D_s[s^{-N} int_{L_s} f dA] = int_{L_s} s^{-N-1}((s^2 - l^2)/2 Delta_M f - f rho (X, nu)) dA
                                 - D_s[int_{L_s} f l^{-N-2} (X, nu)^2 dA]
    for f = v^gamma """
    graph = RadialGraph(sol)
    N = graph.N
    if not 0 < s * (1 + ds_rel) < graph.l_max:
        raise ValueError(f"s = {s} is outside the monotone range of l")
    f = graph.v ** gamma
    lap = graph.laplace_beltrami(f)
    rho = sol.rho(graph.r)
    l = graph.l_values

    mass = graph.integral(f)
    lap_mass = graph.integral(lap)
    lap_l2 = graph.integral(lap * l ** 2)
    source = graph.integral(f * rho * graph.Xnu)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail_values = np.where(l > 0, f * l ** (-N - 2) * graph.Xnu ** 2, 0.0)
    tail = graph.integral(tail_values)

    ds = s * ds_rel
    lhs = ((s + ds) ** -N * mass(s + ds) - (s - ds) ** -N * mass(s - ds)) / (2 * ds)
    first = 0.5 * s ** (1 - N) * lap_mass(s) - 0.5 * s ** (-N - 1) * lap_l2(s)
    second = s ** (-N - 1) * source(s)
    third = (tail(s + ds) - tail(s - ds)) / (2 * ds)
    rhs = first - second - third
    scale = max(abs(lhs), abs(first), abs(second), abs(third), s ** (-N - 1) * abs(mass(s)))
    return lhs, rhs, scale


def monotonicity_residual(sol: RadialSolution, gamma, s):
    lhs, rhs, scale = monotonicity_terms(sol, gamma, s)
    return _relative(lhs, rhs, scale)
