""" Evaluators for the gradient estimates: the Gronwall variant, the
pointwise monotonicity inequality on jets, the sharp local estimate at a
point, the global and local gradient certificates, the Moser-type sup
bound for nu and its L^q excess, the proof constants of the regularity
steps and the truncated Riesz potential.

Every inequality evaluated against a solution returns an
EstimateReport with lhs >= rhs as the claim. """

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp, trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.special import betainc

from config import CONFIG
from born_infeld.constants import DerivedConstants, P_poly, excess_constant
from born_infeld.densities import RadialDensity
from born_infeld.errors import ConfigError, DivergenceError, EstimateRejected, UnboundedBallError
from born_infeld.fields import ParamSet, RadialField, lq_norm, omega, sigma
from born_infeld.geometry import Jet2, RadialGraph, laplace_v_gamma, lorentz_ball, v_gamma_expansion
from born_infeld.radial import RadialSolution
from born_infeld.reports import EstimateReport

logger = logging.getLogger(__name__)


def _tol(tol):
    if tol is not None:
        return tol
    return float(CONFIG.get("estimates", {}).get("tol_slack", 1e-6))


@dataclass(frozen=True)
class GronwallParams:
    C0: float
    C1: float
    C2: float
    q: float
    beta: float
    T: float

    def __post_init__(self):
        if not self.C0 > 0:
            raise ConfigError(f"C0 must be positive, got {self.C0}", key="gronwall.C0")
        if self.C1 < 0 or self.C2 < 0:
            raise ConfigError("C1 and C2 must be nonnegative", key="gronwall")
        if not self.q > 2:
            raise ConfigError(f"q must exceed 2, got {self.q}", key="gronwall.q")
        if not 0 < self.beta < 2:
            raise ConfigError(f"beta must lie in (0, 2), got {self.beta}", key="gronwall.beta")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}", key="gronwall.T")


def gronwall_bound(p: GronwallParams, t):
    """ (C0^{1/q} + C0^{-1/q} C1 t^{2-b}/(q(2-b)) + C2 t^{1-b/2}/(q(1-b/2)))^q """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > p.T * (1 + 1e-12)):
        raise ValueError(f"t must lie in [0, T={p.T}]")
    q, b = p.q, p.beta
    ret = (p.C0 ** (1 / q) + p.C0 ** (-1 / q) * p.C1 * t ** (2 - b) / (q * (2 - b))
           + p.C2 * t ** (1 - b / 2) / (q * (1 - b / 2))) ** q
    return float(ret) if ret.ndim == 0 else ret


def gronwall_saturate(p: GronwallParams):
    """ Solution psi = C0 + y of
        y' = C1 t^{1-b} (C0+y)^{(q-2)/q} + C2 t^{-b/2} (C0+y)^{(q-1)/q},  y(0) = 0.

    With z = psi^{1/q} the C2 part integrates exactly and the rest
    z = C0^{1/q} + C2 t^{1-b/2}/(q(1-b/2)) + zeta obeys
    d zeta/ds = C1 / (q (2-b) z) in s = t^{2-b}, which is regular at 0. """
    q, b = p.q, p.beta
    z0 = p.C0 ** (1 / q)
    a2 = p.C2 / (q * (1 - b / 2))
    S = p.T ** (2 - b)

    zeta = None
    if p.C1 > 0:
        def rhs(s, y):
            z = z0 + a2 * math.sqrt(max(s, 0.0)) + y[0]
            return [p.C1 / (q * (2 - b) * z)]

        res = solve_ivp(rhs, (0.0, S), [0.0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
        if not res.success:
            raise RuntimeError(f"Gronwall saturation failed: {res.message}")
        zeta = res.sol

    def psi(t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > p.T * (1 + 1e-12)):
            raise ValueError(f"t must lie in [0, T={p.T}]")
        s = np.minimum(t ** (2 - b), S)
        z = z0 + a2 * np.sqrt(s)
        if zeta is not None:
            z = z + zeta(s.ravel()).reshape(s.shape)
        ret = z ** q
        return float(ret) if ret.ndim == 0 else ret

    return psi


def jet_inequality_check(jet: Jet2, gamma, C_mono):
    """ Slack of the pointwise bound

        Delta_M v^g <= -C v^{g-2} (|D^2u|^2 + |D^2u nu|^2) + v^g rho^2 / 4 + g delta_{N+1}(v^{g+1} rho)

    after cancelling the delta_{N+1} term and multiplying by v^{2-g}:
    g B - C (S + Q) + v^2 rho^2 / 4, with B the bracket of the expansion. """
    v = jet.v
    H = jet.hess
    rho = jet.rho
    S = np.sum(H * H, axis=(-1, -2))
    T = np.einsum("...ii->...", H)
    Hnu = np.einsum("...ij,...i->...j", H, jet.nu)
    Q = np.sum(Hnu * Hnu, axis=-1)
    bracket = S - gamma * T ** 2 + (1 - gamma) * v * rho * T + v ** 2 * rho ** 2 + (1 - gamma) * Q
    return gamma * bracket - C_mono * (S + Q) + 0.25 * v ** 2 * rho ** 2


def expansion_residual(jet: Jet2, gamma):
    """ Relative gap between Delta_M v^g computed from the 3-jet and its
    bracket + vertical expansion """
    direct = laplace_v_gamma(jet, gamma)
    bracket_term, vertical_term = v_gamma_expansion(jet, gamma)
    scale = np.maximum.reduce([np.abs(direct), np.abs(bracket_term), np.abs(vertical_term),
                               np.full_like(direct, 1e-300)])
    return np.abs(direct - bracket_term - vertical_term) / scale


@dataclass(frozen=True)
class DatumNorms:
    """ |rho|_q, |rho|_m (|rho|_1 when m = 1) and, when known, the
    X-norm |grad u|_2 of the solution """

    rho_q: float
    rho_m: float
    x_norm: Optional[float] = None

    @staticmethod
    def from_density(rho: RadialDensity, params: ParamSet):
        return DatumNorms(rho_q=rho.lq_norm(params.q, params.N), rho_m=rho.lq_norm(params.m, params.N))

    @staticmethod
    def from_radial(sol: RadialSolution):
        r = sol.r
        x_norm = math.sqrt(sigma(sol.N) * trapezoid(sol.uprime ** 2 * r ** (sol.N - 1), r))
        base = DatumNorms.from_density(sol.rho, sol.params)
        return DatumNorms(base.rho_q, base.rho_m, x_norm)

    @staticmethod
    def from_field(rho, params: ParamSet, x_norm=None):
        return DatumNorms(rho_q=lq_norm(rho, p=params.q), rho_m=lq_norm(rho, p=params.m), x_norm=x_norm)

    def asdict(self):
        return {"rho_q": self.rho_q, "rho_m": self.rho_m, "x_norm": self.x_norm}


def _energy_excess(norms: DatumNorms, params: ParamSet, consts: DerivedConstants, worst=False):
    """ c Z with int_{B_R} 1/v <= omega R^N + c Z. For m = 1 the branch
    follows |grad u|_2 when known, otherwise (or with worst) the larger one. """
    terms = [c * Z for c, Z in consts.energy_terms(params, norms.rho_m)]
    if len(terms) == 1:
        return terms[0]
    if worst or norms.x_norm is None:
        return max(terms)
    return terms[0] if norms.x_norm <= 1 else terms[1]


def local_gradient_bound(R, rho_q_local, norms: DatumNorms, params: ParamSet, consts: DerivedConstants):
    """ Lower bound for v^g(x0) from the Lorentz ball of radius R:
    (omega/(omega + c R^{-N} Z))^{g+1} - P(|rho|_{q,K_R} R^{(q-N)/q}) """
    N, q, g = params.N, params.q, consts.gamma
    w = omega(N)
    E = _energy_excess(norms, params, consts)
    return (w / (w + E * R ** -N)) ** (g + 1) - P_poly(rho_q_local * R ** ((q - N) / q), q, N)


def global_gradient_bound(norms: DatumNorms, params: ParamSet, consts: DerivedConstants):
    """ sup over k > 0 of
        (omega/(omega + c Z |rho|_q^{Nq/(q-N)} k^{-Nq/(q-N)}))^{g+1} - P(k),
    a lower bound for inf (1 - |grad u|^2)^{g/2}. """
    N, q, g = params.N, params.q, consts.gamma
    w = omega(N)
    A = _energy_excess(norms, params, consts) * norms.rho_q ** (N * q / (q - N))
    if not A > 0:
        return 1.0
    p = N * q / (q - N)
    log_a = math.log(A / w)

    def bound(x):
        first = np.exp(-(g + 1) * np.logaddexp(0.0, log_a - p * x))
        with np.errstate(over="ignore", invalid="ignore"):
            ret = first - P_poly(np.exp(x), q, N)
        return np.where(np.isfinite(ret), ret, -np.inf)

    x0 = log_a / p
    xs = np.linspace(min(x0, -20.0) - 5.0, max(x0, 0.0) + 10.0, 4001)
    values = bound(xs)
    i = int(np.argmax(values))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(lambda x: -float(bound(x)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(max(values[i], -res.fun))


def step1_sup_bound(norms: DatumNorms, params: ParamSet, consts: DerivedConstants):
    """ Uniform |u|_inf bound through the energy and the Morrey chain """
    N, m, s = params.N, params.m, params.s
    if m > 1:
        X = (2 * consts.c_sobolev_m * norms.rho_m) ** (m * N / (2 * (N - m)))
        return consts.morrey * (consts.c2_morrey * X ** (2 * (N + s) / (N * s)) + X ** (2 / s))
    r1 = norms.rho_m
    return max(consts.c4 * r1 ** (1 / (s - 1)), consts.c7 * r1 ** ((N + s) / (N * s - N - s)))


def exterior_gradient_bound(R_bar, norms: DatumNorms, params: ParamSet, consts: DerivedConstants):
    """ delta with |grad u| <= delta wherever K_{R_bar} misses supp rho """
    N, g = params.N, consts.gamma
    w = omega(N)
    worst = min((w / (w + c * Z * R_bar ** -N)) ** (2 * (g + 1) / g)
                for c, Z in consts.energy_terms(params, norms.rho_m))
    return math.sqrt(max(1.0 - worst, 0.0))


def collar_radius(R_bar, sup_bound):
    """ K_{R_bar}(x0) lies in B_{R'}(x0), R' = sqrt(R_bar^2 + 4 C^2) """
    return math.sqrt(R_bar ** 2 + 4 * sup_bound ** 2)


class Step3Bound(NamedTuple):
    nu0: float
    c9: float
    mean_bound: float
    nu_bar: float
    theta: float


def step3_nu_bound(norms: DatumNorms, params: ParamSet, consts: DerivedConstants, R, nu0, sup_bound):
    """ Certified sup nu from the L^q excess bound fed to the Moser estimate """
    N, q = params.N, params.q
    c9 = excess_constant(q, nu0) * sup_bound
    ball = omega(N) * R ** N
    mean_bound = 2 ** ((q - 1) / q) * (c9 * norms.rho_q * ball ** (-1 / q) + nu0)
    rho_mean = norms.rho_q ** q / ball
    e = N / (q - N)
    nu_bar = consts.haarala * (mean_bound ** e + R ** e * rho_mean ** (e / q)) * mean_bound
    theta = math.sqrt(max(1.0 - 1.0 / nu_bar ** 2, 0.0))
    return Step3Bound(nu0=nu0, c9=c9, mean_bound=mean_bound, nu_bar=nu_bar, theta=theta)


def _ball_integral(r, values, N, R):
    """ sigma int_0^R values r^{N-1} dr by spline antiderivative """
    G = CubicSpline(r, sigma(N) * values * r ** (N - 1)).antiderivative()
    return float(G(R) - G(r[0]))


def _instance(sol: RadialSolution, **extra):
    ret = {"rho": sol.rho.describe(), "params": sol.params.asdict()}
    ret.update(extra)
    return ret


def theorem1_gap(sol: RadialSolution, x0, R, params: ParamSet, consts: DerivedConstants,
                 instance_id="0", tol=None):
    """ omega v^g(x0) against
        R^{-N} int_{K_R} v^{g+1} + c R^{2-N} int_{K_{R/2}} v^{g-1}(|D^2u|^2 + |grad v|^2)
        - (3/2)|rho|^2 int_0^R s^{1-b} Psi^{q-2} - (1/2)|rho| int_0^R s^{-b/2} Psi^{q-1},
    |rho| = |rho|_{q,K_R}, all by radial quadrature """
    if np.any(np.asarray(x0, dtype=float) != 0):
        raise ValueError("theorem1_gap evaluates radial solutions at the origin")
    N, q, g = params.N, params.q, consts.gamma
    b = params.beta
    w = omega(N)
    instance = _instance(sol, R=R)

    ball = lorentz_ball(sol, np.zeros(N), R)
    if not ball.bounded:
        raise UnboundedBallError(f"K_{R}(0) is not bounded on the radial grid")
    graph = RadialGraph(sol)
    if not R < graph.l_max:
        raise UnboundedBallError(f"K_{R}(0) reaches past the monotone range of l (l_max = {graph.l_max:.6g})")

    v = graph.v
    up, upp = graph.uprime, graph.uprime2
    r = graph.r
    hess_sq = upp ** 2 + (N - 1) * (up / r) ** 2
    grad_v_sq = (up * upp / v) ** 2

    lhs = w * sol.v[0] ** g
    mean_term = R ** -N * graph.integral(v ** (g + 1), area=False)(R)
    c = consts.C_mono * consts.c_ball
    hess_term = c * R ** (2 - N) * graph.integral(v ** (g - 1) * (hess_sq + grad_v_sq), area=False)(R / 2)

    rho_q = sol.rho.lq_norm(q, N, r_max=graph.radius_at(R))
    T1 = T2 = 0.0
    if rho_q > 0:
        def psi(s):
            return (w ** (1 / q) + 3 * w ** (-1 / q) * rho_q ** 2 * s ** (2 - b) / (2 * q * (2 - b))
                    + rho_q * s ** (1 - b / 2) / (2 * q * (1 - b / 2)))

        I1, _ = quad(lambda s: psi(s) ** (q - 2), 0.0, R, weight="alg", wvar=(1 - b, 0.0),
                     epsabs=0.0, epsrel=1e-12, limit=200)
        I2, _ = quad(lambda s: psi(s) ** (q - 1), 0.0, R, weight="alg", wvar=(-b / 2, 0.0),
                     epsabs=0.0, epsrel=1e-12, limit=200)
        T1 = 1.5 * rho_q ** 2 * I1
        T2 = 0.5 * rho_q * I2

    rhs = mean_term + hess_term - T1 - T2
    constants = {"gamma": g, "c": c, "C_mono": consts.C_mono, "c_ball": consts.c_ball, "rho_q_KR": rho_q}
    return EstimateReport(name="theorem1", instance_id=str(instance_id), lhs=lhs, rhs=rhs, tol=_tol(tol),
                          constants=constants, instance=instance)


def measured_inf_v_gamma(sol: RadialSolution, gamma):
    if np.any(sol.degenerate):
        return 0.0
    return float(np.min(sol.v) ** gamma)


def gradient_certificate_check(sol: RadialSolution, consts: DerivedConstants, instance_id="0", tol=None):
    """ The global certificate must sit below the measured inf v^g """
    norms = DatumNorms.from_radial(sol)
    cert = global_gradient_bound(norms, sol.params, consts)
    measured = measured_inf_v_gamma(sol, consts.gamma)
    return EstimateReport(name="certificate", instance_id=str(instance_id), lhs=measured, rhs=cert,
                          tol=_tol(tol), constants={"gamma": consts.gamma, "c1_energy": consts.c1_energy},
                          instance=_instance(sol, **norms.asdict()))


def _check_radial_center(sol, x0):
    if np.any(np.asarray(x0, dtype=float) != 0):
        raise ValueError("radial checks are centered at the origin")


def _haarala_terms(sol: RadialSolution, rho: RadialDensity, R, q):
    """ (sup_{B_{R/2}} nu, bracket * mean^{1/q}) with the constant left out """
    N = sol.N
    r = sol.r
    if R > r[-1]:
        raise EstimateRejected(f"B_{R} leaves the radial grid (r_max = {r[-1]:.6g})")
    inside = r <= R
    if np.any(sol.degenerate[inside]):
        raise EstimateRejected(f"nu is infinite at {int(sol.degenerate[inside].sum())} nodes of B_{R}")
    volume = omega(N) * R ** N
    nu_mean = _ball_integral(r, sol.nu ** q, N, R) / volume
    rho_mean = rho.lq_norm(q, N, r_max=R) ** q / volume
    sup_nu = float(np.max(sol.nu[r <= R / 2]))
    e = N / (q * (q - N))
    shape = (nu_mean ** e + R ** (N / (q - N)) * rho_mean ** e) * nu_mean ** (1 / q)
    return sup_nu, shape


def haarala_check(sol: RadialSolution, rho: Optional[RadialDensity], x0, R, q,
                  consts: DerivedConstants, instance_id="0", tol=None):
    """ sup_{B_{R/2}} nu <= c [(mean nu^q)^{N/(q(q-N))} + R^{N/(q-N)} (mean |rho|^q)^{N/(q(q-N))}] (mean nu^q)^{1/q} """
    _check_radial_center(sol, x0)
    try:
        sup_nu, shape = _haarala_terms(sol, rho or sol.rho, R, q)
    except EstimateRejected as e:
        return EstimateReport.reject("haarala", instance_id, str(e), _instance(sol, R=R))
    return EstimateReport(name="haarala", instance_id=str(instance_id), lhs=consts.haarala * shape, rhs=sup_nu,
                          tol=_tol(tol), constants={"haarala": consts.haarala, "fitted": sup_nu / shape},
                          instance=_instance(sol, R=R))


def fitted_haarala_constant(sol: RadialSolution, R, q):
    """ Smallest constant for which the Moser bound holds on this instance """
    sup_nu, shape = _haarala_terms(sol, sol.rho, R, q)
    return sup_nu / shape


def nu_excess_check(sol: RadialSolution, rho: Optional[RadialDensity], nu0, q, instance_id="0", tol=None):
    """ |(nu - nu0)_+|_q <= sqrt(6q)/(1 - nu0^{-2}) |u|_inf |rho|_q """
    N = sol.N
    if rho is None:
        rho = sol.rho
    instance = _instance(sol, nu0=nu0)
    if np.any(sol.degenerate):
        return EstimateReport.reject("nu_excess", instance_id, "nu is infinite on the grid", instance)
    excess = np.clip(sol.nu - nu0, 0.0, None)
    if excess[-1] > 0:
        return EstimateReport.reject("nu_excess", instance_id,
                                     "(nu - nu0)_+ reaches the outer edge of the grid", instance)
    lhs_norm = lq_norm(RadialField(sol.grid, excess), p=q)
    const = excess_constant(q, nu0)
    sup_u = float(np.max(np.abs(sol.u)))
    rho_q = rho.lq_norm(q, N)
    return EstimateReport(name="nu_excess", instance_id=str(instance_id), lhs=const * sup_u * rho_q,
                          rhs=lhs_norm, tol=_tol(tol), constants={"excess_constant": const, "sup_u": sup_u},
                          instance=instance)


def _sphere_fraction(s, d, t, N):
    """ Fraction of the sphere |y| = s inside B_t(x), |x| = d > 0 """
    if s + d <= t:
        return 1.0
    if s >= d + t or s <= d - t:
        return 0.0
    c = np.clip((s * s + d * d - t * t) / (2 * s * d), -1.0, 1.0)
    cap = 0.5 * betainc((N - 1) / 2, 0.5, 1 - c * c)
    return float(cap if c >= 0 else 1.0 - cap)


def ball_mass(rho: RadialDensity, x, t, N):
    """ int_{B_t(x)} |rho| """
    d = float(np.linalg.norm(x))
    if t <= 0:
        return 0.0
    if d == 0:
        return sigma(N) * abs(float(rho.mass(t, N)))
    inner = sigma(N) * abs(float(rho.mass(t - d, N))) if t > d else 0.0
    lo = abs(d - t)
    hi = min(d + t, rho.support_radius)
    if hi <= lo:
        return inner
    shell, _ = quad(lambda s: abs(float(rho(s))) * s ** (N - 1) * _sphere_fraction(s, d, t, N),
                    lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
    return inner + sigma(N) * shell


class RieszResult(NamedTuple):
    value: float
    bound: float

    @property
    def ok(self):
        return self.value <= self.bound * (1 + 1e-9)


def riesz_potential(rho: RadialDensity, x, r, alpha, q, N):
    """ int_0^r t^{-(N+alpha)} (int_{B_t(x)} |rho|) dt and its bound
    omega^{(q-1)/q} |rho|_q r^{1-alpha-N/q} / (1 - alpha - N/q) """
    x = np.asarray(x, dtype=float)
    if x.shape != (N,):
        raise ValueError(f"x must have {N} components")
    if not alpha < 1 - N / q:
        raise DivergenceError(f"alpha = {alpha} must stay below 1 - N/q = {1 - N / q}")
    if r <= 0:
        raise ValueError("r must be positive")
    e = 1 - alpha - N / q
    bound = omega(N) ** ((q - 1) / q) * rho.lq_norm(q, N) * r ** e / e
    if rho.is_zero:
        return RieszResult(0.0, bound)

    # the weight carries t^{-alpha-a}; the smooth factor m(t) t^{a-N} is evaluated at t = 0 too
    a = rho.leading_power if np.linalg.norm(x) == 0 else 0.0
    if alpha + a >= 1:
        raise DivergenceError(f"t^{{-alpha}} m(t) t^{{-N}} is not integrable: alpha + a = {alpha + a} >= 1")
    t_min = 1e-12 * r

    def smooth(t):
        t = max(t, t_min)
        return ball_mass(rho, x, t, N) * t ** (a - N)

    value, _ = quad(smooth, 0.0, r, weight="alg", wvar=(-alpha - a, 0.0), epsabs=0.0, epsrel=1e-8, limit=200)
    ret = RieszResult(float(value), float(bound))
    if not ret.ok:
        logger.error("Riesz potential %.6g exceeds its bound %.6g", ret.value, ret.bound)
    return ret
