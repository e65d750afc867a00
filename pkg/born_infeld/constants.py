""" Explicit constants of the gradient and regularity estimates.

Everything the estimates only assert to exist is instantiated here:
the monotonicity pair (gamma, C), the ball constant c(N), Talenti's
optimal Sobolev constants and the chains built on them, the Moser
series and the polynomial P(k). """

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from born_infeld.errors import ConfigError, DivergenceError
from born_infeld.fields import ParamSet, omega

logger = logging.getLogger(__name__)


def mono_constants(N):
    """ (gamma, C) for the pointwise bound on Delta_M v^gamma.

    With gamma = 1/(8N) the trace inequality and Young's inequality
    (epsilon = 7/(128 N^2)) leave exactly C = 7/(128N) in front of |D^2u|^2. """
    return 1.0 / (8 * N), 7.0 / (128 * N)


def S_profile(t, l, N):
    """ S_t(l) = int_l^t s^{-N-1}(s^2 - l^2)/2 ds, zero for l >= t """
    t = np.asarray(t, dtype=float)
    l = np.asarray(l, dtype=float)
    inside = (l > 0) & (l < t)
    ls = np.where(inside, l, 1.0)
    ts = np.where(inside, t, 2.0)
    val = ls ** (2 - N) / (N * (N - 2)) + ls ** 2 * ts ** (-N) / (2 * N) - ts ** (2 - N) / (2 * (N - 2))
    ret = np.where(inside, val, 0.0)
    return float(ret) if ret.ndim == 0 else ret


def c_ball(N):
    """ min over tau in (0, 1/2] of S_1(tau), so S_R(l) >= c_ball R^{2-N} for l <= R/2 """
    res = minimize_scalar(lambda tau: S_profile(1.0, tau, N), bounds=(1e-6, 0.5),
                          method="bounded", options={"xatol": 1e-12})
    return float(min(res.fun, S_profile(1.0, 0.5, N)))


def sobolev_constant(N, k):
    """ Talenti's optimal constant c0 in |phi|_{k*} <= c0 |grad phi|_k, 1 < k < N """
    if not 1 < k < N:
        raise ConfigError(f"Sobolev exponent k must lie in (1, N), got k={k}, N={N}", key="params")
    log_ratio = (gammaln(1 + N / 2) + gammaln(N) - gammaln(N / k) - gammaln(1 + N - N / k)) / N
    return (math.pi ** -0.5 * N ** (-1.0 / k) * ((k - 1) / (N - k)) ** (1 - 1.0 / k)
            * math.exp(log_ratio))


def talenti_bubble(r, N, k):
    """ Extremal profile (1 + r^{k/(k-1)})^{-(N-k)/k} """
    return (1.0 + np.asarray(r, dtype=float) ** (k / (k - 1))) ** (-(N - k) / k)


def sobolev_m_constant(N, m):
    """ c(N, m) in |phi|_{m'} <= c |grad phi|_2^{2((N+1)m-N)/(mN)} on the feasible set,
    taken as c0(N, k) with k* = m' """
    if not m > 1:
        raise ConfigError("the L^{m'} embedding constant needs m > 1", key="params.m")
    return sobolev_constant(N, m * N / ((N + 1) * m - N))


def morrey_constant(N, s):
    """ c_M in |phi|_inf <= c_M (|phi|_s + |grad phi|_s), s > N.

    Averages over the unit ball around x: the mean is bounded by
    omega^{-1/s}|phi|_s and the oscillation by the Riesz-kernel estimate
    2^N/(N omega) |x-y|^{1-N} paired with |grad phi|_s by Hoelder. """
    if not s > N:
        raise ConfigError(f"Morrey embedding needs s > N, got s={s}", key="params.s")
    w = omega(N)
    sp = s / (s - 1)
    kernel = (N * w / (N - (N - 1) * sp)) ** (1.0 / sp)
    return max(2 ** N / (N * w) * kernel, w ** (-1.0 / s))


def morrey_chain(N, s):
    """ (c_M, c2) in |phi|_inf <= c_M (c2 |grad phi|_2^{2(N+s)/(Ns)} + |grad phi|_2^{2/s}).
    c2 = c0(N, Ns/(N+s)) needs Ns/(N+s) >= 2, i.e. s >= 2N/(N-2). """
    k = N * s / (N + s)
    if k < 2 - 1e-12:
        raise ConfigError(f"s must be >= 2N/(N-2) = {2 * N / (N - 2):.6g} for the L^2 gradient chain, got {s}",
                          key="params.s")
    return morrey_constant(N, s), sobolev_constant(N, k)


def moser_series(q, N):
    """ (2/(q-2)) sum_{j>=0} alpha^{-j} and (2/(q-2)) sum_{j>=1} j alpha^{-j}
    with alpha = N(q-2)/((N-2)q) """
    if not q > N:
        raise DivergenceError(f"Moser series diverge for q <= N (q={q}, N={N})")
    alpha = N * (q - 2) / ((N - 2) * q)
    sum1 = 2.0 / (q - 2) * alpha / (alpha - 1)
    sum2 = 2.0 / (q - 2) * alpha / (alpha - 1) ** 2
    return sum1, sum2


def moser_series_closed(q, N):
    """ N/(q-N) and qN(N-2)/(2(q-N)^2) """
    if not q > N:
        raise DivergenceError(f"Moser series diverge for q <= N (q={q}, N={N})")
    return N / (q - N), q * N * (N - 2) / (2 * (q - N) ** 2)


def haarala_constant(N, q):
    """ Constant of sup_{B_{R/2}} nu <= c [...] (mean nu^q)^{1/q}, assembled
    through the Moser iteration with p_k - 2 = alpha^k (q-2) """
    alpha = N * (q - 2) / ((N - 2) * q)
    S1, S2 = moser_series(q, N)
    c1_sq = 7 * sobolev_constant(N, 2) ** 2 * 2 ** N * omega(N) ** (2.0 / N)
    return ((2 * alpha) ** S2 * (q - 2) ** S1 * (16 * 2 ** (2.0 * N / q) * c1_sq) ** (S1 / 2)
            * max(1.0, 2 ** (S1 / 2 - 1)))


def excess_constant(q, nu0):
    """ sqrt(6q)/gamma_{nu0} with gamma_{nu0} = 1 - 1/nu0^2 """
    if not nu0 > 1:
        raise ConfigError(f"nu0 must exceed 1, got {nu0}", key="estimates.nu0")
    return math.sqrt(6 * q) / (1 - 1 / nu0 ** 2)


def P_poly(k, q, N):
    """ Five-term polynomial absorbing the |rho|_q contributions; P(0) = 0 """
    k = np.asarray(k, dtype=float)
    w = omega(N)
    d = q - N
    ret = (1.5 * 2 ** (q - 4) * q * w ** (-2 / q) / d * k ** 2
           + 1.5 ** (q - 1) * 2 ** (q - 5) * q * w ** (-2 + 2 / q) / (d ** (q - 1) * (q - 1)) * k ** (2 * q - 2)
           + 2 ** (q - 4) * w ** -1 / d ** (q - 1) * (1.5 + 1 / d) * k ** q
           + 2 ** (q - 3) * q * w ** (-1 / q) / d * k
           + 1.5 ** (q - 1) * 2 ** (q - 4) * q * w ** (-2 + 1 / q) / (d ** q * (2 * q - 1)) * k ** (2 * q - 1))
    return float(ret) if ret.ndim == 0 else ret


@dataclass(frozen=True)
class DerivedConstants:
    """ Every constant an estimate needs, for one ParamSet. The m > 1
    chain is None when m = 1 and vice versa. """

    N: int
    gamma: float
    C_mono: float
    c_ball: float
    c0_two: float
    morrey: float
    c2_morrey: float
    c_sobolev_m: Optional[float]
    c1_energy: Optional[float]
    c3: float
    c4: float
    c6: float
    c7: float
    haarala: float
    moser_sum1: float
    moser_sum2: float

    @staticmethod
    def assemble(params: ParamSet, overrides=None):
        N, m, s, q = params.N, params.m, params.s, params.q
        gamma, C_mono = mono_constants(N)
        if params.gamma is not None:
            gamma = params.gamma
        c_M, c2 = morrey_chain(N, s)

        c_m = c1 = None
        if m > 1:
            c_m = sobolev_m_constant(N, m)
            c1 = 2 ** (((N + 1) * m - N) / (N - m)) * c_m ** params.m_star

        base = 2 * c_M * (1 + c2)
        S1, S2 = moser_series(q, N)
        ret = DerivedConstants(
            N=N, gamma=gamma, C_mono=C_mono, c_ball=c_ball(N),
            c0_two=sobolev_constant(N, 2), morrey=c_M, c2_morrey=c2,
            c_sobolev_m=c_m, c1_energy=c1,
            c3=base ** (s / (2 * (s - 1))),
            c4=c_M * (1 + c2) * base ** (1 / (s - 1)),
            c6=base ** (N * s / (2 * (N * s - N - s))),
            c7=c_M * (1 + c2) * base ** ((N + s) / (N * s - N - s)),
            haarala=haarala_constant(N, q),
            moser_sum1=S1, moser_sum2=S2,
        )
        if overrides:
            unknown = set(overrides) - set(ret.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown constants {sorted(unknown)}", key="estimates.constant_overrides")
            logger.warning("overriding derived constants: %s", dict(overrides))
            ret = replace(ret, **{k: float(v) for k, v in overrides.items()})
        return ret

    def energy_terms(self, params: ParamSet, rho_m):
        """ [(c, Z)] such that int 1/v over B_R <= omega R^N + c Z, one
        entry per applicable branch (two when m = 1) """
        N, s = params.N, params.s
        if params.m > 1:
            return [(self.c1_energy, rho_m ** params.m_star)]
        return [(self.c4, rho_m ** (s / (s - 1))),
                (self.c7, rho_m ** (N * s / (N * s - N - s)))]

    def asdict(self):
        return asdict(self)
