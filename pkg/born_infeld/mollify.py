""" Desk-scale run of the regularity argument: mollify rho at scales 1/n,
minimize each regularized energy and check that the uniform bounds the
argument relies on hold along the sequence. """

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from omegaconf import DictConfig
from scipy.ndimage import convolve, distance_transform_edt
from tqdm import tqdm

from config import CONFIG
from born_infeld.constants import DerivedConstants
from born_infeld.errors import ConfigError, EstimateRejected, SolverError
from born_infeld.estimates import (DatumNorms, Step3Bound, collar_radius, exterior_gradient_bound,
                                   step1_sup_bound, step3_nu_bound)
from born_infeld.fields import CartesianGrid, Mask, ParamSet, ScalarField, gradient, hessian, lq_norm
from born_infeld.reports import EstimateReport, to_json_safe
from born_infeld.variational import GridSolution, SolverOptions, cell_gradient, minimize_energy

logger = logging.getLogger(__name__)

PIPELINE_COLUMNS = ["n", "sup_u", "exterior_grad", "theta", "w2q_norm", "err_inf"]


def mollifier_kernel(n, grid: CartesianGrid):
    """ exp(-1/(1 - |n y|^2)) sampled on the grid offsets, unit sum """
    radius = 1.0 / n
    k = int(math.floor(radius / grid.h))
    if k == 0:
        logger.info("mollifier radius 1/%d is below h = %.4g; rho_%d = rho", n, grid.h, n)
        return np.ones((1,) * grid.dim)
    offsets = np.arange(-k, k + 1) * grid.h
    Y = np.meshgrid(*([offsets] * grid.dim), indexing="ij")
    x2 = sum(y ** 2 for y in Y) * n ** 2
    inside = x2 < 1
    K = np.where(inside, np.exp(-1.0 / (1.0 - np.where(inside, x2, 0.0))), 0.0)
    return K / K.sum()


def mollify(rho: ScalarField, n):
    """ rho_n = rho * eta_{1/n}. The kernel support has to fit between
    supp rho and the box boundary. """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    grid = rho.grid
    K = mollifier_kernel(n, grid)
    support = rho.values != 0
    if np.any(support):
        k = K.shape[0] // 2
        dist = distance_transform_edt(~grid.boundary_mask())
        if np.min(dist[support]) < k + 1:
            raise EstimateRejected(f"mollifier radius 1/{n} exceeds the margin between supp rho and the box")
    return ScalarField(grid, convolve(rho.values, K, mode="constant", cval=0.0))


def hoelder_seminorms(u: ScalarField, alpha, levels=4):
    """ max_i sup_x |grad u(x + d e_i) - grad u(x)| / d^alpha at d = 2^k h, k < levels """
    grid = u.grid
    grad = gradient(u)
    ret = []
    for k in range(levels):
        step = 2 ** k
        if step >= grid.num_nodes:
            break
        d = step * grid.h
        worst = 0.0
        for i in range(grid.dim):
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[i] = slice(0, -step)
            hi[i] = slice(step, None)
            diff = grad[(slice(None),) + tuple(hi)] - grad[(slice(None),) + tuple(lo)]
            worst = max(worst, float(np.max(np.sqrt(np.sum(diff ** 2, axis=0)))))
        ret.append(worst / d ** alpha)
    return np.array(ret)


def coefficients(grad):
    """ a_ij = delta_ij (1 - |p|^2) + p_i p_j for p of shape (d, ...) """
    d = grad.shape[0]
    p2 = np.sum(grad ** 2, axis=0)
    eye = np.eye(d).reshape((d, d) + (1,) * (grad.ndim - 1))
    return eye * (1.0 - p2) + grad[:, None] * grad[None, :]


def ellipticity_bounds(grad):
    """ (min, max) eigenvalue of a_ij over all points """
    a = coefficients(grad)
    d = a.shape[0]
    mats = np.moveaxis(a.reshape(d, d, -1), -1, 0)
    eig = np.linalg.eigvalsh(mats)
    return float(eig.min()), float(eig.max())


def rhs_field(u: ScalarField, rho: ScalarField):
    """ f = -(1 - |grad u|^2)^{3/2} rho, so that a_ij u_ij = f """
    g = gradient(u)
    v2 = np.clip(1.0 - np.sum(g ** 2, axis=0), 0.0, None)
    return ScalarField(u.grid, -v2 ** 1.5 * rho.values)


def window_mask(grid: CartesianGrid, fraction):
    X = grid.mesh()
    return np.all([np.abs(x) <= fraction * grid.half_width for x in X], axis=0)


def w2q_norm(u: ScalarField, q, mask: Mask):
    """ (|u|_q^q + |grad u|_q^q + |D^2u|_q^q)^{1/q} over mask """
    grid = u.grid
    g = np.sqrt(np.sum(gradient(u) ** 2, axis=0))
    H = np.sqrt(np.sum(hessian(u) ** 2, axis=(0, 1)))
    total = sum(lq_norm(ScalarField(grid, f), mask, q) ** q for f in (u.values, g, H))
    return float(total ** (1.0 / q))


@dataclass
class PipelineSettings:
    n_list: List[int] = field(default_factory=lambda: [4, 8, 16, 32])
    R_bar: float = 0.5
    R_ball: float = 1.0
    nu0: float = 1.5
    window: float = 0.5
    hoelder_levels: int = 4
    hoelder_cap: float = 1e3
    err_tol: float = 1e-3
    w2q_ratio: float = 2.0

    @staticmethod
    def from_config(cfg: DictConfig, nu0=1.5):
        ret = PipelineSettings(nu0=nu0)
        for key in ret.__dataclass_fields__:
            if key in cfg:
                value = cfg[key]
                setattr(ret, key, list(value) if key == "n_list" else type(getattr(ret, key))(value))
        if sorted(ret.n_list) != list(ret.n_list) or len(set(ret.n_list)) != len(ret.n_list):
            raise ConfigError("n_list must be strictly increasing", key="pipeline.n_list")
        return ret


@dataclass
class MollificationStage:

    n: int
    rho_n: ScalarField = field(repr=False)
    sol_n: GridSolution = field(repr=False)
    Lambda_n: Mask = field(repr=False)
    sup_u: float
    exterior_grad: float
    theta_n: float
    w2q_norm: float
    coeffs: np.ndarray = field(repr=False)
    ellipticity: tuple = (1.0, 1.0)
    rho_norms: dict = field(default_factory=dict)
    err_inf: float = math.nan

    def row(self):
        return {"n": self.n, "sup_u": self.sup_u, "exterior_grad": self.exterior_grad,
                "theta": self.theta_n, "w2q_norm": self.w2q_norm, "err_inf": self.err_inf}


def _solve(rho: ScalarField, opts: SolverOptions):
    return minimize_energy(rho, rho.grid, opts)


def build_stage(n, rho_n: ScalarField, sol: GridSolution, collar, q, window: Mask, norms_p):
    grid = rho_n.grid
    support = rho_n.values != 0
    if np.any(support):
        Lambda = distance_transform_edt(~support, sampling=grid.h) < collar
    else:
        Lambda = np.zeros(grid.shape, dtype=bool)
    nodal = gradient(sol.u)
    grad_abs = np.sqrt(np.sum(nodal ** 2, axis=0))
    exterior = float(np.max(grad_abs[~Lambda])) if np.any(~Lambda) else 0.0
    cells = cell_gradient(sol.u.values, grid.h)
    return MollificationStage(
        n=n, rho_n=rho_n, sol_n=sol, Lambda_n=Lambda,
        sup_u=float(np.max(np.abs(sol.u.values))), exterior_grad=exterior, theta_n=sol.theta,
        w2q_norm=w2q_norm(sol.u, q, window), coeffs=coefficients(cells),
        ellipticity=ellipticity_bounds(cells),
        rho_norms={p: lq_norm(rho_n, p=p) for p in norms_p},
    )


@dataclass
class PipelineSummary:
    """ Stage records in n order plus the bounds they are checked against """

    stages: List[MollificationStage]
    reference: GridSolution = field(repr=False)
    step1_bound: float = math.nan
    delta_ext: float = math.nan
    collar: float = math.nan
    step3: Optional[Step3Bound] = None
    hoelder: np.ndarray = field(default=None, repr=False)
    reports: List[EstimateReport] = field(default_factory=list, repr=False)

    @property
    def theta_star(self):
        return max(s.theta_n for s in self.stages)

    @property
    def passed(self):
        return all(r.status != "fail" for r in self.reports)

    def to_frame(self):
        return pd.DataFrame([s.row() for s in self.stages], columns=PIPELINE_COLUMNS)

    def asdict(self):
        return {
            "step1_bound": self.step1_bound, "delta_ext": self.delta_ext, "collar": self.collar,
            "theta_star": self.theta_star,
            "step3": None if self.step3 is None else self.step3._asdict(),
            "hoelder": None if self.hoelder is None else [float(x) for x in self.hoelder],
            "stages": [dict(s.row(), ellipticity=list(s.ellipticity), converged=s.sol_n.converged,
                            rho_norms={str(k): v for k, v in s.rho_norms.items()}) for s in self.stages],
        }

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.to_frame().to_csv(os.path.join(out_dir, "pipeline.csv"), index=False, float_format="%.17g")
        with open(os.path.join(out_dir, "pipeline.json"), "w") as f:
            json.dump(to_json_safe(self.asdict()), f, indent=2, sort_keys=True)
            f.write("\n")


def _report(name, n, lhs, rhs, instance, tol=1e-12, **constants):
    return EstimateReport(name=name, instance_id=str(n), lhs=float(lhs), rhs=float(rhs), tol=tol,
                          constants=constants, instance=instance)


def spacelike_report(n, theta, instance):
    """ theta < 1 strictly: lhs is the largest double below 1 """
    return _report("spacelike", n, np.nextafter(1.0, 0.0), theta, instance, tol=0.0)


def _check(summary: PipelineSummary, rho: ScalarField, params: ParamSet, settings: PipelineSettings):
    stages = summary.stages
    instance = {"grid": rho.grid.header(), "n_list": [s.n for s in stages]}
    reports = []
    base = {p: lq_norm(rho, p=p) for p in (params.m, params.q)}
    for s in stages:
        for p, value in s.rho_norms.items():
            reports.append(_report(f"contraction_L{p:g}", s.n, base[p], value, instance, tol=1e-10 * max(base[p], 1.0)))
        reports.append(_report("ellipticity_min", s.n, s.ellipticity[0], 1.0 - s.theta_n ** 2, instance))
        reports.append(_report("ellipticity_max", s.n, 1.0, s.ellipticity[1], instance))
        reports.append(spacelike_report(s.n, s.theta_n, instance))

    reports.append(_report("step1_sup", "all", summary.step1_bound, max(s.sup_u for s in stages), instance,
                           tol=0.0))
    reports.append(_report("exterior_grad", "all", summary.delta_ext, max(s.exterior_grad for s in stages),
                           instance, tol=0.0, collar=summary.collar))
    max_nu = max(float(np.max(s.sol_n.nu.values)) for s in stages)
    reports.append(_report("step3_nu", "all", summary.step3.nu_bar, max_nu, instance, tol=0.0,
                           **summary.step3._asdict()))
    w2q = [s.w2q_norm for s in stages]
    if min(w2q) > 0:
        reports.append(_report("w2q_uniform", "all", settings.w2q_ratio, max(w2q) / min(w2q), instance, tol=0.0))
    errs = [s.err_inf for s in stages]
    worst_increase = max([b - a for a, b in zip(errs, errs[1:])], default=0.0)
    reports.append(_report("convergence_monotone", "all", 0.0, worst_increase, instance, tol=1e-12))
    reports.append(_report("convergence_tol", "all", settings.err_tol, errs[-1], instance, tol=0.0))
    alpha = params.alpha_holder - 0.1
    finite = summary.hoelder is not None and np.all(np.isfinite(summary.hoelder))
    worst = float(np.max(summary.hoelder)) if finite and len(summary.hoelder) else math.inf
    reports.append(_report("hoelder", "ref", settings.hoelder_cap, worst, instance, tol=0.0, alpha=alpha))
    return reports


def run_pipeline(rho: ScalarField, n_list, params: ParamSet, consts: Optional[DerivedConstants] = None,
                 settings: Optional[PipelineSettings] = None, opts: Optional[SolverOptions] = None,
                 workers=1):
    """ Solve for rho_n, n in n_list, and for rho itself, then assemble
    the stage records and the checks of the uniform bounds. A stage that
    does not converge aborts with the stages finished so far. """
    if list(n_list) != sorted(set(n_list)):
        raise ValueError("n_list must be strictly increasing")
    if consts is None:
        consts = DerivedConstants.assemble(params, CONFIG.estimates.get("constant_overrides", None))
    if settings is None:
        settings = PipelineSettings.from_config(CONFIG.pipeline, CONFIG.estimates.nu0)
        settings.n_list = list(n_list)
    if opts is None:
        opts = SolverOptions.from_config(CONFIG.solver)
    grid = rho.grid

    norms = DatumNorms.from_field(rho, params)
    C = step1_sup_bound(norms, params, consts)
    delta = exterior_gradient_bound(settings.R_bar, norms, params, consts)
    collar = collar_radius(settings.R_bar, C)
    floor = 1.0 / math.sqrt(1.0 - delta ** 2) if delta < 1 else math.inf
    nu0 = settings.nu0
    if not nu0 > floor:
        nu0 = 1.01 * floor
        logger.info("nu0 raised to %.6g to exceed 1/sqrt(1 - delta^2)", nu0)
    step3 = step3_nu_bound(norms, params, consts, settings.R_ball, nu0, C)
    logger.info("Step bounds: |u|_inf <= %.6g, delta_ext = %.6g, R' = %.6g, nu_bar = %.6g",
                C, delta, collar, step3.nu_bar)

    rhos = [mollify(rho, n) for n in n_list]
    jobs = rhos + [rho]
    progress = bool(CONFIG.get("progress", True))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_solve, r, opts) for r in jobs]
            sols = [f.result() for f in tqdm(futures, desc="pipeline", disable=not progress)]
    else:
        sols = [_solve(r, opts) for r in tqdm(jobs, desc="pipeline", disable=not progress)]
    reference = sols[-1]

    window = window_mask(grid, settings.window)
    stages = []
    for n, rho_n, sol in zip(n_list, rhos, sols):
        if not sol.converged:
            raise SolverError(f"stage n={n} did not converge: {sol.message}", partial=stages)
        stage = build_stage(n, rho_n, sol, collar, params.q, window, (params.m, params.q))
        stage.err_inf = float(np.max(np.abs(sol.u.values - reference.u.values)))
        stages.append(stage)
        logger.info("stage n=%d: sup|u| = %.6g, theta = %.6f, |u_n - u_ref| = %.3e",
                    n, stage.sup_u, stage.theta_n, stage.err_inf)
    if not reference.converged:
        raise SolverError(f"reference solve did not converge: {reference.message}", partial=stages)

    summary = PipelineSummary(stages=stages, reference=reference, step1_bound=C, delta_ext=delta,
                              collar=collar, step3=step3,
                              hoelder=hoelder_seminorms(reference.u, params.alpha_holder - 0.1,
                                                        settings.hoelder_levels))
    summary.reports = _check(summary, rho, params, settings)
    return summary
