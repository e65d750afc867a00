""" Verify suites and the radial sweep. Each suite turns a seeded family
of instances into EstimateReports, in instance order. """

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List

import numpy as np
from scipy.integrate import quad
from tqdm import tqdm

from config import CONFIG
from born_infeld.constants import DerivedConstants, S_profile, moser_series, moser_series_closed
from born_infeld.densities import RadialDensity
from born_infeld.errors import ConfigError, DivergenceError, EstimateRejected, InfeasibleError, UnboundedBallError
from born_infeld.estimates import (DatumNorms, GronwallParams, expansion_residual, global_gradient_bound,
                                   gradient_certificate_check, gronwall_bound, gronwall_saturate, haarala_check,
                                   jet_inequality_check, nu_excess_check, riesz_potential, theorem1_gap)
from born_infeld.fields import CartesianGrid, ParamSet, RadialGrid
from born_infeld.geometry import (Jet2, coarea_check, gauss_map_norm, laplace_beltrami, laplace_beltrami_fd,
                                  monotonicity_residual, second_form_sq)
from born_infeld.mollify import run_pipeline
from born_infeld.radial import radial_solve, rescale
from born_infeld.reports import EstimateReport
from born_infeld.variational import SolverOptions, solve_against_oracle
from datasets.jet_batch import JetBatch, load_jets

logger = logging.getLogger(__name__)


def _rng(seed, stream):
    """ Independent, reproducible stream per suite """
    return np.random.default_rng([int(seed), stream])


def _progress():
    return bool(CONFIG.get("progress", True))


def _tol():
    return float(CONFIG.estimates.tol_slack)


def _report(name, instance_id, lhs, rhs, tol, **instance):
    return EstimateReport(name=name, instance_id=str(instance_id), lhs=float(lhs), rhs=float(rhs), tol=tol,
                          instance=instance)


def _map(fn, jobs, workers, desc):
    """ fn over jobs, results in job order """
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, job) for job in jobs]
            return [f.result() for f in tqdm(futures, desc=desc, disable=not _progress())]
    return [fn(job) for job in tqdm(jobs, desc=desc, disable=not _progress())]


def radial_setup():
    """ ParamSet, radial grid and derived constants from CONFIG """
    params = ParamSet.from_config(CONFIG.params)
    grid = RadialGrid.from_config(CONFIG.radial, dim=params.N)
    consts = DerivedConstants.assemble(params, CONFIG.estimates.get("constant_overrides", None))
    return params, grid, consts


def radial_family(count, rng, cfg):
    """ [(instance_id, RadialDensity, R)] for the configured family.
    Power exponents are uniform in [0, exponent_max], amplitudes
    log-uniform, R cycles through cfg.radii. """
    kind = cfg.get("kind", "power")
    radii = list(cfg.radii)
    lo, hi = math.log(cfg.amplitude_min), math.log(cfg.amplitude_max)
    ret = []
    for i in range(count):
        a = float(rng.uniform(0.0, cfg.exponent_max)) if kind == "power" else 0.0
        amplitude = float(math.exp(rng.uniform(lo, hi)))
        rho = RadialDensity(kind=kind, amplitude=amplitude, radius=float(cfg.support), exponent=a)
        ret.append((f"{kind}-{i:03d}", rho, float(radii[i % len(radii)])))
    return ret


def _theorem1_job(job):
    instance_id, rho, R, params, grid, consts, tol = job
    sol = radial_solve(rho, params, grid)
    try:
        return theorem1_gap(sol, np.zeros(params.N), R, params, consts, instance_id=instance_id, tol=tol)
    except (UnboundedBallError, InfeasibleError) as e:
        return EstimateReport.reject("theorem1", instance_id, str(e), {"rho": rho.describe(), "R": R})


def _haarala_job(job):
    instance_id, rho, R, params, grid, consts, tol = job
    sol = radial_solve(rho, params, grid)
    return haarala_check(sol, rho, np.zeros(params.N), R, params.q, consts, instance_id=instance_id, tol=tol)


def _excess_job(job):
    instance_id, rho, nu0, params, grid, consts, tol = job
    sol = radial_solve(rho, params, grid)
    return nu_excess_check(sol, rho, nu0, params.q, instance_id=instance_id, tol=tol)


def _jobs(family, setup, extra=None):
    params, grid, consts = setup
    return [(iid, rho, R if extra is None else extra, params, grid, consts, _tol()) for iid, rho, R in family]


def theorem1_suite(seed, workers=1):
    setup = radial_setup()
    family = radial_family(int(CONFIG.sweep.count), _rng(seed, 1), CONFIG.sweep)
    return _map(_theorem1_job, _jobs(family, setup), workers, "theorem1")


def haarala_suite(seed, workers=1):
    setup = radial_setup()
    consts = setup[2]
    cfg = CONFIG.verify.haarala
    family = radial_family(int(cfg.count), _rng(seed, 2), cfg)
    reports = _map(_haarala_job, _jobs(family, setup), workers, "haarala")
    fitted = [r.constants["fitted"] for r in reports if not r.rejected]
    if fitted:
        reports.append(_report("haarala_fit", "max", consts.haarala, max(fitted), 0.0, count=len(fitted)))
    return reports


def excess_suite(seed, workers=1):
    setup = radial_setup()
    params, grid, _ = setup
    cfg = CONFIG.verify.excess
    nu0 = float(CONFIG.estimates.nu0)
    family = radial_family(int(cfg.count), _rng(seed, 3), cfg)
    reports = _map(_excess_job, _jobs(family, setup, extra=nu0), workers, "nu_excess")
    status = {r.instance_id: r.status for r in reports}

    # both sides scale like t^{N/q}, so the verdict must not move
    for t in cfg.scales:
        for iid, rho, _ in family[:int(cfg.scaled_instances)]:
            sol = rescale(radial_solve(rho, params, grid), float(t))
            scaled = nu_excess_check(sol, None, nu0, params.q, instance_id=f"{iid}@t={t}", tol=_tol())
            moved = 0.0 if scaled.status == status[iid] else 1.0
            reports.append(_report("excess_scaling", f"{iid}@t={t:g}", 0.0, moved, 0.0,
                                   base=status[iid], scaled=scaled.status))
    return reports


def sweep(seed, workers=1):
    """ theorem1, haarala and nu_excess over the configured family """
    setup = radial_setup()
    nu0 = float(CONFIG.estimates.nu0)
    family = radial_family(int(CONFIG.sweep.count), _rng(seed, 4), CONFIG.sweep)
    reports = _map(_theorem1_job, _jobs(family, setup), workers, "sweep/theorem1")
    reports += _map(_haarala_job, _jobs(family, setup), workers, "sweep/haarala")
    reports += _map(_excess_job, _jobs(family, setup, extra=nu0), workers, "sweep/nu_excess")
    return reports


def _jet_batches(N, total, size, rng):
    for start in range(0, total, size):
        yield JetBatch.random(min(size, total - start), N, rng, third=True)


def identities_suite(seed, workers=1):
    """ Gauss map normalization, the two ||II||^2 formulas, the v^gamma
    expansion and the pointwise monotonicity inequality on random jets,
    plus the closed form of S_t(l) against quadrature """
    cfg = CONFIG.verify.identities
    rng = _rng(seed, 5)
    reports = []
    extra = load_jets(cfg.get("jet_file", None))
    for N in cfg.dims:
        N = int(N)
        gamma, C = 1.0 / (8 * N), 7.0 / (128 * N)
        batches = list(_jet_batches(N, int(cfg.jets), int(cfg.batch), rng))
        if extra is not None and extra.N == N:
            batches += list(extra.chunks(int(cfg.batch)))
        worst = dict.fromkeys(["gauss", "second_form", "expansion", "inequality"], 0.0)
        for batch in tqdm(batches, desc=f"jets N={N}", disable=not _progress()):
            jet = batch.jet()
            scale = np.sum(jet.nu_vec ** 2, axis=-1)
            worst["gauss"] = max(worst["gauss"], float(np.max(np.abs(gauss_map_norm(jet) + 1.0) / scale)))
            direct, decomposed = second_form_sq(jet)
            rel = np.abs(direct - decomposed) / np.maximum(np.abs(direct), 1e-300)
            worst["second_form"] = max(worst["second_form"], float(np.max(rel)))
            if jet.third is not None:
                worst["expansion"] = max(worst["expansion"], float(np.max(expansion_residual(jet, gamma))))
            slack = jet_inequality_check(jet, gamma, C)
            size = np.sum(jet.hess ** 2, axis=(-1, -2)) + jet.v ** 2 * jet.rho ** 2
            worst["inequality"] = max(worst["inequality"], float(np.max(-slack / np.maximum(size, 1e-300))))
        reports.append(_report("gauss_map", f"N={N}", 0.0, worst["gauss"], 1e-14))
        reports.append(_report("second_form", f"N={N}", 0.0, worst["second_form"], 1e-10))
        reports.append(_report("expansion", f"N={N}", 0.0, worst["expansion"], 1e-8))
        reports.append(_report("jet_inequality", f"N={N}", 0.0, worst["inequality"], 1e-12))

        profile_worst = 0.0
        for a, b in rng.uniform(size=(int(cfg.profile_samples), 2)):
            t = 0.5 + 2.0 * a
            l = max(b, 1e-3) * t
            exact = S_profile(t, l, N)
            oracle, _ = quad(lambda s: 0.5 * s ** (-N - 1) * (s * s - l * l), l, t, epsabs=0.0, epsrel=1e-13)
            profile_worst = max(profile_worst, abs(exact - oracle) / max(abs(oracle), 1e-300))
        reports.append(_report("S_profile", f"N={N}", 0.0, profile_worst, 1e-8))
    return reports


def gronwall_suite(seed, workers=1):
    """ Saturating ODE solution against the closed-form bound; equality when C1 = 0 """
    cfg = CONFIG.verify.gronwall
    rng = _rng(seed, 7)
    worst_gap = worst_equal = 0.0
    for _ in range(int(cfg.count)):
        p = GronwallParams(C0=float(rng.uniform(0.1, 3.0)), C1=float(rng.uniform(0.0, 2.0)),
                           C2=float(rng.uniform(0.0, 2.0)), q=float(rng.uniform(2.5, 8.0)),
                           beta=float(rng.uniform(0.1, 1.9)), T=float(rng.uniform(0.5, 2.0)))
        t = np.linspace(0.0, p.T, int(cfg.points))
        psi = gronwall_saturate(p)(t)
        bound = gronwall_bound(p, t)
        worst_gap = max(worst_gap, float(np.max((psi - bound) / bound)))

        p0 = GronwallParams(C0=p.C0, C1=0.0, C2=p.C2, q=p.q, beta=p.beta, T=p.T)
        worst_equal = max(worst_equal, float(np.max(np.abs(gronwall_saturate(p0)(t) / gronwall_bound(p0, t) - 1))))
    return [_report("gronwall_bound", "random", 0.0, worst_gap, 1e-6, count=int(cfg.count)),
            _report("gronwall_equal", "C1=0", 0.0, worst_equal, 1e-6, count=int(cfg.count))]


def moser_suite(seed, workers=1):
    """ Moser series sums against their closed forms; q = N must diverge """
    cfg = CONFIG.verify.moser
    rng = _rng(seed, 8)
    worst = 0.0
    for _ in range(int(cfg.count)):
        N = int(rng.integers(3, 9))
        q = N + float(rng.uniform(0.05, 20.0))
        pairs = zip(moser_series(q, N), moser_series_closed(q, N))
        worst = max(worst, max(abs(a - b) / abs(b) for a, b in pairs))
    reports = [_report("moser_series", "random", 0.0, worst, 1e-12, count=int(cfg.count))]
    try:
        moser_series(3.0, 3)
        raised = False
    except DivergenceError:
        raised = True
    reports.append(_report("moser_guard", "q=N", 0.0, 0.0 if raised else 1.0, 0.0))
    return reports


def riesz_suite(seed, workers=1):
    """ Truncated Riesz potential against its L^q bound """
    cfg = CONFIG.verify.riesz
    params = ParamSet.from_config(CONFIG.params)
    N, q = params.N, params.q
    rng = _rng(seed, 9)
    reports = []

    # constant unit density on B_1, x = 0: the potential is omega / (1 - alpha)
    unit = RadialDensity(kind="constant", amplitude=1.0, radius=1.0)
    alpha = min(0.1, 0.5 * (1 - N / q))
    ref = riesz_potential(unit, np.zeros(N), 1.0, alpha, q, N)
    exact = math.pi ** (N / 2) / math.gamma(N / 2 + 1) / (1 - alpha)
    reports.append(_report("riesz_exact", "unit-ball", 0.0, abs(ref.value - exact) / exact, 1e-8, alpha=alpha))

    kinds = ["constant", "bump", "power"]
    for i in range(int(cfg.count)):
        kind = kinds[i % 3]
        a = float(rng.uniform(0.0, 0.5 * N / q)) if kind == "power" else 0.0
        rho = RadialDensity(kind=kind, amplitude=float(rng.uniform(0.1, 3.0)),
                            radius=float(rng.uniform(0.5, 1.5)), exponent=a)
        x = np.zeros(N)
        if kind != "power":
            x = rng.normal(size=N)
            x *= float(rng.uniform(0.0, 1.5)) / np.linalg.norm(x)
        hi = 1 - N / q - a - 0.05
        alpha = float(rng.uniform(min(-0.5, hi - 0.1), hi))
        r = float(rng.uniform(0.1, 2.0))
        res = riesz_potential(rho, x, r, alpha, q, N)
        reports.append(_report("riesz_bound", f"riesz-{i:03d}", res.bound, res.value, 1e-9 * res.bound,
                               rho=rho.describe(), x=x.tolist(), r=r, alpha=alpha))
    try:
        riesz_potential(unit, np.zeros(N), 1.0, 1 - N / q, q, N)
        raised = False
    except DivergenceError:
        raised = True
    reports.append(_report("riesz_guard", "alpha=1-N/q", 0.0, 0.0 if raised else 1.0, 0.0))
    return reports


def scaling_suite(seed, workers=1):
    """ Rescaling round trip, scale invariance of the gradient certificate
    and the blow-up of the power datum outside L^q """
    cfg = CONFIG.verify.scaling
    params, grid, consts = radial_setup()
    rho = RadialDensity(kind="constant", amplitude=float(cfg.amplitude), radius=1.0)
    sol = radial_solve(rho, params, grid)
    base = global_gradient_bound(DatumNorms.from_density(rho, params), params, consts)
    reports = []
    for t in cfg.scales:
        t = float(t)
        back = rescale(rescale(sol, t), 1.0 / t)
        err = max(float(np.max(np.abs(back.u - sol.u))), float(np.max(np.abs(back.r - sol.r) / sol.r)))
        reports.append(_report("rescale_roundtrip", f"t={t:g}", 0.0, err, 1e-12))
        scaled = global_gradient_bound(DatumNorms.from_density(rho.rescale(t), params), params, consts)
        reports.append(_report("certificate_scaling", f"t={t:g}", 0.0, abs(scaled - base),
                               1e-10 * max(1.0, abs(base)), base=base, scaled=scaled))

    # rho = r^{-3/2} is outside L^q_loc for q > N: |u'| -> 1 at the origin
    toy = RadialDensity(kind="power", amplitude=1.0, radius=1.0, exponent=1.5)
    toy_sol = radial_solve(toy, params, grid)
    slope = abs(float(np.interp(float(cfg.blowup_radius), toy_sol.r, toy_sol.uprime)))
    reports.append(_report("toy_blowup", "a=1.5", slope, 0.99, 0.0, in_lq=toy.in_lq_loc(params.q, params.N)))

    for iid, datum in [("power-a0.1", RadialDensity(kind="power", amplitude=float(cfg.amplitude), radius=1.0,
                                                     exponent=0.1)),
                       ("constant-0.01", RadialDensity(kind="constant", amplitude=0.01, radius=1.0))]:
        reports.append(gradient_certificate_check(radial_solve(datum, params, grid), consts, instance_id=iid))
    return reports


def _graph_quadratic(x, y):
    zero = 0 * x
    u = 0.3 * x + 0.1 * y ** 2
    return u, [0.3 + zero, 0.2 * y], [[zero, zero], [zero, 0.2 + zero]]


def _graph_sine(x, y):
    sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
    u = 0.2 * sx * sy
    return u, [0.2 * cx * sy, 0.2 * sx * cy], [[-u, 0.2 * cx * cy], [0.2 * cx * cy, -u]]


def _graph_hyperboloid(x, y):
    s = np.sqrt(1 + x ** 2 + y ** 2)
    s3 = s ** 3
    return 0.5 * s, [0.5 * x / s, 0.5 * y / s], [[0.5 * (1 + y ** 2) / s3, -0.5 * x * y / s3],
                                                 [-0.5 * x * y / s3, 0.5 * (1 + x ** 2) / s3]]


# (u, grad u, D^2 u) in closed form
GRAPHS: Dict[str, Callable] = {"quadratic": _graph_quadratic, "sine": _graph_sine,
                               "hyperboloid": _graph_hyperboloid}


def laplace_beltrami_order(graph, n=41, window=0.8):
    """ Observed order of laplace_beltrami_fd against the jet formula for
    f = x^2 + x y on [-1, 1]^2, from grids with n and 2n - 1 nodes, on
    the common window max(|x|, |y|) <= window """
    errs = []
    for m in (n, 2 * n - 1):
        grid = CartesianGrid(1.0, m, dim=2)
        x, y = grid.mesh()
        u, gu, hu = graph(x, y)
        f = x ** 2 + x * y
        grad_f = np.stack([2 * x + y, x], axis=-1)
        hess_f = np.broadcast_to(np.array([[2.0, 1.0], [1.0, 0.0]]), grid.shape + (2, 2))
        jet = Jet2(grad=np.stack(gu, axis=-1), hess=np.stack([np.stack(row, axis=-1) for row in hu], axis=-2))
        exact = laplace_beltrami(jet, grad_f, hess_f)
        approx = laplace_beltrami_fd(u, f, grid.h)
        inside = np.maximum(np.abs(x), np.abs(y)) <= window + 1e-12
        errs.append(float(np.max(np.abs(approx - exact)[inside])))
    return math.log2(errs[0] / errs[1]) if errs[1] > 0 else math.inf, errs


def geometry_suite(seed, workers=1):
    """ Laplace-Beltrami order, coarea formula and monotonicity identity """
    cfg = CONFIG.verify.geometry
    params, grid, _ = radial_setup()
    reports = []
    for name, graph in GRAPHS.items():
        order, errs = laplace_beltrami_order(graph, int(cfg.lb_nodes))
        reports.append(_report("laplace_beltrami", name, order, float(cfg.lb_min_order), 0.0, errors=errs))

    rho = RadialDensity(kind="bump", amplitude=float(cfg.amplitude), radius=1.0)
    sol = radial_solve(rho, params, grid)
    s_values = np.linspace(float(cfg.s_min), float(cfg.s_max), int(cfg.s_points))
    reports.append(_report("coarea", "bump", 0.0, coarea_check(sol, sol.v ** params.gamma, s_values), 1e-4))
    worst = max(monotonicity_residual(sol, params.gamma, s) for s in s_values)
    reports.append(_report("monotonicity", "bump", 0.0, worst, 1e-3))
    return reports


def pipeline_suite(seed, workers=1):
    """ Mollification pipeline on the configured grid datum """
    params = ParamSet.from_config(CONFIG.params)
    cfg = CONFIG.pipeline
    grid = CartesianGrid.from_config(cfg.grid)
    rho = RadialDensity.from_config(cfg.density).sample(grid)
    try:
        summary = run_pipeline(rho, list(cfg.n_list), params, workers=workers)
    except EstimateRejected as e:
        return [EstimateReport.reject("pipeline", "all", str(e))]
    return summary.reports


def oracle_suite(seed, workers=1):
    """ Grid solver against the radial oracle on the same Dirichlet
    problem, at each configured resolution; every refinement must at
    least halve both errors """
    cfg = CONFIG.verify.oracle
    params = ParamSet.from_config(CONFIG.params)
    rho = RadialDensity(kind="bump", amplitude=float(cfg.amplitude), radius=float(cfg.radius))
    oracle = radial_solve(rho, params, RadialGrid.from_config(CONFIG.radial, dim=params.N))
    opts = SolverOptions.from_config(CONFIG.solver)
    reports, gaps = [], []
    for n in cfg.nodes:
        grid = CartesianGrid(float(cfg.radius_factor) * float(cfg.radius), int(n), dim=params.N)
        sol, gap = solve_against_oracle(rho, oracle, grid, opts)
        if not sol.converged:
            reports.append(EstimateReport.reject("grid_oracle", f"n={n}", sol.message, {"n": int(n)}))
            continue
        gaps.append((int(n), gap))
        reports.append(_report("grid_oracle_grad", f"n={n}", float(cfg.grad_tol), gap.grad_err, 0.0,
                               whole_space_energy_err=gap.whole_space_energy_err))
        reports.append(_report("grid_oracle_energy", f"n={n}", float(cfg.energy_tol), gap.energy_err, 0.0))
    for (n0, coarse), (n1, fine) in zip(gaps, gaps[1:]):
        for key in ("grad_err", "energy_err"):
            reports.append(_report(f"grid_oracle_refine_{key}", f"n={n0}->{n1}", 0.5 * getattr(coarse, key),
                                   getattr(fine, key), 1e-14))
    return reports


SUITES: Dict[str, Callable] = {
    "identities": identities_suite,
    "gronwall": gronwall_suite,
    "moser": moser_suite,
    "theorem1": theorem1_suite,
    "haarala": haarala_suite,
    "excess": excess_suite,
    "riesz": riesz_suite,
    "scaling": scaling_suite,
    "geometry": geometry_suite,
    "pipeline": pipeline_suite,
    "oracle": oracle_suite,
}


def run_suite(name, seed, workers=1) -> List[EstimateReport]:
    if name == "all":
        reports = []
        for key, fn in SUITES.items():
            logger.info("running suite %s", key)
            reports += fn(seed, workers)
        return reports
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}, expected one of {sorted(SUITES) + ['all']}", key="verify.suite")
    return SUITES[name](seed, workers)
