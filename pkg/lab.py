""" Entry point: solve, verify, sweep and run the mollification pipeline.

    python lab.py solve-radial --config configs/toy_datum.yaml
    python lab.py verify --suite all --seed 7 --workers 4
    python lab.py sweep radial.num_nodes=8000

Dotted key=value overrides after the command are merged last. Exit code
0 when every report passes, 1 when any fails, 2 on a config error. """

import argparse
import json
import logging
import os
import sys

import numpy as np
import yaml
from omegaconf.errors import OmegaConfBaseException

from config import CONFIG, load_config
from born_infeld.densities import RadialDensity
from born_infeld.errors import ConfigError, SolverError
from born_infeld.fields import CartesianGrid, ParamSet, RadialGrid, write_field_csv
from born_infeld.mollify import run_pipeline
from born_infeld.radial import asymptotic_margin, ode_residual, radial_energy, radial_solve
from born_infeld.reports import exit_code, init_wandb, log_to_wandb, to_json_safe, write_reports
from born_infeld.suites import run_suite, sweep
from born_infeld.variational import compare_with_oracle, minimize_energy, weak_residual

logger = logging.getLogger("lab")

COMMANDS = ["solve-radial", "solve-grid", "verify", "sweep", "pipeline"]


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Born-Infeld prescribed mean curvature lab")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="YAML overlay merged over configs/default.yaml")
    parser.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--suite", default=None, help="verify suite, or all")
    parser.add_argument("overrides", nargs="*", help="dotted key=value config overrides")
    return parser.parse_intermixed_args(argv)


def setup(args):
    """ Merge config, apply the flags and validate before any computation """
    overrides = list(args.overrides)
    for key, value in (("out_dir", args.out), ("seed", args.seed), ("workers", args.workers),
                       ("verify.suite", args.suite)):
        if value is not None:
            overrides.append(f"{key}={value}")
    try:
        load_config(args.config, include_cmd_line=False, overrides=overrides)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {args.config}: {e}") from e
    except OmegaConfBaseException as e:
        raise ConfigError(str(e)) from e

    logging.basicConfig(level=getattr(logging, str(CONFIG.get("log_level", "INFO")).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        params = ParamSet.from_config(CONFIG.params)
        density = RadialDensity.from_config(CONFIG.density)
        seed = int(CONFIG.seed)
        workers = int(CONFIG.workers)
        out_dir = str(CONFIG.out_dir)
    except OmegaConfBaseException as e:
        raise ConfigError(str(e)) from e
    if not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}", key="seed")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}", key="workers")
    os.makedirs(out_dir, exist_ok=True)
    return params, density, seed, workers, out_dir


def write_json(obj, path):
    with open(path, "w") as f:
        json.dump(to_json_safe(obj), f, indent=2, sort_keys=True)
        f.write("\n")


def solve_radial(params, density, out_dir):
    grid = RadialGrid.from_config(CONFIG.radial, dim=params.N)
    sol = radial_solve(density, params, grid)
    sol.to_csv(os.path.join(out_dir, "radial.csv"))
    ok = ~sol.degenerate
    diagnostics = {
        "params": params.asdict(), "density": density.describe(),
        "in_lq_loc": density.in_lq_loc(params.q, params.N),
        "max_abs_uprime": float(np.max(np.abs(sol.uprime))),
        "degenerate_nodes": int(np.sum(sol.degenerate)),
        "ode_residual": float(np.max(np.abs(ode_residual(sol)[ok]))) if np.any(ok) else None,
        "asymptotic_margin": asymptotic_margin(sol),
        "energy": radial_energy(sol),
    }
    write_json(diagnostics, os.path.join(out_dir, "radial.json"))
    print(f"radial: max|u'| = {diagnostics['max_abs_uprime']:.12f}, energy = {diagnostics['energy']:.6g}")
    return 0


def solve_grid(params, density, out_dir):
    grid = CartesianGrid.from_config(CONFIG.grid)
    if grid.dim != params.N:
        raise ConfigError(f"grid.dim = {grid.dim} must equal params.N = {params.N}", key="grid.dim")
    sol = minimize_energy(density.sample(grid), grid)
    write_field_csv(sol.u, os.path.join(out_dir, "u.csv"), name="u")
    write_field_csv(sol.rho, os.path.join(out_dir, "rho.csv"), name="rho")
    diagnostics = sol.diagnostics()
    diagnostics["weak_residual"] = weak_residual(sol)._asdict()
    oracle = radial_solve(density, params, RadialGrid.from_config(CONFIG.radial, dim=params.N))
    diagnostics.update({f"oracle_{k}": v for k, v in compare_with_oracle(sol, oracle)._asdict().items()})
    write_json(diagnostics, os.path.join(out_dir, "grid.json"))
    if CONFIG.output.write_hdf5:
        sol.to_h5(os.path.join(out_dir, "solution.h5"))
    print(f"grid: {diagnostics['message']}, energy = {sol.energy:.10g}, max|grad u| = {sol.theta:.6f}")
    return 0 if sol.converged else 1


def finish(reports, out_dir, stem):
    write_reports(reports, out_dir, stem)
    for report in reports:
        print(report.summary_line())
    if CONFIG.use_wandb:
        log_to_wandb(reports)
    failed = sum(r.status == "fail" for r in reports)
    rejected = sum(r.rejected for r in reports)
    print(f"{len(reports)} reports: {len(reports) - failed - rejected} pass, {failed} fail, {rejected} rejected")
    return exit_code(reports)


def run_pipeline_command(params, out_dir, workers):
    cfg = CONFIG.pipeline
    grid = CartesianGrid.from_config(cfg.grid)
    rho = RadialDensity.from_config(cfg.density).sample(grid)
    try:
        summary = run_pipeline(rho, list(cfg.n_list), params, workers=workers)
    except SolverError as e:
        logger.error("pipeline aborted after %d stages: %s", len(e.partial), e)
        write_json({"error": str(e), "stages": [s.row() for s in e.partial]},
                   os.path.join(out_dir, "pipeline.json"))
        return 1
    summary.write(out_dir)
    for stage in summary.stages:
        print(f"n={stage.n:<4} sup|u|={stage.sup_u:.6g} theta={stage.theta_n:.6f} "
              f"W2q={stage.w2q_norm:.6g} err={stage.err_inf:.3g}")
    return finish(summary.reports, out_dir, "pipeline_reports")


def main(argv=None):
    args = parse_args(argv)
    try:
        params, density, seed, workers, out_dir = setup(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    print(f"Name of run: {CONFIG.name}")
    if CONFIG.use_wandb:
        init_wandb(CONFIG.name, CONFIG)

    try:
        if args.command == "solve-radial":
            return solve_radial(params, density, out_dir)
        if args.command == "solve-grid":
            return solve_grid(params, density, out_dir)
        if args.command == "verify":
            reports = run_suite(str(CONFIG.verify.suite), seed, workers)
            return finish(reports, out_dir, "reports")
        if args.command == "sweep":
            return finish(sweep(seed, workers), out_dir, "sweep")
        return run_pipeline_command(params, out_dir, workers)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OmegaConfBaseException as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
