"""
Main Bubbling Lab Script

This script drives the collapsing-vortex bubbling laboratory:
1. Check the Green's function (greens-test)
2. Solve the base state (base-solve)
3. Assemble the approximate solution (ansatz)
4. Solve at one collapse parameter (solve)
5. Sweep over collapse parameters and fit rates (sweep)
6. Measure blow-up diagnostics on a stored field (diagnose)
"""

import argparse
import logging
import math
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from bubbling.base_state import (
    WeightSpec,
    assemble_h,
    base_exists,
    load_base,
    save_base,
    solve_base,
)
from bubbling.bubble_ansatz import (
    ansatz_mass_split,
    assemble_ansatz,
    derive_params,
    inner_density_error,
    interface_jumps,
    outer_deviation,
)
from bubbling.config import LOG_LEVEL, OUTPUT_DIR, ProblemConfig, config_summary, load_config
from bubbling.diagnostics import (
    build_problem,
    corrected_outer_error,
    default_radii,
    local_mass,
    outer_error,
    pohozaev_check,
    profile_fit,
    rate_defect,
    run_sweep,
    sigma0_curve,
    solve_point,
)
from bubbling.errors import BubblingError, ConfigError
from bubbling.field_io import dump_field, load_field, write_json
from bubbling.greens import GreenEvaluator, robin_constant_oracle
from bubbling.reduction import relative_residual
from bubbling.torus_spectral import make_grid

# Load environment variables
load_dotenv()

logger = logging.getLogger("bubbling.cli")


def parse_overrides(pairs: Optional[List[str]]) -> Dict[str, Any]:
    """Turn repeated --set key=value options into a dict."""
    overrides: Dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got '{pair}'")
        overrides[key.strip()] = value.strip()
    return overrides


def load_or_solve_base(config: ProblemConfig, output_dir: str, force: bool = False):
    """Reuse output_dir/base when it matches ρ and the base grid; solve otherwise."""
    prefix = os.path.join(output_dir, "base")
    if not force and base_exists(prefix):
        base = load_base(prefix)
        if abs(base.rho - config.rho) < 1e-12 and base.w.grid.n == config.base_grid_n:
            print(f"Loaded base state from {prefix}.pfld")
            return base
    greens = GreenEvaluator(make_grid(config.base_grid_n), sigma=config.ewald_sigma)
    h = assemble_h(WeightSpec.from_config(config), greens)
    base = solve_base(config.rho, h, newton_tol=config.newton_tol, max_iter=config.max_newton_iter,
                      margin_tol=config.margin_tol)
    paths = save_base(base, prefix)
    print(f"Base state saved to {paths['field']}")
    return base


def run_greens_test(config: ProblemConfig, output_dir: str, n: int) -> Dict[str, Any]:
    """Robin constant, mean, symmetry and translation checks of the Green's function."""
    print("\n=== Step 1: Checking the Green's function ===")
    greens = GreenEvaluator(make_grid(n), sigma=config.ewald_sigma)
    rng = np.random.default_rng(0)
    points = rng.uniform(0.0, 1.0, size=(20, 2))
    sources = rng.uniform(0.0, 1.0, size=(20, 2))
    forward = np.array([greens.green_values(points[i:i + 1], sources[i])[0] for i in range(20)])
    backward = np.array([greens.green_values(sources[i:i + 1], points[i])[0] for i in range(20)])
    shift = rng.uniform(0.0, 1.0, size=2)
    shifted = np.array([greens.green_values((points[i:i + 1] + shift) % 1.0, (sources[i] + shift) % 1.0)[0]
                        for i in range(20)])
    oracle = robin_constant_oracle()
    report = {
        "n": n,
        "sigma": config.ewald_sigma,
        "robin": greens.robin,
        "robin_oracle": oracle,
        "robin_error": abs(greens.robin - oracle),
        "grid_mean": float(greens.green((0.3, 0.7)).values.mean()),
        "symmetry_error": float(np.abs(forward - backward).max()),
        "translation_error": float(np.abs(forward - shifted).max()),
        "spectral_defect_k1": greens.spectral_defect((0.3, 0.7), 1),
    }
    write_json(report, os.path.join(output_dir, "greens_report.json"))
    print(f"Robin constant {report['robin']:.12f} (oracle {oracle:.12f}, error {report['robin_error']:.2e})")
    return report


def run_base_solve(config: ProblemConfig, output_dir: str) -> Dict[str, Any]:
    print("\n=== Step 1: Solving the base state ===")
    base = load_or_solve_base(config, output_dir, force=True)
    report = {"rho": base.rho, "residual": base.residual, "margin": base.margin,
              "iterations": base.iterations, "history": list(base.history), "degenerate": base.degenerate}
    print(f"Residual {base.residual:.3e} after {base.iterations} Newton steps, margin {base.margin:.6f}")
    return report


def run_ansatz(config: ProblemConfig, output_dir: str) -> Dict[str, Any]:
    print("\n=== Step 1: Loading the base state ===")
    base = load_or_solve_base(config, output_dir)

    print("\n=== Step 2: Assembling the approximate solution ===")
    problem = build_problem(config, base)
    params = derive_params(problem, config.q0)
    ansatz = assemble_ansatz(problem, params)
    centre = problem.centre(params.q)
    report = {
        "t": problem.t,
        "grid_n": problem.grid.n,
        "params": params.to_report(),
        "mean_ustar": ansatz.mean_ustar,
        "mass_split": ansatz_mass_split(problem, ansatz),
        "interface": interface_jumps(problem, params),
        "inner_density_error": inner_density_error(problem, ansatz),
        "outer_deviation": outer_deviation(problem, ansatz.U.values, centre, 2.0 * problem.t * problem.R0),
    }
    dump_field(ansatz.U, os.path.join(output_dir, f"U_t{problem.t:.6g}.pfld"))
    write_json({"config": config_summary(config), **report}, os.path.join(output_dir, "ansatz_report.json"))
    print(f"lambda = {params.lam:.6f}, Lambda = {params.Lambda:.4g}, |mean u*| = {abs(ansatz.mean_ustar):.3e}")
    return report


def run_solve(config: ProblemConfig, output_dir: str) -> Dict[str, Any]:
    print("\n=== Step 1: Loading the base state ===")
    base = load_or_solve_base(config, output_dir)

    print("\n=== Step 2: Solving the reduced problem ===")
    problem = build_problem(config, base)
    report, u = solve_point(problem)

    print("\n=== Step 3: Saving the solution ===")
    field_path = os.path.join(output_dir, f"u_t{problem.t:.6g}.pfld")
    dump_field(u, field_path)
    data = {"config": config_summary(config), **report.model_dump()}
    write_json(data, os.path.join(output_dir, "solve_report.json"))
    print(f"q* = ({report.q_star[0]:.3e}, {report.q_star[1]:.3e}), residual {report.residual:.3e}")
    print(f"rho_t = {report.rho_t:.6f} (8pi = {8.0 * math.pi:.6f}), lambda_meas = {report.lambda_meas:.6f}")
    print(f"Solution saved to {field_path}")
    return data


def run_sweep_command(config: ProblemConfig, output_dir: str, resume: bool, save_fields: bool) -> Dict[str, Any]:
    print("\n=== Step 1: Loading the base state ===")
    base = load_or_solve_base(config, output_dir)

    print("\n=== Step 2: Sweeping the collapse parameter ===")
    result = run_sweep(config, output_dir=output_dir, resume=resume, base=base, save_fields=save_fields)

    print("\n=== Sweep completed ===")
    print(f"Succeeded for {len(result.reports)} of {len(result.t_values)} values of t")
    for name, fit in sorted(result.fits.items()):
        if "refused" in fit:
            print(f"  {name}: refused ({fit['refused']})")
        else:
            print(f"  {name}: exponent {fit['exponent']:.3f} ± {fit['half_width']:.3f}")
    return result.to_dict()


def run_diagnose(config: ProblemConfig, output_dir: str, field_path: str) -> Dict[str, Any]:
    print("\n=== Step 1: Loading the field ===")
    u_field = load_field(field_path)
    config = config.model_validate({**config.model_dump(), "grid_n": u_field.grid.n})
    base = load_or_solve_base(config, output_dir)
    problem = build_problem(config, base)
    u = u_field.values - u_field.values.mean()

    print("\n=== Step 2: Measuring blow-up diagnostics ===")
    params = derive_params(problem, config.q0)
    centre = problem.centre(config.q0)
    fit = profile_fit(problem, u, eps=config.eps, Gamma=params.Gamma)
    peak = np.asarray(fit.p_t) * problem.t
    report = {
        "t": problem.t,
        "grid_n": problem.grid.n,
        "lambda_pred": params.lam - float(problem.w_at(centre)[0]),
        "lambda_meas": fit.lambda_meas,
        "p_t": list(fit.p_t),
        "rho_t": local_mass(problem, u, problem.t * problem.R0, centre),
        "sigma0_curve": sigma0_curve(problem, u, centre, default_radii(problem)),
        "pohozaev": pohozaev_check(problem, u, centre, params.Gamma),
        "outer_err": outer_error(problem, u, config.q0),
        "outer_corrected": corrected_outer_error(problem, u, peak, fit.rho_t),
        "eta_profile": fit.eta_max_weighted,
        "rate_defect": rate_defect(problem, fit),
        "residual": relative_residual(problem, u),
    }
    write_json({"config": config_summary(config), **report}, os.path.join(output_dir, "diagnose_report.json"))
    print(f"lambda_meas = {fit.lambda_meas:.6f}, rho_t = {report['rho_t']:.6f}, residual {report['residual']:.3e}")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Collapsing-vortex bubbling laboratory on the unit torus")
    parser.add_argument("--config", "-c", help="Path to a key=value problem configuration")
    parser.add_argument("--output-dir", "-o", default=OUTPUT_DIR, help="Directory for reports and field dumps")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a configuration key")
    commands = parser.add_subparsers(dest="command")

    greens = commands.add_parser("greens-test", help="Check the Green's function")
    greens.add_argument("--n", type=int, default=128, help="Grid points per axis")
    commands.add_parser("base-solve", help="Solve the base state and its margin")
    commands.add_parser("ansatz", help="Assemble and check the approximate solution")
    commands.add_parser("solve", help="Solve at the configured t")
    sweep = commands.add_parser("sweep", help="Solve over t_list and fit rates")
    sweep.add_argument("--resume", action="store_true", help="Resume from the sweep checkpoint")
    sweep.add_argument("--save-fields", action="store_true", help="Dump every final solution")
    diagnose = commands.add_parser("diagnose", help="Diagnose a stored solution field")
    diagnose.add_argument("--field", required=True, help="Path to a .pfld field dump")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 0

    logging.basicConfig(level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    os.makedirs(args.output_dir, exist_ok=True)
    try:
        config = load_config(args.config, parse_overrides(args.set))
        if args.command == "greens-test":
            run_greens_test(config, args.output_dir, args.n)
        elif args.command == "base-solve":
            run_base_solve(config, args.output_dir)
        elif args.command == "ansatz":
            run_ansatz(config, args.output_dir)
        elif args.command == "solve":
            run_solve(config, args.output_dir)
        elif args.command == "sweep":
            run_sweep_command(config, args.output_dir, args.resume, args.save_fields)
        elif args.command == "diagnose":
            run_diagnose(config, args.output_dir, args.field)
    except BubblingError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"Error ({type(exc).__name__}): {exc}", file=sys.stderr)
        if exc.details:
            print(f"Details: {exc.details}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
