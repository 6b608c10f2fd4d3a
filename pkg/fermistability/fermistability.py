# Copyright 2024 The FermiStability Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# Command-line front end: fermistability <command> [flags]

import argparse
import json
import logging
import os
import sys
import warnings
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from fermistability import __version__
from fermistability.constants import (
    CRITICAL_MASS_TOL,
    EXIT_CODES,
    FORM_KEYS,
    MC_SAMPLES,
    RENORM_COLUMNS,
    SCAN_GAMMA_GRID,
    SCAN_N_LIST,
    TREND_N_LIST,
)
from fermistability.errors import DomainError, NonConvergence
from fermistability.nbody_forms import cutoff_renorm_residual, phi_slater_mc, phi_two_body, slater_mc_trend
from fermistability.numerics import QuadratureConfig
from fermistability.partial_wave import OffDiagonalMethod, builtin_charge, kernel_table, load_charge_csv
from fermistability.stability import SystemParams, critical_mass, stability_report
from fermistability.trials import TrialParams, Verdict, scan_grid, slater_charge
from fermistability.utils import format_float, parse_float_list, save_results, save_run_config, table_to_csv

logger = logging.getLogger("fermistability")


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code and the subcommand help."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_CODES["usage"], f"{self.prog}: error: {message}\n")


def float_list(text: str) -> List[float]:
    return parse_float_list(text)


def get_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse the command, its flags and the shared flags.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", type=str, default=None, help="write the result here instead of stdout")
    common.add_argument("--format", type=str, default=None, choices=["csv", "json"], help="output format")
    common.add_argument("--rel-tol", type=float, default=None, help="relative tolerance of adaptive quadrature")
    common.add_argument("--abs-tol", type=float, default=None, help="absolute tolerance of adaptive quadrature")
    common.add_argument("--threads", type=int, default=None, help="worker thread cap")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--quiet", action="store_true", help="no progress bars")

    parser = UsageParser(prog="fermistability", description="Stability of N fermions plus one particle")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("critical-mass", parents=[common], help="critical mass m*(N)")
    p.add_argument("--n", type=int, required=True, help="fermion count N")
    p.add_argument("--tol", type=float, default=CRITICAL_MASS_TOL, help="bracket width")
    p.add_argument("--method", type=str, default="lambda", choices=["lambda", "theta"], help="equation to solve")

    p = commands.add_parser("lambda", parents=[common], help="Lambda, Gamma and the regime")
    p.add_argument("--m", type=float, required=True, help="mass ratio")
    p.add_argument("--n", type=int, required=True, help="fermion count N")

    p = commands.add_parser("kernel", parents=[common], help="table of S_l(k)")
    p.add_argument("--l", type=int, required=True, help="angular momentum")
    p.add_argument("--m", type=float, required=True, help="mass ratio")
    p.add_argument("--n", type=int, required=True, help="fermion count N")
    p.add_argument("--k-max", type=float, required=True, help="largest k")
    p.add_argument("--steps", type=int, required=True, help="number of steps, the table has steps + 1 rows")

    form = commands.add_parser("form", help="charge forms").add_subparsers(dest="form_kind", required=True)
    p = form.add_parser("two-body", parents=[common], help="exact N=2 charge form")
    p.add_argument("--m", type=float, required=True, help="mass ratio")
    p.add_argument("--alpha", type=float, default=0.0, help="coupling")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="spectral shift")
    p.add_argument("--charge", type=str, required=True, help="built-in name or two-column CSV file")
    p.add_argument("--l", type=int, default=1, help="channel of a CSV charge")
    p.add_argument(
        "--method", type=str, default="direct", choices=[m.value for m in OffDiagonalMethod], help="off-diagonal route"
    )

    p = form.add_parser("slater-mc", parents=[common], help="Monte Carlo N=3 Slater charge form")
    p.add_argument("--m", type=float, required=True, help="mass ratio")
    p.add_argument("--n-fermions", type=int, default=3, help="fermion count, 3 only")
    p.add_argument("--n", type=float, required=True, help="dilation n >= 1")
    p.add_argument("--gamma", type=float, required=True, help="width gamma in (0, 1)")
    p.add_argument("--beta", type=float, default=None, help="bump scale, default n^-2")
    p.add_argument("--ell", type=int, default=2, help="azimuthal phase of the bump")
    p.add_argument("--alpha", type=float, default=0.0, help="coupling")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="spectral shift")
    p.add_argument("--samples", type=int, default=MC_SAMPLES, help="samples per part")
    p.add_argument("--seed", type=int, default=0, help="master seed")

    scan = commands.add_parser("instability", help="instability scans").add_subparsers(dest="scan_kind", required=True)
    p = scan.add_parser("scan", parents=[common], help="trial energies over (gamma, n)")
    p.add_argument("--m", type=float, required=True, help="mass ratio")
    p.add_argument("--n-fermions", type=int, required=True, help="fermion count N")
    p.add_argument("--gamma-grid", type=float_list, default=SCAN_GAMMA_GRID, help="list a,b,c or range a:b:step")
    p.add_argument("--n-list", type=float_list, default=SCAN_N_LIST, help="list a,b,c or range a:b:step")

    p = scan.add_parser("slater-trend", parents=[common], help="Monte Carlo N=3 Slater energies over n")
    p.add_argument("--m", type=float, required=True, help="mass ratio")
    p.add_argument("--gamma", type=float, required=True, help="width gamma in (0, 1)")
    p.add_argument("--n-list", type=float_list, default=TREND_N_LIST, help="increasing dilations >= 1")
    p.add_argument("--alpha", type=float, default=0.0, help="coupling")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="spectral shift")
    p.add_argument("--samples", type=int, default=MC_SAMPLES, help="samples per part and dilation")
    p.add_argument("--seed", type=int, default=0, help="master seed")

    renorm = commands.add_parser("renorm", help="cutoff renormalization")
    renorm = renorm.add_subparsers(dest="renorm_kind", required=True)
    p = renorm.add_parser("check", parents=[common], help="residual after removing the 4 pi R divergence")
    p.add_argument("--r-list", type=float_list, required=True, help="cutoffs")
    p.add_argument("--m", type=float, required=True, help="mass ratio")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="spectral shift")
    p.add_argument("--alpha", type=float, default=0.0, help="coupling entering mu")
    p.add_argument("--spectators", type=float_list, default=[], help="flattened spectator momenta x1,y1,z1,...")

    return parser.parse_args(argv)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DomainError(message)


def validate_args(args: argparse.Namespace) -> None:
    """Range checks on numeric flags before any computation."""
    for name in ("m", "lam", "k_max", "tol", "rel_tol"):
        value = getattr(args, name, None)
        if value is not None:
            _require(value > 0 and np.isfinite(value), f"--{name.replace('_', '-')} must be positive, got {value}")
    if getattr(args, "abs_tol", None) is not None:
        _require(args.abs_tol >= 0, f"--abs-tol must be nonnegative, got {args.abs_tol}")
    if getattr(args, "threads", None) is not None:
        _require(args.threads >= 1, f"--threads must be at least 1, got {args.threads}")
    if args.command in ("critical-mass", "lambda", "kernel"):
        _require(args.n >= 2, f"--n must be at least 2, got {args.n}")
    if args.command == "kernel":
        _require(args.l >= 0, f"--l must be nonnegative, got {args.l}")
        _require(args.steps >= 1, f"--steps must be at least 1, got {args.steps}")
    if getattr(args, "n_fermions", None) is not None:
        _require(args.n_fermions >= 2, f"--n-fermions must be at least 2, got {args.n_fermions}")
    if getattr(args, "form_kind", None) == "slater-mc":
        _require(args.samples >= 2, f"--samples must be at least 2, got {args.samples}")
        _require(args.n >= 1, f"--n must be at least 1, got {args.n}")
        _require(0 < args.gamma < 1, f"--gamma must lie in (0, 1), got {args.gamma}")
    if getattr(args, "scan_kind", None) == "scan":
        _require(all(0 < g < 1 for g in args.gamma_grid), "--gamma-grid values must lie in (0, 1)")
        _require(len(args.n_list) >= 4, "--n-list needs at least 4 dilations")
        _require(all(n >= 1 for n in args.n_list), "--n-list values must be >= 1")
    if getattr(args, "scan_kind", None) == "slater-trend":
        _require(args.samples >= 2, f"--samples must be at least 2, got {args.samples}")
        _require(0 < args.gamma < 1, f"--gamma must lie in (0, 1), got {args.gamma}")
        _require(len(args.n_list) >= 2, "--n-list needs at least 2 dilations")
        _require(args.n_list[0] >= 1, "--n-list values must be >= 1")
        _require(all(b > a for a, b in zip(args.n_list, args.n_list[1:])), "--n-list must be increasing")
    if getattr(args, "renorm_kind", None) == "check":
        _require(all(r > 0 for r in args.r_list), "--r-list values must be positive")
        _require(len(args.spectators) % 3 == 0, "--spectators takes whole 3-vectors")


def run_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Fully resolved configuration of this run."""
    config = {key: value for key, value in vars(args).items() if key not in ("verbose", "quiet")}
    config["quadrature"] = quadrature_config(args).to_dict()
    config["version"] = __version__
    return config


def quadrature_config(args: argparse.Namespace) -> QuadratureConfig:
    overrides = {}
    if args.rel_tol is not None:
        overrides["rel_tol"] = args.rel_tol
    if args.abs_tol is not None:
        overrides["abs_tol"] = args.abs_tol
    return QuadratureConfig(**overrides)


def emit_table(df: pd.DataFrame, args: argparse.Namespace) -> None:
    if (args.format or "csv") == "json":
        emit_json(df.to_dict(orient="records"), args)
        return
    text = table_to_csv(df, args.output)
    if args.output is None:
        sys.stdout.write(text)
    else:
        logger.info(f"Wrote {len(df)} rows to {args.output}")


def emit_json(result: Any, args: argparse.Namespace) -> None:
    if args.output is None:
        sys.stdout.write(json.dumps(result, indent=4, sort_keys=True) + "\n")
    else:
        save_results(result if isinstance(result, dict) else {"rows": result}, args.output)
        logger.info(f"Wrote results to {args.output}")


def run_critical_mass(args: argparse.Namespace) -> None:
    m_star = critical_mass(args.n, args.tol, args.method)
    logger.info(f"m*({args.n}) = {m_star:.12g}")
    if args.format == "json":
        emit_json({"N": args.n, "m_star": m_star}, args)
    else:
        sys.stdout.write(format_float(m_star) + "\n")


def run_lambda(args: argparse.Namespace) -> None:
    report = stability_report(args.m, args.n)
    result = {
        "Lambda": report.lambda_mn,
        "Gamma": report.gamma_mn,
        "m_star_2": report.m_star_2,
        "m_star_N": report.m_star_n,
        "regime": report.regime.value,
    }
    if args.format == "json":
        emit_json(result, args)
        return
    for key in ("Lambda", "Gamma", "m_star_2", "m_star_N"):
        sys.stdout.write(f"{key}={format_float(result[key])}\n")
    sys.stdout.write(f"regime={result['regime']}\n")


def run_kernel(args: argparse.Namespace) -> None:
    table = kernel_table(args.l, args.m, args.n, args.k_max, args.steps, workers=args.threads, progress=not args.quiet)
    emit_table(table.to_frame(), args)


def run_form(args: argparse.Namespace) -> None:
    if args.form_kind == "two-body":
        charge = load_charge_csv(args.charge, l=args.l) if os.path.isfile(args.charge) else builtin_charge(args.charge)
        params = SystemParams(m=args.m, n_fermions=2, alpha=args.alpha, lam=args.lam)
        logger.info(f"*** Two-body form of {args.charge} at {params} ***")
        result = phi_two_body(charge, params, args.method)
    else:
        params = SystemParams(m=args.m, n_fermions=args.n_fermions, alpha=args.alpha, lam=args.lam)
        xi = slater_charge(TrialParams(args.n, args.gamma, args.beta, args.ell), args.n_fermions)
        result = phi_slater_mc(xi, params, args.samples, args.seed, workers=args.threads, progress=not args.quiet)
    emit_json({key: result.to_dict()[key] for key in FORM_KEYS}, args)


def emit_verdict(
    df: pd.DataFrame, verdict: Verdict, selected_gamma: Optional[float], args: argparse.Namespace
) -> None:
    """
    Table of a scan followed by its verdict. JSON on stdout carries both in one object; otherwise
    the lines verdict=<v> and selected_gamma=<g> always end stdout.
    """
    if (args.format or "csv") == "json":
        result = {"rows": df.to_dict(orient="records"), "verdict": verdict.value, "selected_gamma": selected_gamma}
        emit_json(result, args)
        if args.output is None:
            return
    else:
        emit_table(df, args)
    selected = "None" if selected_gamma is None else format_float(selected_gamma)
    sys.stdout.write(f"verdict={verdict.value}\nselected_gamma={selected}\n")


def run_scan(args: argparse.Namespace) -> str:
    if args.scan_kind == "slater-trend":
        return run_slater_trend(args)
    logger.info(f"*** Scanning m={args.m}, N={args.n_fermions} over {len(args.gamma_grid)} widths ***")
    result = scan_grid(
        args.m, args.n_fermions, args.gamma_grid, args.n_list, workers=args.threads, progress=not args.quiet
    )
    logger.info(f"verdict {result.verdict.value}, selected gamma {result.selected_gamma}")
    emit_verdict(result.to_frame(), result.verdict, result.selected_gamma, args)
    return result.verdict.value


def run_slater_trend(args: argparse.Namespace) -> str:
    logger.info(f"*** Sampling the N=3 Slater trend at m={args.m}, gamma={args.gamma} over n={args.n_list} ***")
    trend = slater_mc_trend(
        args.m,
        args.gamma,
        args.n_list,
        args.samples,
        args.seed,
        alpha=args.alpha,
        lam=args.lam,
        workers=args.threads,
        progress=not args.quiet,
    )
    selected = args.gamma if trend.verdict is Verdict.DIVERGING else None
    emit_verdict(trend.to_frame(), trend.verdict, selected, args)
    return trend.verdict.value


def run_renorm(args: argparse.Namespace) -> None:
    spectators = np.asarray(args.spectators, dtype=float).reshape(-1, 3)
    cfg = quadrature_config(args)
    rows = []
    for cutoff in args.r_list:
        residual = cutoff_renorm_residual(spectators, cutoff, args.lam, args.m, args.alpha, cfg)
        rows.append([cutoff, args.m, args.lam, residual.integral, residual.residual, residual.mu])
    emit_table(pd.DataFrame(rows, columns=RENORM_COLUMNS), args)


COMMANDS = {
    "critical-mass": run_critical_mass,
    "lambda": run_lambda,
    "kernel": run_kernel,
    "form": run_form,
    "instability": run_scan,
    "renorm": run_renorm,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = get_args(argv)
    ###############
    # Setup logging
    ###############
    logging.basicConfig(
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[logging.StreamHandler(sys.stderr)],
    )
    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.getLogger("fermistability").setLevel(log_level)
    logging.captureWarnings(True)
    warnings.simplefilter("default")

    try:
        validate_args(args)
        config = run_config(args)
        if args.output is not None:
            save_run_config(config, args.output)
        else:
            logger.info(f"Run configuration: {json.dumps(config, sort_keys=True)}")
        outcome = COMMANDS[args.command](args)
        if outcome is not None and args.output is not None:
            save_run_config(dict(config, verdict=outcome), args.output)
    except DomainError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CODES["domain"]
    except NonConvergence as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CODES["non_convergence"]
    return EXIT_CODES["success"]


if __name__ == "__main__":
    sys.exit(main())
