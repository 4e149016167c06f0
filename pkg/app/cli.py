"""Command-line front end: bounds tables, matrix generation and verification,
session runs and parameter sweeps."""
import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.config import settings
from app.exceptions import ConfigurationError, MatrixSearchExhaustedError, ParameterError, QKDError
from app.services import bounds, gf2
from app.services.session_service import SWEEP_PARAMETERS, SessionService
from app.utils.file_utils import (
    load_run_config,
    output_path,
    read_matrix,
    write_matrix,
    write_session_csv,
    write_sweep_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_FAULT = 3


def _parse_grid(text: str) -> List[float]:
    values = [part.strip() for part in text.split(",") if part.strip()]
    if not values:
        raise ParameterError("Grid must contain at least one value")
    try:
        return [float(value) for value in values]
    except ValueError:
        raise ParameterError(f"Grid values must be numbers, got {text!r}")


def _bounds_row(epsilon: float, tau: float, r: int, m: int, tau_s: float, eps_star: float) -> Dict[str, Any]:
    report = bounds.bound_report(m, epsilon, tau, r)
    row: Dict[str, Any] = {
        "epsilon": epsilon,
        "tau": tau,
        "r": r,
        "m": m,
        "theta": report.theta,
        "H_raw": report.entropy_lower_bound_raw,
        "H_lower": report.entropy_lower_bound,
        "feasible_m_max": report.feasible_m_max,
        "net_gain_margin": report.net_gain_margin,
        "epsilon_star": eps_star,
    }
    try:
        params = bounds.derive_params(m, epsilon, tau, tau_s, r)
        row.update(s=params.s, n=params.n, d_K=params.d_k, q_min=params.q_min, feasible=params.feasible)
    except ParameterError as e:
        print(f"setup parameters unavailable for epsilon={epsilon}: {str(e)}", file=sys.stderr)
        row.update(s=None, n=None, d_K=None, q_min=None, feasible=None)
    return row


def cmd_bounds(
        epsilons: Sequence[float], tau: float, r: int, m: int, tau_s: float = 0.05,
        plan_deficit: Optional[float] = None,
) -> int:
    """
    Print theta(r), the entropy bound, feasibility, q_min, the net-gain margin and epsilon*.

    One row is printed per epsilon. Rows whose setup parameters cannot be
    derived (e.g. tau = 0) still show the bounds.
    """
    eps_star = bounds.epsilon_star()
    rows = [_bounds_row(epsilon, tau, r, m, tau_s, eps_star) for epsilon in epsilons]
    columns = [
        "epsilon", "tau", "r", "m", "s", "n", "d_K", "q_min", "feasible_m_max", "feasible",
        "theta", "H_raw", "H_lower", "net_gain_margin", "epsilon_star",
    ]
    print(pd.DataFrame(rows, columns=columns).to_string(index=False))
    if plan_deficit is not None:
        for epsilon in epsilons:
            planned = bounds.plan_r(m, epsilon, tau, plan_deficit)
            print(f"plan: epsilon={epsilon} smallest r with deficit <= {plan_deficit}: {planned}")
    return EXIT_OK


def cmd_genmat(m: int, r: int, d_k: int, seed: int, out_path: str) -> int:
    """Search a matrix and write it; exhaustion exits with the FAULT code and the best weight."""
    try:
        K = gf2.generate_pa_matrix(m, r, d_k, np.random.default_rng(seed))
    except MatrixSearchExhaustedError as e:
        print(f"FAULT: {str(e)}", file=sys.stderr)
        return EXIT_FAULT
    path = write_matrix(K, out_path)
    print(f"wrote {m}x{r} matrix with d_K >= {d_k} to {path}")
    return EXIT_OK


def cmd_verify(matrix_path: str, d_k: Optional[int]) -> int:
    K = read_matrix(matrix_path)
    report = gf2.min_combination_weight(K)
    print(f"min_weight={report.min_weight} full_rank={int(report.full_rank)} witness={gf2.to_bitstring(report.witness)}")
    passes = report.full_rank and (d_k is None or report.min_weight >= d_k)
    print("PASS" if passes else "FAIL")
    return EXIT_OK if passes else EXIT_VERIFY_FAILED


def cmd_run(config_path: str, seed: Optional[int] = None, sessions: Optional[int] = None,
            out: Optional[str] = None) -> int:
    """
    Run the configured sessions and write one CSV row per session.

    Validation failures are data; only a FAULT in some session gives a nonzero exit.
    """
    config = load_run_config(config_path, {"seed": seed, "sessions": sessions, "out": out})
    params = SessionService.derive_params(config)
    matrix = SessionService.load_matrix(config, params)
    records = SessionService.run_sessions(config, params=params, matrix=matrix)
    path = write_session_csv(records, output_path(config.out or "sessions.csv"))
    summary = SessionService.summarize(records)
    print(
        f"wrote {summary['sessions']} sessions to {path}: validation_rate={summary['validation_rate']:.3f} "
        f"mean_net_gain={summary['mean_net_gain']:.1f} faults={summary['fault_count']}"
    )
    return EXIT_FAULT if summary["fault_count"] else EXIT_OK


def cmd_sweep(config_path: str, parameter: str, grid: Sequence[float], seed: Optional[int] = None,
              sessions: Optional[int] = None, out: Optional[str] = None) -> int:
    """Run the configured sessions at every grid point and write one aggregate row per point."""
    if parameter not in SWEEP_PARAMETERS:
        raise ParameterError(f"Unknown sweep parameter '{parameter}'; choose from {', '.join(SWEEP_PARAMETERS)}")
    config = load_run_config(config_path, {"seed": seed, "sessions": sessions, "out": out})
    rows, _ = SessionService.sweep(config, parameter, grid)
    path = write_sweep_csv(rows, output_path(config.out or f"sweep_{parameter}.csv"))
    print(f"wrote {len(rows)} grid points to {path}")
    return EXIT_FAULT if any(row.fault_count for row in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdsim", description="Entanglement-based QKD simulator")
    parser.add_argument("--log-level", type=str, default=None, help="Overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    bounds_parser = commands.add_parser("bounds", help="Print setup parameters and security bounds")
    bounds_parser.add_argument("--epsilon", type=str, required=True, help="Threshold or comma-separated list")
    bounds_parser.add_argument("--tau", type=float, required=True)
    bounds_parser.add_argument("--r", type=int, required=True)
    bounds_parser.add_argument("--m", type=int, required=True)
    bounds_parser.add_argument("--tau-s", type=float, default=0.05)
    bounds_parser.add_argument("--plan", type=float, default=None, help="Report the smallest r with this deficit")

    genmat_parser = commands.add_parser("genmat", help="Search a privacy-amplification matrix")
    genmat_parser.add_argument("--m", type=int, required=True)
    genmat_parser.add_argument("--r", type=int, required=True)
    genmat_parser.add_argument("--d-k", type=int, required=True)
    genmat_parser.add_argument("--seed", type=int, default=0)
    genmat_parser.add_argument("--out", type=str, required=True)

    verify_parser = commands.add_parser("verify", help="Exhaustively verify a matrix file")
    verify_parser.add_argument("--matrix", type=str, required=True)
    verify_parser.add_argument("--d-k", type=int, default=None)

    for name, help_text in (("run", "Run sessions from a config file"), ("sweep", "Sweep one parameter")):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", type=str, required=True)
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--sessions", type=int, default=None)
        sub.add_argument("--out", type=str, default=None)
        if name == "sweep":
            sub.add_argument("--parameter", type=str, required=True, choices=SWEEP_PARAMETERS)
            sub.add_argument("--grid", type=str, required=True, help="Comma-separated values")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "bounds":
        return cmd_bounds(_parse_grid(args.epsilon), args.tau, args.r, args.m, args.tau_s, args.plan)
    if args.command == "genmat":
        return cmd_genmat(args.m, args.r, args.d_k, args.seed, args.out)
    if args.command == "verify":
        return cmd_verify(args.matrix, args.d_k)
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.sessions, args.out)
    return cmd_sweep(args.config, args.parameter, _parse_grid(args.grid), args.seed, args.sessions, args.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or settings.LOG_LEVEL
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        return _dispatch(args)
    except (ConfigurationError, ParameterError) as e:
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except QKDError as e:
        logger.error(f"FAULT: {str(e)}")
        print(f"FAULT: {str(e)}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
