"""
Command-line entry points for the experiments.

    python -m harness.cli solve configs/bench.toml
    python -m harness.cli sweep configs/bench.toml --sigmas 0.1,0.01,0
    python -m harness.cli picard configs/bench.toml --horizons 0.05,0.1,0.2,0.4
    python -m harness.cli uniqueness configs/bench.toml --inits 2
    python -m harness.cli verify configs/bench.toml --suite spaces semigroup
    python -m harness.cli semigroup configs/bench.toml --decay 0 1.5 2

Exit codes: 0 when every pass flag is true, 1 otherwise, 2 for usage or config errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from fmfg.function_spaces import (
    CompositionMap,
    band_corpus,
    random_field,
    verify_chain_rule,
    verify_interpolation_inequality,
    verify_kato_ponce,
    verify_norm_equivalence,
    verify_sobolev_embedding,
    verify_time_embedding,
)
from fmfg.mfg import (
    initial_guesses,
    picard_short_time,
    solve_mfg_fixed_point,
    uniqueness_experiment,
    vanishing_viscosity_sweep,
)
from fmfg.model import verify_coupling_assumptions, verify_hamiltonian_assumptions
from fmfg.reports import InequalityReport
from fmfg.semigroup import (
    Trajectory,
    decay_suite,
    default_decay_ladder,
    heat_step,
    measure_decay_rate,
    time_grid,
    verify_parabolic_regularity,
)

from .artifacts import ArtifactWriter, Command, ExperimentManifest, report_rows
from .config_loader import ConfigError, LoadedConfig, load_config
from .field_io import FieldFormatError

logger = logging.getLogger(__name__)

SUITES = ("spaces", "hamiltonian", "coupling", "semigroup")


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", type=Path, help="TOML problem file")
    common.add_argument("--output-dir", type=Path, default=None,
                        help="Directory for CSV/JSON/field outputs (default: results/<command>)")
    common.add_argument("--seed", type=int, default=None, help="Override experiment.seed")
    common.add_argument("--verbose", action="store_true", help="Log outer-loop iterations")

    parser = argparse.ArgumentParser(prog="fmfg", description="Fractional MFG solver and verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve", parents=[common], help="Damped fixed-point solve")
    sweep = sub.add_parser("sweep", parents=[common], help="Vanishing-viscosity ladder")
    sweep.add_argument("--sigmas", type=_float_list, default=None,
                       help="Descending viscosities ending at 0, e.g. 0.1,0.01,0")
    picard = sub.add_parser("picard", parents=[common], help="Short-time contraction study")
    picard.add_argument("--horizons", type=_float_list, default=None, help="Ascending horizons, e.g. 0.05,0.1,0.2")
    unique = sub.add_parser("uniqueness", parents=[common], help="Solve from several initial guesses")
    unique.add_argument("--inits", type=int, default=None, help="Number of initial guesses (>= 2)")
    verify = sub.add_parser("verify", parents=[common], help="Inequality verifiers")
    verify.add_argument("--suite", nargs="+", choices=SUITES, default=list(SUITES))
    semigroup = sub.add_parser("semigroup", parents=[common], help="Smoothing-rate measurement")
    semigroup.add_argument("--decay", nargs=3, type=float, metavar=("NU", "GAMMA", "P"), default=(0.0, 1.5, 2.0))
    return parser


def _banner(title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _run_solve(loaded: LoadedConfig, writer: ArtifactWriter) -> bool:
    problem, config = loaded.problem, loaded.solver
    _banner("SOLVING MFG FIXED POINT")
    pair = solve_mfg_fixed_point(problem, config)
    diag = pair.diagnostics

    writer.write_csv("iterations", [{"iteration": i + 1, "gap": g} for i, g in enumerate(diag.gap_history)])
    writer.write_trajectory(pair.u, problem.s_exp, problem.sigma)
    writer.write_trajectory(pair.m, problem.s_exp, problem.sigma)
    passed = (
        diag.converged
        and diag.hjb_residual < config.residual_tol
        and diag.fp_residual < config.residual_tol
        and diag.fp.mass_error_max < 1e-12
    )
    writer.write_json("solve_summary", {"problem": problem.describe(), "diagnostics": diag.to_dict(), "pass": passed})

    print(f"Outer iterations: {diag.outer_iterations}")
    print(f"Final gap: {diag.final_fixed_point_gap:.3e} (converged: {diag.converged})")
    print(f"Residuals: hjb {diag.hjb_residual:.3e}, fp {diag.fp_residual:.3e}")
    print(f"Mass error: {diag.fp.mass_error_max:.3e}")
    return passed


def _run_sweep(loaded: LoadedConfig, writer: ArtifactWriter, sigmas: Optional[List[float]]) -> bool:
    sigmas = sigmas or loaded.experiment.sigmas
    _banner(f"VANISHING VISCOSITY SWEEP ({len(sigmas)} rungs)")
    report = vanishing_viscosity_sweep(loaded.problem, sigmas, loaded.solver)
    writer.write_csv("sweep", report.rows())
    writer.write_json("sweep_summary", report.model_dump(mode="json", by_alias=True))
    for row in report.rows():
        print(f"  sigma={row['sigma']:<8g} sup|u-u0|={row['sup_errors_u']:.3e}  |Du-Du0|={row['lp_errors_du']:.3e}")
    if report.nonconverged:
        print(f"Non-converged rungs: {report.nonconverged}")
    return report.passed and not report.nonconverged


def _run_picard(loaded: LoadedConfig, writer: ArtifactWriter, horizons: Optional[List[float]]) -> bool:
    horizons = horizons or loaded.experiment.horizons
    _banner("SHORT-TIME PICARD CONTRACTION")
    _, report = picard_short_time(loaded.problem, loaded.solver, horizons)
    writer.write_csv("picard", report.rows())
    writer.write_json("picard_summary", report.model_dump(mode="json", by_alias=True))
    for T, L in zip(report.horizons, report.contraction_factors):
        print(f"  T={T:<6g} L(T)={L:.4f}")
    slope = "n/a" if report.fitted_slope is None else f"{report.fitted_slope:.3f}"
    print(f"Fitted slope: {slope} (expected {report.expected_slope:.3f})")
    return report.passed


def _run_uniqueness(loaded: LoadedConfig, writer: ArtifactWriter, inits: Optional[int]) -> bool:
    count = inits or loaded.experiment.inits
    _banner(f"UNIQUENESS EXPERIMENT ({count} initial guesses)")
    guesses = initial_guesses(loaded.problem, loaded.solver, count, seed=loaded.solver.seed)
    report = uniqueness_experiment(loaded.problem, guesses, loaded.solver)
    writer.write_csv("uniqueness", [{"pair": i, "gap": g} for i, g in enumerate(report.pairwise_gaps)])
    writer.write_json("uniqueness_summary", report.model_dump(mode="json", by_alias=True))
    print(f"Max gap: {report.max_gap:.3e} (tolerance {10 * report.tolerance:.1e})")
    if report.passed is None:
        print(f"No uniqueness claim for {report.coupling_mode} coupling; gap reported only")
    return report.passed is not False and all(report.converged)


def _time_embedding_reports(loaded: LoadedConfig, seed: int) -> List[InequalityReport]:
    problem = loaded.problem
    rng = np.random.default_rng(seed)
    start = random_field(problem.grid, rng)
    op = problem.operator

    def heat_trajectory(levels: int) -> Trajectory:
        times = time_grid(problem.T, levels - 1)
        return Trajectory(times, tuple(heat_step(start, t, op) for t in times))

    beta = 0.75 * problem.s_exp
    return [verify_time_embedding(heat_trajectory(32), 0.0, 2.0, problem.s_exp, beta, refined=heat_trajectory(64))]


def _suite_reports(suite: str, loaded: LoadedConfig, seed: int) -> List[InequalityReport]:
    problem = loaded.problem
    grid = problem.grid
    if suite == "spaces":
        reports = [
            verify_interpolation_inequality(problem.s_exp, 2.0, seed=seed, samples=200, grid=grid),
            verify_kato_ponce(0.5, (2.0, 4.0, 4.0, 4.0, 4.0), seed=seed, samples=200, grid=grid),
            verify_norm_equivalence(1.0, 2.0, seed=seed, samples=200, grid=grid),
            verify_sobolev_embedding(1.0 if grid.d == 1 else 1.5, 2.0, seed=seed, samples=200, grid=grid),
        ]
        reports += [verify_chain_rule(0.5, 2.0, psi, seed=seed, samples=200, grid=grid) for psi in CompositionMap]
        return reports + _time_embedding_reports(loaded, seed)
    if suite == "hamiltonian":
        return [verify_hamiltonian_assumptions(problem.ham, seed=seed)]
    if suite == "coupling":
        return [verify_coupling_assumptions(problem.coupling, seed=seed, reg=loaded.solver.sinkhorn_reg)]
    return decay_suite() + [verify_parabolic_regularity(problem.s_exp)]


def _run_verify(loaded: LoadedConfig, writer: ArtifactWriter, suites: Sequence[str]) -> bool:
    seed = loaded.solver.seed
    reports: List[InequalityReport] = []
    for suite in suites:
        _banner(f"VERIFY SUITE: {suite.upper()}")
        suite_reports = _suite_reports(suite, loaded, seed)
        for report in suite_reports:
            print(report.summary_line())
        reports.extend(suite_reports)
    writer.write_csv("verify", report_rows(reports))
    writer.write_json("verify_summary", {"suites": list(suites), "reports": reports})
    return all(report.passed for report in reports)


def _run_semigroup(loaded: LoadedConfig, writer: ArtifactWriter, decay: Tuple[float, float, float]) -> bool:
    nu, gamma, p = decay
    problem = loaded.problem
    op = problem.operator
    exponent = gamma / (2.0 * problem.s_exp) if gamma > 0.0 else 1.0
    _banner(f"SEMIGROUP DECAY (nu={nu:g}, gamma={gamma:g}, p={p:g})")
    report = measure_decay_rate(
        band_corpus(problem.grid), nu, gamma, p, op, default_decay_ladder(problem.grid, op, exponent)
    )
    writer.write_csv("decay", [{"t": t, "ratio": r} for t, r in zip(report.series["t"], report.series["ratio"])])
    writer.write_json("decay_summary", {"report": report})
    print(report.summary_line())
    return report.passed


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one experiment and return the exit code.

    Examples:
        >>> run_cli(["verify", "configs/bench.toml", "--suite", "semigroup"])
        0
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        loaded = load_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.seed is not None:
        loaded.solver = loaded.solver.with_updates(seed=args.seed)
    command = Command(args.command)
    manifest = ExperimentManifest(
        command=command,
        config_path=str(args.config),
        output_dir=str(args.output_dir or Path("results") / command.value),
        seed=loaded.solver.seed,
        config_hash=loaded.config_hash,
    )
    writer = ArtifactWriter(manifest)
    writer.write_manifest()

    try:
        if command is Command.SOLVE:
            passed = _run_solve(loaded, writer)
        elif command is Command.SWEEP:
            passed = _run_sweep(loaded, writer, args.sigmas)
        elif command is Command.PICARD:
            passed = _run_picard(loaded, writer, args.horizons)
        elif command is Command.UNIQUENESS:
            passed = _run_uniqueness(loaded, writer, args.inits)
        elif command is Command.VERIFY:
            passed = _run_verify(loaded, writer, args.suite)
        else:
            passed = _run_semigroup(loaded, writer, tuple(args.decay))
    except (ValueError, FieldFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    _banner("SUMMARY")
    print(f"{command.value}: {'PASS' if passed else 'FAIL'}")
    print(f"Outputs written to: {writer.output_dir}")
    return 0 if passed else 1


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
