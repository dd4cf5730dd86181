"""Command-line front end for Stein-kernel density estimation.

Reads a JSON run configuration describing a statistic T of independent
inputs, estimates θ(t) = E[Θ | T = t] by Monte Carlo and reconstructs the
density of T from it:

    p_T(x) = c / θ(x) · exp(-∫_0^x u / θ(u) du)

Commands:
    theta     binned θ̂ → theta.csv
    density   existence verdict and reconstructed density → density.csv
    identity  Monte Carlo check of E[g(T)T] = E[g'(T)Θ]
    compare   distances to a reference case → compare.csv
    cov       covariance of α(X), β(X) by the kernel formula and by Monte Carlo

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure, 4 density rejected.
"""
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config import settings
from tools.estimation_tools import SteinEstimationTool
from tools.reference_tools import CovarianceTool, ReferenceComparisonTool

logger = logging.getLogger(__name__)


def setup_logging(verbose: bool = False) -> Path:
    """Setup logging with both file and console output."""
    log_dir = Path(settings.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    log_file = log_dir / f"stein_density_{timestamp}.log"

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    root_logger.handlers.clear()

    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # Console handler (for terminal output)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(formatter)

    # File handler (for log file)
    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)

    root_logger.addHandler(console_handler)
    root_logger.addHandler(file_handler)
    return log_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Density of nonlinear statistics via the Stein kernel θ(t) = E[Θ | T = t]",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Binned θ̂ for a uniform sum
  python main.py theta --config configs/uniform_sum.json

  # Reconstruct the density (fails with exit code 4 if it does not exist)
  python main.py density --config configs/max_atom.json

  # Stein identity with g = sin
  python main.py identity --config configs/curie_weiss.json --g "sin(x1)"

  # Compare with the chi-square law with 2 degrees of freedom
  python main.py compare --config configs/chi_square.json --reference chi_square:2

  # Covariance of X and X^2 under the standard normal law
  python main.py cov --dist normal --alpha x --beta "x^2"

Set STEIN_DENSITY_THREADS to change the worker count.
        """,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", type=str, help=f"Output directory (default: {settings.output_dir})")
    common.add_argument("--workers", type=int, help=f"Worker threads (default: {settings.threads})")

    commands = parser.add_subparsers(dest="command", required=True)

    theta = commands.add_parser("theta", parents=[common], help="Estimate θ(t) on equal-count bins")
    theta.add_argument("--config", required=True, help="Path to the JSON run configuration")

    density = commands.add_parser("density", parents=[common], help="Reconstruct the density of T")
    density.add_argument("--config", required=True, help="Path to the JSON run configuration")
    density.add_argument("--force", action="store_true", help="Write the density even if existence is rejected")

    identity = commands.add_parser("identity", parents=[common], help="Check E[g(T)T] = E[g'(T)Θ]")
    identity.add_argument("--config", required=True, help="Path to the JSON run configuration")
    identity.add_argument("--g", required=True, help="Test function of one variable, e.g. 'sin(x1)'")

    compare = commands.add_parser("compare", parents=[common], help="Compare with a reference case")
    compare.add_argument("--config", help="Path to the JSON run configuration (not needed for uif:<n>)")
    compare.add_argument("--reference", required=True, help="Reference name, e.g. chi_square:2 or uif:2")

    cov = commands.add_parser("cov", parents=[common], help="Covariance by the kernel formula")
    cov.add_argument("--config", help="Unused; accepted for a uniform command surface")
    cov.add_argument("--dist", default="uniform", help="Distribution shorthand (default: uniform)")
    cov.add_argument("--alpha", required=True, help="First function of one variable")
    cov.add_argument("--beta", required=True, help="Second function of one variable")
    cov.add_argument("--samples", type=int, default=10**6, help="Monte Carlo draws (default: 1000000)")
    cov.add_argument("--seed", type=int, default=0, help="Monte Carlo seed (default: 0)")
    return parser


def run_command(args: argparse.Namespace) -> Dict[str, Any]:
    """Dispatch a parsed command to its tool."""
    out_dir = args.out_dir or settings.output_dir
    if args.command == "theta":
        return SteinEstimationTool(args.workers, out_dir).estimate_theta(args.config)
    if args.command == "density":
        return SteinEstimationTool(args.workers, out_dir).estimate_density(args.config, force=args.force)
    if args.command == "identity":
        return SteinEstimationTool(args.workers, out_dir).check_identity(args.config, args.g)
    if args.command == "compare":
        return ReferenceComparisonTool(args.workers, out_dir).compare(args.reference, args.config)
    return CovarianceTool.covariance(args.dist, args.alpha, args.beta, args.samples, args.seed, args.workers)


def print_summary(command: str, result: Dict[str, Any], log_file: Path) -> None:
    print("\n" + "=" * 60)
    print(f"{command}: {'complete' if result['success'] else 'failed'}")
    print("=" * 60)
    if not result["success"]:
        print(f"Error ({result['error_type']}): {result['error']}")
        if "verdict" in result:
            print(f"Existence verdict: {result['verdict']['verdict']}")
            print(f"Mass at risk: {result['verdict']['mass_at_risk']:.4f}")
        if "validation" in result:
            for item in result["validation"]["failures"]:
                print(f"Validation: {item}")
    elif command == "theta":
        print(f"Bins: {result['bins']}")
        print(f"Mean Θ: {result['mean_theta']:.8g}")
        print(f"E[T]: {result['center']:.8g}")
        print(f"Clipped bins: {result['clipped_bins']}")
        print(f"Results saved to: {result['theta_csv']}")
    elif command == "density":
        if result["verdict"]:
            print(f"Existence verdict: {result['verdict']['verdict']}")
        print(f"c: {result['c']:.8g}")
        print(f"Mass at risk: {result['mass_at_risk']:.4f}")
        print(f"Results saved to: {result['density_csv']}")
    elif command == "identity":
        print(f"g: {result['g']}")
        print(f"E[g(T)T]  = {result['lhs']:.8g} ± {result['se_lhs']:.3g}")
        print(f"E[g'(T)Θ] = {result['rhs']:.8g} ± {result['se_rhs']:.3g}")
        print(f"|difference| = {abs(result['difference']):.3g} (threshold {result['threshold']:.3g})")
        print(f"Result: {'PASS' if result['passed'] else 'FAIL'}")
    elif command == "compare":
        _print_comparison(result)
    else:
        print(f"Distribution: {result['distribution']}")
        print(f"Cov({result['alpha']}, {result['beta']}) kernel:      {result['kernel']:.10g}")
        print(f"Cov({result['alpha']}, {result['beta']}) Monte Carlo: {result['monte_carlo']:.8g} ± {result['monte_carlo_se']:.3g}")
    print(f"Log file: {log_file}")
    print("=" * 60 + "\n")


def _print_comparison(result: Dict[str, Any]) -> None:
    print(f"Reference: {result['reference']}")
    if "identity" in result:
        print(f"{'x':>6} {'rhs':>12} {'oracle':>12} {'se':>10}  result")
        rows: List[Dict[str, Any]] = result["identity"]
        for row in rows:
            status = "PASS" if row["passed"] else "FAIL"
            print(f"{row['x']:>6g} {row['rhs']:>12.6f} {row['oracle']:>12.6f} {row['oracle_se']:>10.2g}  {status}")
    if "l1" in result:
        print(f"L1 distance: {result['l1']:.5g}")
        print(f"L∞ distance: {result['linf']:.5g}")
    if "sandwich_holds" in result:
        print(f"Inside envelopes: {100 * result['sandwich_fraction']:.1f}% of grid points")
    print(f"Results saved to: {result['compare_csv']}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the script."""
    args = build_parser().parse_args(argv)
    log_file = setup_logging(args.verbose)
    logger.info(f"Logging to file: {log_file}")

    result = run_command(args)
    print_summary(args.command, result, log_file)
    if result["success"]:
        logger.info(f"{args.command} completed successfully")
        return 0
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
