"""Command tools for comparisons against reference cases and covariances."""
import logging
import math
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from src.config import settings
from src.density import bounds, irwin_hall_identity_rhs, l1_distance, linf_distance
from src.distributions import parse_distribution
from src.errors import ConfigError
from src.expressions import parse
from src.random_streams import RandomStream, map_blocks
from src.reference import ReferenceCase, get_reference, uif_lhs_oracle
from src.reporting import build_report, save_report, write_csv
from src.run_config import load_run_config
from src.stein_core import cuadras_cov
from tools.estimation_tools import SteinEstimationTool, failure

logger = logging.getLogger(__name__)

IDENTITY_COLUMNS = ["x", "rhs", "oracle", "oracle_se", "accepted", "passed"]
IDENTITY_SLACK = 1e-3
DEFAULT_ORACLE_SAMPLES = 10**6
DEFAULT_COV_SAMPLES = 10**6


class ReferenceComparisonTool:
    """Compares reconstructed densities and identities with reference cases."""

    def __init__(self, workers: int | None = None, out_dir: str | Path | None = None):
        self.workers = workers
        self.out_dir = Path(out_dir) if out_dir else settings.output_dir
        self.estimation = SteinEstimationTool(workers=workers, out_dir=self.out_dir)

    def _identity_table(self, reference: ReferenceCase, samples: int, seed: int) -> List[Dict[str, Any]]:
        n = reference.identity_order
        rows = []
        for x in reference.parameters["points"]:
            rhs = irwin_hall_identity_rhs(n, x)
            oracle = uif_lhs_oracle(n, x, samples, seed, workers=self.workers)
            passed = abs(rhs - oracle.value) < 3.0 * oracle.std_error + IDENTITY_SLACK
            rows.append(
                {
                    "x": x,
                    "rhs": rhs,
                    "oracle": oracle.value,
                    "oracle_se": oracle.std_error,
                    "accepted": oracle.accepted,
                    "passed": passed,
                }
            )
            logger.info(f"Identity n={n}, x={x}: rhs={rhs:.6g}, oracle={oracle.value:.6g} ± {oracle.std_error:.2g}")
        return rows

    def compare(self, reference_name: str, config_path: str | Path | None = None) -> Dict[str, Any]:
        """Distances between the reconstructed density and a reference case.

        Identity references (``uif:<n>``) need no config; they tabulate the
        exact right-hand side against the windowed Monte Carlo oracle.

        Returns:
            Dictionary with L1 / L∞ distances, the envelope check and paths
        """
        try:
            reference = get_reference(reference_name)
            config = load_run_config(config_path) if config_path else None
            csv_name = config.outputs.compare_csv if config else "compare.csv"
            report_name = config.outputs.report_json if config else "report.json"
            metadata = {"config": str(config_path) if config_path else None, "reference": reference_name}

            if reference.is_identity:
                samples = config.mc.samples if config else DEFAULT_ORACLE_SAMPLES
                seed = config.mc.seed if config else 0
                rows = self._identity_table(reference, samples, seed)
                compare_csv = write_csv(self.out_dir / csv_name, rows, IDENTITY_COLUMNS)
                results = {
                    "reference": reference_name,
                    "identity": rows,
                    "passed": all(r["passed"] for r in rows),
                    "compare_csv": compare_csv,
                }
            else:
                if config is None:
                    raise ConfigError(f"Comparing against '{reference_name}' needs --config")
                results = self._compare_density(reference, config, csv_name)
                metadata.update(seed=config.mc.seed, samples=config.mc.samples)

            report_path = save_report(build_report("compare", results, **metadata), self.out_dir / report_name)
            return {"success": True, **results, "report": report_path}
        except Exception as e:
            logger.error(f"Error comparing with reference '{reference_name}': {e}")
            return failure(e)

    def _compare_density(self, reference: ReferenceCase, config, csv_name: str) -> Dict[str, Any]:
        run = self.estimation.run_density(config)
        density = run.density
        columns = ["x", "x_shifted", "pdf"]
        rows = [
            {"x": float(x), "x_shifted": float(xs), "pdf": float(p)}
            for x, xs, p in zip(density.grid, density.shifted_grid, density.pdf_values)
        ]
        results: Dict[str, Any] = {
            "reference": reference.name,
            "provenance": reference.provenance,
            "verdict": run.verdict.to_dict() if run.verdict else None,
        }

        if reference.has_density:
            ref_values = np.asarray(reference.pdf(density.shifted_grid), dtype=float)
            for row, value in zip(rows, ref_values):
                row["reference_pdf"] = float(value)
            columns.append("reference_pdf")
            results["l1"] = l1_distance(density, reference.pdf)
            results["linf"] = linf_distance(density, reference.pdf)
            logger.info(f"L1 = {results['l1']:.4g}, L∞ = {results['linf']:.4g} against {reference.name}")

        if reference.has_envelopes:
            theta_lo, theta_hi = reference.theta_bounds
            envelopes = bounds(theta_lo, theta_hi, density.grid, c=density.c)
            inside = envelopes.contains(density)
            for row, lo, hi in zip(rows, envelopes.lower, envelopes.upper):
                row["lower_env"] = float(lo)
                row["upper_env"] = float(hi)
            columns += ["lower_env", "upper_env"]
            results["sandwich_fraction"] = float(np.mean(inside))
            results["sandwich_holds"] = bool(np.all(inside))

        results["compare_csv"] = write_csv(self.out_dir / csv_name, rows, columns)
        return results


class CovarianceTool:
    """Covariance of two functions of one variable, two ways."""

    @staticmethod
    def covariance(
        declaration: str,
        alpha: str,
        beta: str,
        samples: int = DEFAULT_COV_SAMPLES,
        seed: int = 0,
        workers: int | None = None,
    ) -> Dict[str, Any]:
        """Kernel-quadrature covariance and its Monte Carlo counterpart.

        Args:
            declaration: Distribution shorthand such as ``uniform`` or ``normal``
            alpha: First function (one variable)
            beta: Second function (one variable)
            samples: Monte Carlo draws
            seed: Seed of the ``cov`` stream
            workers: Thread count

        Returns:
            Dictionary with ``kernel``, ``monte_carlo`` and ``monte_carlo_se``
        """
        try:
            dist = parse_distribution(declaration)
            f = parse(alpha, 1)
            g = parse(beta, 1)
            kernel = cuadras_cov(dist, f, g)

            def block(stream: RandomStream, start: int, count: int):
                x = dist.sample(stream, count)[None, :]
                return np.broadcast_to(f.evaluate(x), (count,)), np.broadcast_to(g.evaluate(x), (count,))

            parts = map_blocks(samples, seed, "cov", block, workers)
            a = np.concatenate([p[0] for p in parts])
            b = np.concatenate([p[1] for p in parts])
            products = (a - a.mean()) * (b - b.mean())
            estimate = float(products.sum() / (samples - 1))
            se = float(products.std(ddof=1) / math.sqrt(samples))
            logger.info(f"Cov = {kernel:.8g} (kernel), {estimate:.6g} ± {se:.2g} (Monte Carlo)")
            return {
                "success": True,
                "distribution": declaration,
                "alpha": alpha,
                "beta": beta,
                "kernel": kernel,
                "monte_carlo": estimate,
                "monte_carlo_se": se,
                "samples": samples,
                "seed": seed,
            }
        except Exception as e:
            logger.error(f"Error computing covariance: {e}")
            return failure(e)
