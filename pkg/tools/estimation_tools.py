"""Command tools for θ estimation, density reconstruction and the Stein identity."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.conditional import ConditionalEstimate, SampleBatch, collect, estimate_theta
from src.config import settings
from src.decomposition import Decomposition, ExplicitDecomposition, validate
from src.density import (
    BoundEnvelopes,
    DensityEstimate,
    ExistenceVerdict,
    bounds,
    check_existence,
    reconstruct,
    theta_for_reconstruction,
)
from src.errors import ConfigError, ExistenceError, NumericalError, SteinDensityError, ValidationFailedError
from src.expressions import parse
from src.reporting import build_report, save_report, write_csv
from src.run_config import RunConfig, build_decomposition, load_run_config
from src.stein_core import stein_identity_check

logger = logging.getLogger(__name__)

THETA_COLUMNS = ["bin_lo", "bin_hi", "t_mid", "theta_mean", "theta_se", "count"]
DENSITY_COLUMNS = ["x", "pdf", "x_shifted", "pdf_shifted"]
ENVELOPE_COLUMNS = ["lower_env", "upper_env"]


def failure(error: Exception) -> Dict[str, Any]:
    """Result dictionary for a failed command."""
    if isinstance(error, SteinDensityError):
        exit_code = error.exit_code
    elif isinstance(error, OSError):
        exit_code = ConfigError.exit_code
    else:
        # numpy and scipy failures surface as plain Python exceptions
        exit_code = NumericalError.exit_code
        logger.debug(f"Treating {type(error).__name__} as a numerical failure")
    result = {"success": False, "error": str(error), "error_type": type(error).__name__, "exit_code": exit_code}
    if isinstance(error, ValidationFailedError) and error.report is not None:
        result["validation"] = error.report.to_dict()
    return result


@dataclass
class DensityRun:
    """Everything produced by one density pipeline run."""

    density: DensityEstimate
    verdict: Optional[ExistenceVerdict] = None
    estimate: Optional[ConditionalEstimate] = None
    batch: Optional[SampleBatch] = None
    envelopes: Optional[BoundEnvelopes] = None


class SteinEstimationTool:
    """Runs the sampling pipelines described by a run configuration."""

    def __init__(self, workers: int | None = None, out_dir: str | Path | None = None):
        self.workers = workers
        self.out_dir = Path(out_dir) if out_dir else settings.output_dir

    def _metadata(self, config_path: str | Path | None, config: RunConfig | None) -> Dict[str, Any]:
        metadata: Dict[str, Any] = {"config": str(config_path) if config_path else None}
        if config is not None:
            metadata["seed"] = config.mc.seed
            metadata["samples"] = config.mc.samples
        return metadata

    def prepare(self, config: RunConfig) -> Decomposition:
        """Build the decomposition; explicit ones must pass validation first."""
        if config.is_synthetic:
            raise ConfigError("This command needs a statistic, not a synthetic θ")
        decomposition = build_decomposition(config)
        if isinstance(decomposition, ExplicitDecomposition):
            report = validate(
                decomposition,
                samples=config.mc.validation_samples,
                tol=config.mc.validation_tol,
                seed=config.mc.seed,
            )
            if not report.passed:
                raise ValidationFailedError(
                    f"Explicit decomposition failed validation: {'; '.join(report.failures)}", report
                )
        return decomposition

    def sample_theta(self, config: RunConfig) -> tuple[SampleBatch, ConditionalEstimate]:
        decomposition = self.prepare(config)
        batch = collect(decomposition, config.mc.samples, config.mc.seed, self.workers)
        return batch, estimate_theta(batch, config.mc.bins)

    def estimate_theta(self, config_path: str | Path) -> Dict[str, Any]:
        """θ̂ on equal-count bins, written to the theta CSV.

        Args:
            config_path: Path to the JSON run configuration

        Returns:
            Dictionary with the output paths and a summary of the estimate
        """
        try:
            config = load_run_config(config_path)
            batch, estimate = self.sample_theta(config)
            theta_csv = write_csv(self.out_dir / config.outputs.theta_csv, estimate.rows(), THETA_COLUMNS)
            results = {
                "bins": estimate.bins,
                "mean_theta": float(batch.theta_values.mean()),
                "center": batch.center,
                "clipped_bins": int(np.sum(estimate.clipped)),
                "theta_csv": theta_csv,
            }
            report_path = save_report(
                build_report("theta", results, **self._metadata(config_path, config)),
                self.out_dir / config.outputs.report_json,
            )
            return {"success": True, **results, "report": report_path}
        except Exception as e:
            logger.error(f"Error estimating theta: {e}")
            return failure(e)

    def run_density(self, config: RunConfig, force: bool = False) -> DensityRun:
        """Reconstruct the density of T (or of a synthetic θ).

        Raises:
            ExistenceError: If the existence verdict is ``rejected`` and
                ``force`` is not set
        """
        if config.is_synthetic:
            synthetic = config.synthetic
            theta_fn = parse(synthetic.theta, 1).as_function()
            density = reconstruct(theta_fn, synthetic.range, config.grid.points, synthetic.center_shift)
            run = DensityRun(density=density)
        else:
            batch, estimate = self.sample_theta(config)
            verdict = check_existence(estimate)
            theta_fn = theta_for_reconstruction(estimate, verdict, force)
            density = reconstruct(
                theta_fn,
                batch.central_range(config.grid.quantile_trim),
                config.grid.points,
                center_shift=batch.center,
            )
            run = DensityRun(density=density, verdict=verdict, estimate=estimate, batch=batch)

        if config.theta_bounds is not None:
            lower = parse(config.theta_bounds.lower, 1).as_function()
            upper = parse(config.theta_bounds.upper, 1).as_function()
            run.envelopes = bounds(lower, upper, run.density.grid, c=run.density.c)
        return run

    def estimate_density(self, config_path: str | Path, force: bool = False) -> Dict[str, Any]:
        """Existence verdict plus the reconstructed density CSV."""
        config = None
        try:
            config = load_run_config(config_path)
            run = self.run_density(config, force)
            columns = DENSITY_COLUMNS + (ENVELOPE_COLUMNS if run.envelopes is not None else [])
            density_csv = write_csv(
                self.out_dir / config.outputs.density_csv, run.density.rows(run.envelopes), columns
            )
            results = {
                "verdict": run.verdict.to_dict() if run.verdict else None,
                "c": run.density.c,
                "center_shift": run.density.center_shift,
                "theta_floored": run.density.floored,
                "mass_at_risk": run.verdict.mass_at_risk if run.verdict else 0.0,
                "density_csv": density_csv,
            }
            report_path = save_report(
                build_report("density", results, **self._metadata(config_path, config)),
                self.out_dir / config.outputs.report_json,
            )
            return {"success": True, **results, "report": report_path}
        except ExistenceError as e:
            logger.error(f"Density rejected: {e}")
            result = failure(e)
            verdict = e.verdict
            if verdict is not None and config is not None:
                result["verdict"] = verdict.to_dict()
                result["report"] = save_report(
                    build_report("density", {"verdict": verdict.to_dict()}, **self._metadata(config_path, config)),
                    self.out_dir / config.outputs.report_json,
                )
            return result
        except Exception as e:
            logger.error(f"Error estimating density: {e}")
            return failure(e)

    def check_identity(self, config_path: str | Path, g: str) -> Dict[str, Any]:
        """Monte Carlo check of E[g(T)T] = E[g'(T)Θ] for a one-variable g."""
        try:
            config = load_run_config(config_path)
            g_expr = parse(g, 1)
            decomposition = self.prepare(config)
            report = stein_identity_check(
                decomposition, g_expr, config.mc.samples, config.mc.seed, self.workers
            )
            results = {"g": g, **report.to_dict()}
            report_path = save_report(
                build_report("identity", results, **self._metadata(config_path, config)),
                self.out_dir / config.outputs.report_json,
            )
            return {"success": True, **results, "report": report_path}
        except Exception as e:
            logger.error(f"Error checking the Stein identity: {e}")
            return failure(e)
