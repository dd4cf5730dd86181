"""Monte Carlo estimation of θ(t) = E[Θ_{T,h} | T = t].

Pairs (T_i - Ê[T], Θ_i) are drawn by ``collect`` and regressed on equal-count
bins of T by ``estimate_theta``. The resulting estimate is piecewise linear
through the bin midpoints and clamped beyond the outermost ones.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from src.decomposition import Decomposition
from src.errors import DegenerateStatisticError, InputError, NumericalError
from src.random_streams import RandomStream, draw_inputs, map_blocks
from src.stein_core import theta_values

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10_000
MIN_BINS = 5
MIN_PER_BIN = 50


@dataclass(frozen=True)
class SampleBatch:
    """Centered statistic values with the matching Stein kernel values."""

    t_values: np.ndarray
    theta_values: np.ndarray
    seed: int
    center: float = 0.0

    def __post_init__(self):
        if self.t_values.shape != self.theta_values.shape or self.t_values.ndim != 1:
            raise InputError("t and theta samples must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.t_values)) and np.all(np.isfinite(self.theta_values))):
            raise NumericalError("Sample batch contains non-finite values")

    @property
    def size(self) -> int:
        return len(self.t_values)

    def central_range(self, delta: float = 0.005) -> Tuple[float, float]:
        """Sample quantiles q_δ and q_{1-δ} of T."""
        lo, hi = np.quantile(self.t_values, [delta, 1.0 - delta])
        return float(lo), float(hi)


@dataclass(frozen=True)
class ConditionalEstimate:
    """Binned estimate of θ with per-bin standard errors.

    ``raw_means`` keeps the bin means before negative values were clipped to 0;
    ``clipped`` marks the affected bins.
    """

    bin_edges: np.ndarray
    bin_means: np.ndarray
    bin_se: np.ndarray
    counts: np.ndarray
    raw_means: np.ndarray
    clipped: np.ndarray | None = None

    @property
    def bins(self) -> int:
        return len(self.bin_means)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __call__(self, t):
        return evaluate(self, t)[0]

    def rows(self) -> List[Dict]:
        """One record per bin in CSV column order."""
        return [
            {
                "bin_lo": float(lo),
                "bin_hi": float(hi),
                "t_mid": float(mid),
                "theta_mean": float(mean),
                "theta_se": float(se),
                "count": int(count),
            }
            for lo, hi, mid, mean, se, count in zip(
                self.bin_edges[:-1],
                self.bin_edges[1:],
                self.midpoints,
                self.bin_means,
                self.bin_se,
                self.counts,
            )
        ]


def collect(
    decomposition: Decomposition,
    samples: int,
    seed: int = 0,
    workers: int | None = None,
) -> SampleBatch:
    """Draw ``samples`` iid inputs and pair T(X) - Ê[T] with Θ(X).

    Raises:
        InputError: If fewer than 10⁴ samples are requested
        NumericalError: If a kernel evaluation fails or is not finite; the
            message names the offending sample index
    """
    if samples < MIN_SAMPLES:
        raise InputError(f"collect needs at least {MIN_SAMPLES} samples, got {samples}")
    statistic = decomposition.statistic
    center = decomposition.center
    logger.info(f"Collecting {samples} (T, Θ) pairs with seed {seed}")

    def block(stream: RandomStream, start: int, count: int):
        x = draw_inputs(decomposition.dists, stream, count)
        try:
            theta = theta_values(decomposition, x)
        except NumericalError as e:
            raise NumericalError(f"Kernel evaluation failed in the block starting at sample {start}: {e}") from e
        t = np.asarray(statistic.evaluate(x), dtype=float) - center
        bad = ~(np.isfinite(t) & np.isfinite(theta))
        if np.any(bad):
            index = start + int(np.argmax(bad))
            raise NumericalError(f"Non-finite (T, Θ) at sample {index}")
        return t, theta

    parts = map_blocks(samples, seed, "collect", block, workers)
    batch = SampleBatch(
        t_values=np.concatenate([p[0] for p in parts]),
        theta_values=np.concatenate([p[1] for p in parts]),
        seed=seed,
        center=center,
    )
    logger.info(f"Collected {batch.size} pairs; mean Θ = {batch.theta_values.mean():.6g}")
    return batch


def default_bins(samples: int) -> int:
    """⌊√N / 5⌋ clamped to [10, 200]."""
    return int(min(200, max(10, math.floor(math.sqrt(samples) / 5.0))))


def estimate_theta(batch: SampleBatch, bins: int | None = None) -> ConditionalEstimate:
    """Equal-count binned regression of Θ on T.

    Args:
        batch: Collected sample pairs
        bins: Number of bins (defaults to ⌊√N / 5⌋ clamped to [10, 200])

    Returns:
        ConditionalEstimate; negative bin means are clipped to 0 and flagged

    Raises:
        InputError: If bins < 5 or fewer than 50 samples per bin
        DegenerateStatisticError: If every T value is the same
    """
    n = batch.size
    bins = bins or default_bins(n)
    if bins < MIN_BINS:
        raise InputError(f"At least {MIN_BINS} bins are needed, got {bins}")
    if n < MIN_PER_BIN * bins:
        raise InputError(f"{n} samples are too few for {bins} bins (need {MIN_PER_BIN} per bin)")
    t = batch.t_values
    if np.ptp(t) == 0.0:
        raise DegenerateStatisticError(f"T is constant ({t[0]:.6g}); it has no density")

    order = np.argsort(t, kind="stable")
    t_sorted = t[order]
    theta_sorted = batch.theta_values[order]
    groups = np.array_split(np.arange(n), bins)
    starts = np.array([g[0] for g in groups])

    edges = np.empty(bins + 1)
    edges[:-1] = t_sorted[starts]
    edges[-1] = t_sorted[-1]
    counts = np.array([len(g) for g in groups])
    raw_means = np.array([theta_sorted[g].mean() for g in groups])
    se = np.array([theta_sorted[g].std(ddof=1) / math.sqrt(len(g)) for g in groups])

    clipped = raw_means < 0.0
    means = np.where(clipped, 0.0, raw_means)
    if np.any(clipped):
        worst = float(np.min(raw_means / np.where(se > 0, se, np.inf)))
        logger.warning(
            f"Clipped {int(clipped.sum())} negative bin means to 0 "
            f"(most negative is {abs(worst):.2f} standard errors below zero)"
        )
    logger.info(f"Estimated θ on {bins} equal-count bins over [{edges[0]:.6g}, {edges[-1]:.6g}]")
    return ConditionalEstimate(
        bin_edges=edges,
        bin_means=means,
        bin_se=se,
        counts=counts,
        raw_means=raw_means,
        clipped=clipped,
    )


def evaluate(estimate: ConditionalEstimate, t):
    """Interpolated θ̂(t) and its standard error.

    Linear through the bin midpoints, constant beyond the outermost ones.

    Returns:
        (value, se); floats for scalar ``t``, arrays otherwise
    """
    mids = estimate.midpoints
    value = np.interp(t, mids, estimate.bin_means)
    se = np.interp(t, mids, estimate.bin_se)
    if np.ndim(t) == 0:
        return float(value), float(se)
    return value, se
