"""Existence verdicts, density reconstruction from θ and related transforms.

Reconstruction works in centered coordinates:

    p(x) = c / θ(x) · exp(-∫_0^x u / θ(u) du)

on a grid over the central sample range, with c fixed by unit mass. The
inverse direction recovers θ = φ / p from a density, where φ(x) = ∫_x^b y p(y) dy.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.conditional import ConditionalEstimate
from src.distributions import SupportInterval
from src.errors import (
    ExistenceError,
    InputError,
    NumericalError,
    PreconditionError,
    SupportBoundaryError,
)
from src.quadrature import (
    cumulative_integral,
    integrate_pieces,
    reverse_cumulative_integral,
    trapezoid_integral,
)
from src.reference import irwin_hall_pdf

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 512
DEFAULT_TRIM = 0.005
MASS_TOL = 1e-6
CENTER_TOL = 1e-3
PDF_MASK = 1e-12
THETA_FLOOR = 1e-10
FLOOR_FRACTION = 0.01
REJECT_MIN_COUNT = 500
PROB_SUM_TOL = 1e-10

Evaluable = Callable[[np.ndarray], np.ndarray]


class Verdict(str, Enum):
    SUPPORTED = "supported"
    REJECTED = "rejected"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ExistenceVerdict:
    """Statistical evidence on whether θ(T) > 0 almost surely."""

    verdict: Verdict
    zero_regions: List[Tuple[float, float]]
    mass_at_risk: float
    flagged_bins: int = 0

    def to_dict(self) -> Dict:
        return {
            "verdict": self.verdict.value,
            "zero_regions": [list(r) for r in self.zero_regions],
            "mass_at_risk": self.mass_at_risk,
            "flagged_bins": self.flagged_bins,
        }


@dataclass(frozen=True)
class DensityEstimate:
    """Density values on an ascending grid.

    The grid is in the coordinates of T - ``center_shift``; add the shift to
    get back to T itself.
    """

    grid: np.ndarray
    pdf_values: np.ndarray
    support: SupportInterval
    c: float
    center_shift: float = 0.0
    floored: bool = False

    def __post_init__(self):
        if self.grid.ndim != 1 or self.grid.shape != self.pdf_values.shape:
            raise InputError("Density grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise InputError("Density grid must be strictly ascending")
        if np.any(self.pdf_values < 0):
            raise NumericalError("Density values must be nonnegative")

    @property
    def shifted_grid(self) -> np.ndarray:
        return self.grid + self.center_shift

    def evaluate(self, x):
        """Linear interpolation of the density; zero off the grid."""
        return np.interp(x, self.grid, self.pdf_values, left=0.0, right=0.0)

    def evaluate_shifted(self, x):
        """Density of T (un-centered coordinates)."""
        return self.evaluate(np.asarray(x, dtype=float) - self.center_shift)

    def mass(self) -> float:
        return trapezoid_integral(self.pdf_values, self.grid)

    def mean(self) -> float:
        return trapezoid_integral(self.grid * self.pdf_values, self.grid)

    def recentered(self) -> "DensityEstimate":
        """Same density with the grid moved so that its mean is zero."""
        m = self.mean()
        return replace(
            self,
            grid=self.grid - m,
            support=SupportInterval(self.support.lower - m, self.support.upper - m),
            center_shift=self.center_shift + m,
        )

    def rows(self, envelopes: Optional["BoundEnvelopes"] = None) -> List[Dict]:
        """CSV records: x, pdf, x_shifted, pdf_shifted (+ lower_env, upper_env)."""
        records = []
        for i, (x, p) in enumerate(zip(self.grid, self.pdf_values)):
            row = {"x": float(x), "pdf": float(p), "x_shifted": float(x + self.center_shift), "pdf_shifted": float(p)}
            if envelopes is not None:
                row["lower_env"] = float(envelopes.lower[i])
                row["upper_env"] = float(envelopes.upper[i])
            records.append(row)
        return records


@dataclass(frozen=True)
class BoundEnvelopes:
    """Lower and upper density envelopes sharing one constant c."""

    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    c: float

    def contains(self, p: DensityEstimate, rtol: float = 1e-9) -> np.ndarray:
        """Pointwise check lower <= p <= upper on the envelope grid."""
        values = p.evaluate(self.grid)
        slack = rtol * np.maximum(np.abs(values), 1e-300)
        return (self.lower - slack <= values) & (values <= self.upper + slack)


def check_existence(estimate: ConditionalEstimate) -> ExistenceVerdict:
    """Decide whether the binned θ̂ supports θ(T) > 0 almost surely.

    A bin is flagged unless its mean exceeds both 3·SE and 1e-10 times the
    global mean. The verdict is ``rejected`` when some bin with at least 500
    samples has |mean| <= SE, ``supported`` when no bin is flagged, and
    ``inconclusive`` otherwise. These are evidence levels, not proofs.
    """
    means = estimate.raw_means
    se = estimate.bin_se
    counts = estimate.counts
    global_mean = float(np.sum(counts * means) / counts.sum())

    flagged = ~((means > 3.0 * se) & (means > 1e-10 * global_mean))
    rejected = np.any((np.abs(means) <= se) & (counts >= REJECT_MIN_COUNT))
    mass_at_risk = float(counts[flagged].sum() / counts.sum())

    regions: List[Tuple[float, float]] = []
    edges = estimate.bin_edges
    for b in np.flatnonzero(flagged):
        lo, hi = float(edges[b]), float(edges[b + 1])
        if regions and regions[-1][1] >= lo:
            regions[-1] = (regions[-1][0], max(regions[-1][1], hi))
        else:
            regions.append((lo, hi))

    if rejected:
        verdict = Verdict.REJECTED
    elif not np.any(flagged):
        verdict = Verdict.SUPPORTED
    else:
        verdict = Verdict.INCONCLUSIVE
    result = ExistenceVerdict(verdict, regions, mass_at_risk, int(flagged.sum()))
    log = logger.warning if verdict is not Verdict.SUPPORTED else logger.info
    log(f"Existence verdict: {verdict.value} ({int(flagged.sum())} flagged bins, mass at risk {mass_at_risk:.3f})")
    return result


def theta_for_reconstruction(
    estimate: ConditionalEstimate,
    verdict: ExistenceVerdict,
    force: bool = False,
) -> Evaluable:
    """θ̂ made ready for ``reconstruct`` according to the existence verdict.

    Supported estimates pass through unchanged. Inconclusive ones, and
    rejected ones under ``force``, are floored at 1e-10 so that clipped bins
    do not stop the reconstruction.

    Raises:
        ExistenceError: If the verdict is ``rejected`` and ``force`` is not set
    """
    if verdict.verdict is Verdict.SUPPORTED:
        return estimate
    if verdict.verdict is Verdict.REJECTED:
        if not force:
            raise ExistenceError(
                f"θ(T) vanishes with probability about {verdict.mass_at_risk:.3f}; T has no density (rejected)",
                verdict=verdict,
            )
        logger.warning("Existence rejected; reconstructing anyway because force was requested")
    else:
        logger.warning(
            f"Existence inconclusive on {verdict.flagged_bins} bins; flooring θ at {THETA_FLOOR:g} to reconstruct"
        )
    return lambda t: np.maximum(estimate(t), THETA_FLOOR)


def _integral_from_zero(y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """∫_0^x y on the grid, with 0 inside the grid range."""
    forward = cumulative_integral(y, grid)
    return forward - np.interp(0.0, grid, forward)


def _theta_on_grid(theta_fn: Evaluable, grid: np.ndarray, floor: bool) -> Tuple[np.ndarray, bool]:
    theta = np.asarray(theta_fn(grid), dtype=float)
    theta = np.broadcast_to(theta, grid.shape).copy()
    bad = ~(theta > 0.0)
    if np.any(bad):
        location = float(grid[np.argmax(bad)])
        raise ExistenceError(f"θ is not positive at t = {location:.6g}; no density there", location)
    floored = False
    if floor:
        level = max(THETA_FLOOR, FLOOR_FRACTION * float(np.median(theta)))
        low = theta < level
        if np.any(low):
            floored = True
            logger.warning(f"θ floored at {level:.3g} on {int(low.sum())} of {len(grid)} grid points")
            theta[low] = level
    return theta, floored


def reconstruct(
    theta_fn: Evaluable,
    support_hint: Tuple[float, float],
    grid_size: int = DEFAULT_GRID_SIZE,
    center_shift: float = 0.0,
    floor: bool = True,
) -> DensityEstimate:
    """Density of the centered statistic from θ.

    Args:
        theta_fn: Vectorized θ(t)
        support_hint: Reconstruction range [lo, hi]; must contain 0
        grid_size: Number of grid points
        center_shift: Ê[T], recorded for un-centering
        floor: Clamp θ at max(1e-10, 0.01·median θ) with a warning

    Raises:
        PreconditionError: If the range does not contain 0
        ExistenceError: If θ <= 0 somewhere on the grid
    """
    lo, hi = float(support_hint[0]), float(support_hint[1])
    if not lo < 0.0 < hi:
        raise PreconditionError(f"Reconstruction range [{lo:.6g}, {hi:.6g}] must contain 0")
    if grid_size < 3:
        raise InputError(f"Grid needs at least 3 points, got {grid_size}")
    grid = np.linspace(lo, hi, grid_size)
    theta, floored = _theta_on_grid(theta_fn, grid, floor)

    exponent = -np.log(theta) - _integral_from_zero(grid / theta, grid)
    top = float(np.max(exponent))
    shape = np.exp(exponent - top)
    mass = trapezoid_integral(shape, grid)
    if not (mass > 0 and math.isfinite(mass)):
        raise NumericalError(f"Reconstructed density has mass {mass}")
    c = math.exp(-top) / mass
    logger.info(f"Reconstructed density on {grid_size} points over [{lo:.6g}, {hi:.6g}], c = {c:.6g}")
    return DensityEstimate(
        grid=grid,
        pdf_values=shape / mass,
        support=SupportInterval(lo, hi),
        c=c,
        center_shift=center_shift,
        floored=floored,
    )


def bounds(
    theta_lo: Evaluable,
    theta_hi: Evaluable,
    grid: np.ndarray,
    c: float = 1.0,
) -> BoundEnvelopes:
    """Envelopes from θ₁ <= θ <= θ₂:

        lower(x) = c/θ₂(x) · exp(-∫_0^x u/θ₁),  upper(x) = c/θ₁(x) · exp(-∫_0^x u/θ₂)

    Pass the ``c`` of the θ̂ reconstruction so that the reconstructed density
    lies between the envelopes; the envelopes themselves are not normalized.

    Raises:
        PreconditionError: If the grid does not contain 0
        InputError: If θ₁ <= 0 or θ₁ > θ₂ somewhere on the grid
    """
    grid = np.asarray(grid, dtype=float)
    if not grid[0] <= 0.0 <= grid[-1]:
        raise PreconditionError("Envelope grid must contain 0")
    t1 = np.broadcast_to(np.asarray(theta_lo(grid), dtype=float), grid.shape)
    t2 = np.broadcast_to(np.asarray(theta_hi(grid), dtype=float), grid.shape)
    if np.any(~(t1 > 0)):
        raise InputError(f"Lower θ envelope is not positive at t = {float(grid[np.argmax(~(t1 > 0))]):.6g}")
    crossing = t1 > t2
    if np.any(crossing):
        raise InputError(f"θ envelopes cross at t = {float(grid[np.argmax(crossing)]):.6g}")
    lower = c / t2 * np.exp(-_integral_from_zero(grid / t1, grid))
    upper = c / t1 * np.exp(-_integral_from_zero(grid / t2, grid))
    return BoundEnvelopes(grid=grid, lower=lower, upper=upper, c=c)


def phi_and_theta_from_density(p: DensityEstimate) -> Tuple[np.ndarray, np.ndarray]:
    """φ(x) = ∫_x^b y p(y) dy and θ = φ/p on the grid of ``p``.

    θ is NaN where p <= 1e-12.

    Raises:
        PreconditionError: If p is not normalized or not centered
    """
    mass = p.mass()
    if abs(mass - 1.0) > MASS_TOL:
        raise PreconditionError(f"Density integrates to {mass:.9g}, not 1")
    mean = p.mean()
    if abs(mean) > CENTER_TOL:
        raise PreconditionError(f"Density has mean {mean:.3g}; center it first with recentered()")
    phi = reverse_cumulative_integral(p.grid * p.pdf_values, p.grid)
    theta = np.full_like(phi, np.nan)
    ok = p.pdf_values > PDF_MASK
    theta[ok] = phi[ok] / p.pdf_values[ok]
    return phi, theta


def conditional_identity_rhs(p: DensityEstimate, x: float, irwin_hall_n: int | None = None) -> float:
    """Right-hand side of the conditional expectation identity on a density grid.

    Generic form: ∫_x^b y p(y) dy / p(x). With ``irwin_hall_n`` = n, ``p`` is
    the density of a sum of n uniforms in its own coordinates and the result is
    x - 2·∫_x^n (y - n/2) p(y) dy / p(x), i.e. E[Σ X_k² | Σ X_k = x].

    Raises:
        SupportBoundaryError: If p(x) vanishes
    """
    grid, values = p.shifted_grid, p.pdf_values
    p_x = float(np.interp(x, grid, values, left=0.0, right=0.0))
    if not p_x > 0.0:
        raise SupportBoundaryError(f"Density vanishes at x = {x:g}")
    if irwin_hall_n is None:
        tail = reverse_cumulative_integral(grid * values, grid)
        return float(np.interp(x, grid, tail)) / p_x
    tail = reverse_cumulative_integral((grid - 0.5 * irwin_hall_n) * values, grid)
    return x - 2.0 * float(np.interp(x, grid, tail)) / p_x


def irwin_hall_identity_rhs(n: int, x: float) -> float:
    """x - 2·∫_x^n (y - n/2) p_Z(y) dy / p_Z(x) with the exact Irwin-Hall density.

    Raises:
        SupportBoundaryError: If x is outside (0, n)
    """
    p_x = irwin_hall_pdf(n, x)
    if not p_x > 0.0:
        raise SupportBoundaryError(f"Irwin-Hall density vanishes at x = {x:g}")
    breaks = [x, float(n)] + [k for k in range(1, n) if x < k < n]
    tail = integrate_pieces(lambda y: (y - 0.5 * n) * irwin_hall_pdf(n, y), breaks)
    return x - 2.0 * tail.value / p_x


def discrete_mixture(cases: Sequence[Tuple[float, DensityEstimate]]) -> DensityEstimate:
    """Σ p_i · density_i on the union of the (un-centered) grids, renormalized.

    The result is in un-centered coordinates (``center_shift`` = 0).

    Raises:
        InputError: If a probability is not positive or they do not sum to 1
    """
    if not cases:
        raise InputError("A mixture needs at least one case")
    probs = np.array([float(w) for w, _ in cases])
    if np.any(probs <= 0):
        raise InputError("Mixture probabilities must be positive")
    if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
        raise InputError(f"Mixture probabilities sum to {probs.sum():.12g}, not 1")
    grid = np.unique(np.concatenate([d.shifted_grid for _, d in cases]))
    values = sum(w * d.evaluate_shifted(grid) for w, d in zip(probs, (d for _, d in cases)))
    mass = trapezoid_integral(values, grid)
    if abs(mass - 1.0) > MASS_TOL:
        logger.debug(f"Renormalizing mixture of mass {mass:.9g}")
    return DensityEstimate(
        grid=grid,
        pdf_values=values / mass,
        support=SupportInterval(float(grid[0]), float(grid[-1])),
        c=1.0 / mass,
        center_shift=0.0,
    )


def empirical_density(
    samples: np.ndarray,
    bins: int = DEFAULT_GRID_SIZE,
    value_range: Tuple[float, float] | None = None,
    center_shift: float = 0.0,
) -> DensityEstimate:
    """Histogram density of ``samples`` placed at the bin centers.

    Samples outside ``value_range`` are dropped and the result is
    renormalized to unit trapezoid mass on the centers.
    """
    samples = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(samples, bins=bins, range=value_range)
    centers = 0.5 * (edges[:-1] + edges[1:])
    values = counts.astype(float)
    mass = trapezoid_integral(values, centers)
    if not mass > 0:
        raise NumericalError("Histogram has no mass")
    return DensityEstimate(
        grid=centers,
        pdf_values=values / mass,
        support=SupportInterval(float(edges[0]), float(edges[-1])),
        c=1.0 / mass,
        center_shift=center_shift,
    )


def _reference_values(p: DensityEstimate, q) -> np.ndarray:
    x = p.shifted_grid
    if isinstance(q, DensityEstimate):
        return q.evaluate_shifted(x)
    return np.broadcast_to(np.asarray(q(x), dtype=float), x.shape)


def l1_distance(p: DensityEstimate, q) -> float:
    """∫ |p - q| over the grid of ``p``; ``q`` is a DensityEstimate or a
    density of T in un-centered coordinates."""
    return trapezoid_integral(np.abs(p.pdf_values - _reference_values(p, q)), p.grid)


def linf_distance(p: DensityEstimate, q) -> float:
    """max |p - q| over the grid of ``p``."""
    return float(np.max(np.abs(p.pdf_values - _reference_values(p, q))))
