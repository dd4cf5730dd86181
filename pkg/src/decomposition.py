"""Decompositions h = {h_1, ..., h_m} of a statistic T.

A decomposition satisfies Σ_k h_k(X) = T(X) - E[T], E_k[h_k(X)] = 0 for every
component (expectation over the component's active coordinate only) and
finite second moments. Two sources are supported: explicit expressions with
a user-stated active coordinate, and the martingale decomposition
h_k = E[T | X_1..X_k] - E[T | X_1..X_{k-1}].
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.config import settings
from src.distributions import Distribution
from src.errors import DimensionError, InputError, NumericalError, QuadratureError
from src.expressions import Expression
from src.quadrature import reduced_tensor_order, tensor_rule
from src.random_streams import RandomStream, draw_inputs, map_blocks

logger = logging.getLogger(__name__)

MAX_TENSOR_COORDINATES = 6
POINT_BUDGET = 2**20  # Points per vectorized statistic evaluation


@dataclass(frozen=True)
class ComponentEstimate:
    """Value of a martingale component with its Monte Carlo standard error
    (zero when computed by tensor quadrature)."""

    value: float
    std_error: float = 0.0
    method: str = "tensor"


@dataclass
class ValidationReport:
    """Outcome of checking the three conditions of a decomposition."""

    samples: int
    tolerance: float
    max_sum_residual: float
    max_conditional_mean: float
    conditional_means: List[float]
    second_moments: List[float]
    center: float
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "samples": self.samples,
            "tolerance": self.tolerance,
            "max_sum_residual": self.max_sum_residual,
            "max_conditional_mean": self.max_conditional_mean,
            "conditional_means": self.conditional_means,
            "second_moments": self.second_moments,
            "center": self.center,
            "failures": self.failures,
        }


def _evaluate_chunked(statistic: Expression, points: np.ndarray) -> np.ndarray:
    """Evaluate on a (n, P) point array in chunks that bound memory use."""
    total = points.shape[1]
    if total <= POINT_BUDGET:
        return statistic.evaluate(points)
    parts = [statistic.evaluate(points[:, i : i + POINT_BUDGET]) for i in range(0, total, POINT_BUDGET)]
    return np.concatenate(parts)


def conditional_expectation(
    statistic: Expression,
    dists: Sequence[Distribution],
    prefix: np.ndarray,
    quad_order: int | None = None,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """E[T | X_1..X_j = prefix] for many prefixes at once.

    The remaining coordinates j+1..n are integrated with a tensor
    Gauss-Legendre rule weighted by their densities. More than six remaining
    coordinates fall back to Monte Carlo with ``settings.inner_mc_samples``
    inner draws.

    Args:
        statistic: T as an expression of n variables
        dists: The n input laws
        prefix: Fixed leading coordinates, shape (j, M)
        quad_order: Nodes per integrated coordinate (defaults to settings)
        seed: Seed of the inner Monte Carlo stream

    Returns:
        (values, std_errors), each of shape (M,)
    """
    quad_order = quad_order or settings.quad_order
    prefix = np.asarray(prefix, dtype=float)
    if prefix.ndim == 1:
        prefix = prefix[:, None]
    n = len(dists)
    j, m = prefix.shape
    remaining = n - j
    if remaining < 0:
        raise DimensionError(f"Prefix of length {j} for a statistic of dimension {n}")
    if remaining == 0:
        return _evaluate_chunked(statistic, prefix), np.zeros(m)

    if remaining > MAX_TENSOR_COORDINATES:
        return _inner_monte_carlo(statistic, dists, prefix, seed)

    order = reduced_tensor_order(quad_order, remaining)
    nodes, weights = tensor_rule([d.expectation_rule(order) for d in dists[j:]])
    q = nodes.shape[1]
    rows_per_chunk = max(1, POINT_BUDGET // q)
    values = np.empty(m)
    for start in range(0, m, rows_per_chunk):
        stop = min(m, start + rows_per_chunk)
        rows = stop - start
        points = np.empty((n, rows, q))
        points[:j] = prefix[:, start:stop, None]
        points[j:] = nodes[:, None, :]
        t = statistic.evaluate(points.reshape(n, -1)).reshape(rows, q)
        values[start:stop] = (t * weights[None, :]).sum(axis=1)
    return values, np.zeros(m)


def _inner_monte_carlo(statistic, dists, prefix, seed) -> Tuple[np.ndarray, np.ndarray]:
    n = len(dists)
    j, m = prefix.shape
    draws = settings.inner_mc_samples
    logger.warning(
        f"{n - j} coordinates to integrate exceeds the tensor limit; using {draws} Monte Carlo inner draws"
    )
    stream = RandomStream(seed, "inner")
    inner = draw_inputs(dists[j:], stream, draws)
    values = np.empty(m)
    errors = np.empty(m)
    for i in range(m):
        points = np.empty((n, draws))
        points[:j] = prefix[:, i : i + 1]
        points[j:] = inner
        t = statistic.evaluate(points)
        values[i] = t.mean()
        errors[i] = t.std(ddof=1) / np.sqrt(draws)
    return values, errors


def expected_statistic(
    statistic: Expression,
    dists: Sequence[Distribution],
    quad_order: int | None = None,
    seed: int = 0,
) -> Tuple[float, float]:
    """Ê[T] with its standard error.

    Tensor quadrature for n <= 6, otherwise a Monte Carlo mean over
    ``settings.expectation_mc_samples`` draws of the ``expectation`` stream.
    """
    n = len(dists)
    if n <= MAX_TENSOR_COORDINATES:
        values, _ = conditional_expectation(statistic, dists, np.zeros((0, 1)), quad_order)
        return float(values[0]), 0.0

    draws = settings.expectation_mc_samples
    logger.info(f"Estimating E[T] by Monte Carlo with {draws} draws (n = {n})")
    sums = map_blocks(
        draws,
        seed,
        "expectation",
        lambda stream, start, count: statistic.evaluate(draw_inputs(dists, stream, count)),
    )
    t = np.concatenate(sums)
    return float(t.mean()), float(t.std(ddof=1) / np.sqrt(draws))


class Decomposition(ABC):
    """Components h_1..h_m with their active coordinates."""

    source = "abstract"

    def __init__(self, statistic: Expression, dists: Sequence[Distribution]):
        if statistic.dimension != len(dists):
            raise DimensionError(
                f"Statistic has dimension {statistic.dimension} but {len(dists)} distributions were given"
            )
        self.statistic = statistic
        self.dists = list(dists)

    @property
    def dimension(self) -> int:
        return self.statistic.dimension

    @property
    @abstractmethod
    def m(self) -> int:
        """Number of components."""

    @abstractmethod
    def coordinate(self, i: int) -> int:
        """Active coordinate (1-based) of component ``i`` (0-based)."""

    @property
    @abstractmethod
    def center(self) -> float:
        """Ê[T] used for centering."""

    @abstractmethod
    def evaluate_component(self, i: int, x: np.ndarray) -> np.ndarray:
        """h_i at points ``x`` of shape (n, M)."""

    def component_on_line(self, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """h_i with its active coordinate replaced by ``y``.

        Args:
            i: Component index (0-based)
            x: Base points, shape (n, M)
            y: Replacement values, shape (M, Q)

        Returns:
            Values of shape (M, Q)
        """
        k = self.coordinate(i)
        n, m = x.shape
        q = y.shape[1]
        points = np.repeat(x[:, :, None], q, axis=2)
        points[k - 1] = y
        return self.evaluate_component(i, points.reshape(n, m * q)).reshape(m, q)

    def coordinates(self) -> List[int]:
        return [self.coordinate(i) for i in range(self.m)]


class ExplicitDecomposition(Decomposition):
    """User-supplied component expressions with stated active coordinates."""

    source = "explicit"

    def __init__(
        self,
        statistic: Expression,
        dists: Sequence[Distribution],
        components: Sequence[Tuple[Expression, int]],
        quad_order: int | None = None,
    ):
        super().__init__(statistic, dists)
        if not components:
            raise InputError("A decomposition needs at least one component")
        for expression, k in components:
            if expression.dimension != self.dimension:
                raise DimensionError(f"Component {expression.text!r} has dimension {expression.dimension}")
            if not 1 <= k <= self.dimension:
                raise DimensionError(f"Active coordinate {k} outside 1..{self.dimension}")
        self.components = list(components)
        self.quad_order = quad_order

    @property
    def m(self) -> int:
        return len(self.components)

    def coordinate(self, i: int) -> int:
        return self.components[i][1]

    @cached_property
    def center(self) -> float:
        return expected_statistic(self.statistic, self.dists, self.quad_order)[0]

    def evaluate_component(self, i: int, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.components[i][0].evaluate(x), dtype=float)

    def __repr__(self) -> str:
        parts = ", ".join(f"({e.text}, x{k})" for e, k in self.components)
        return f"ExplicitDecomposition([{parts}])"


class MartingaleDecomposition(Decomposition):
    """h_k = E[T | X_1..X_k] - E[T | X_1..X_{k-1}], k = 1..n.

    Conditional expectations over trailing coordinates use tensor quadrature;
    values of E[T | X_1..X_{k-1}] are cached per (k, prefix).
    """

    source = "martingale"

    def __init__(
        self,
        statistic: Expression,
        dists: Sequence[Distribution],
        quad_order: int | None = None,
        seed: int = 0,
    ):
        super().__init__(statistic, dists)
        self.quad_order = quad_order or settings.quad_order
        self.seed = seed
        self._cache: Dict[Tuple[int, Tuple[float, ...]], Tuple[float, float]] = {}

    @property
    def m(self) -> int:
        return self.dimension

    def coordinate(self, i: int) -> int:
        return i + 1

    @cached_property
    def center(self) -> float:
        return expected_statistic(self.statistic, self.dists, self.quad_order, self.seed)[0]

    def _prefix_mean(self, j: int, prefix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """E[T | X_1..X_j]; j = 0 is the cached center."""
        if j == 0:
            m = prefix.shape[1] if prefix.ndim == 2 else 1
            return np.full(m, self.center), np.zeros(m)
        return conditional_expectation(self.statistic, self.dists, prefix[:j], self.quad_order, self.seed)

    def evaluate_component(self, i: int, x: np.ndarray) -> np.ndarray:
        k = i + 1
        x = np.asarray(x, dtype=float)
        upper, _ = self._prefix_mean(k, x)
        lower, _ = self._prefix_mean(k - 1, x)
        return upper - lower

    def component_on_line(self, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        # E[T | X_1..X_{k-1}] is shared by every node of a sample's line
        k = i + 1
        n, m = x.shape
        q = y.shape[1]
        lower, _ = self._prefix_mean(k - 1, x)
        points = np.empty((k, m, q))
        points[: k - 1] = x[: k - 1, :, None]
        points[k - 1] = y
        upper, _ = self._prefix_mean(k, points.reshape(k, m * q))
        return upper.reshape(m, q) - lower[:, None]

    def component(self, k: int, x: Sequence[float]) -> ComponentEstimate:
        """h_k at a single point, with caching of the conditional means."""
        if not 1 <= k <= self.dimension:
            raise DimensionError(f"Coordinate {k} outside 1..{self.dimension}")
        x = np.asarray(x, dtype=float).reshape(-1)
        if len(x) < k:
            raise DimensionError(f"Point of length {len(x)} does not fix coordinate {k}")
        upper, upper_se = self._cached_mean(k, x)
        lower, lower_se = self._cached_mean(k - 1, x)
        method = "monte_carlo" if self.dimension - k > MAX_TENSOR_COORDINATES else "tensor"
        return ComponentEstimate(upper - lower, float(np.hypot(upper_se, lower_se)), method)

    def _cached_mean(self, j: int, x: np.ndarray) -> Tuple[float, float]:
        if j == 0:
            return self.center, 0.0
        key = (j, tuple(float(v) for v in x[:j]))
        if key not in self._cache:
            values, errors = self._prefix_mean(j, x[:j, None])
            # Values are deterministic, so concurrent writers store the same entry
            self._cache[key] = (float(values[0]), float(errors[0]))
        return self._cache[key]

    def __repr__(self) -> str:
        return f"MartingaleDecomposition({self.statistic.text!r}, quad_order={self.quad_order})"


def martingale_component(
    statistic: Expression,
    dists: Sequence[Distribution],
    k: int,
    x: Sequence[float],
    quad_order: int | None = None,
) -> ComponentEstimate:
    """h_k(x) = E[T | X_1..X_k] - E[T | X_1..X_{k-1}] evaluated at ``x``."""
    return MartingaleDecomposition(statistic, dists, quad_order).component(k, x)


def validate(
    decomposition: Decomposition,
    samples: int = 10_000,
    tol: float = 1e-6,
    seed: int = 0,
    conditioning_points: int = 100,
) -> ValidationReport:
    """Check the defining conditions of a decomposition.

    The sum Σ h_k = T - Ê[T] is checked on ``samples`` Monte Carlo points and
    the centering E_k[h_k] = 0 by adaptive quadrature at ``conditioning_points``
    of them per component. Second moments come from the same samples.

    Raises:
        InputError: If fewer than 1000 samples are requested
        NumericalError: If a component is not integrable
    """
    if samples < 1000:
        raise InputError(f"Validation needs at least 1000 samples, got {samples}")
    statistic = decomposition.statistic
    dists = decomposition.dists
    center = decomposition.center

    stream = RandomStream(seed, "validate")
    x = draw_inputs(dists, stream, samples)
    components = np.stack([decomposition.evaluate_component(i, x) for i in range(decomposition.m)])
    residual = components.sum(axis=0) - (statistic.evaluate(x) - center)
    max_residual = float(np.max(np.abs(residual)))
    second_moments = [float(v) for v in np.mean(components**2, axis=1)]

    conditioning = x[:, :conditioning_points]
    conditional_means = []
    for i in range(decomposition.m):
        k = decomposition.coordinate(i)
        dist = dists[k - 1]
        worst = 0.0
        for c in range(conditioning.shape[1]):
            base = conditioning[:, c : c + 1]

            def integrand(y, base=base, i=i, k=k):
                y = np.asarray(y, dtype=float)
                points = np.repeat(base, y.size, axis=1)
                points[k - 1] = y.reshape(-1)
                return decomposition.evaluate_component(i, points).reshape(y.shape)

            try:
                mean = dist.expectation(integrand)
            except QuadratureError as e:
                raise NumericalError(f"Component {i + 1} is not integrable in x{k}: {e}") from e
            worst = max(worst, abs(mean))
        conditional_means.append(worst)

    report = ValidationReport(
        samples=samples,
        tolerance=tol,
        max_sum_residual=max_residual,
        max_conditional_mean=max(conditional_means),
        conditional_means=conditional_means,
        second_moments=second_moments,
        center=center,
    )
    if not max_residual < tol:
        report.failures.append(f"sum of components differs from T - E[T] by {max_residual:.3g}")
    if not report.max_conditional_mean < tol:
        report.failures.append(f"E_k[h_k] reaches {report.max_conditional_mean:.3g}")
    if not all(np.isfinite(second_moments)):
        report.failures.append("a component has a non-finite second moment")

    if report.passed:
        logger.info(f"Decomposition validated on {samples} samples (max residual {max_residual:.3g})")
    else:
        logger.warning(f"Decomposition failed validation: {'; '.join(report.failures)}")
    return report
