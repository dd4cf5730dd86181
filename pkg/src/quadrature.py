"""Numerical integration building blocks.

Adaptive Gauss-Legendre quadrature on 15-point panels with recursive
bisection, fixed tensor rules and a graded composite rule that integrates
many intervals at once. Integrands are vectorized: they receive a numpy
array of nodes and return an array of the same shape.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from src.config import settings
from src.errors import QuadratureError

logger = logging.getLogger(__name__)

PANEL_ORDER = 15

Integrand = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuadratureResult:
    """Value of an integral with its estimated absolute error."""

    value: float
    error: float
    evaluations: int


@lru_cache(maxsize=64)
def gauss_legendre_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the Gauss-Legendre rule on [-1, 1]."""
    if order < 1:
        raise ValueError(f"Quadrature order must be positive, got {order}")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _panel(f: Integrand, a: float, b: float) -> float:
    nodes, weights = gauss_legendre_rule(PANEL_ORDER)
    half = 0.5 * (b - a)
    values = np.asarray(f(0.5 * (a + b) + half * nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise QuadratureError(f"Non-finite integrand value on [{a:.6g}, {b:.6g}]")
    return float(half * np.sum(weights * values))


def adaptive_gauss_legendre(
    f: Integrand,
    a: float,
    b: float,
    abs_tol: float | None = None,
    rel_tol: float | None = None,
    max_depth: int | None = None,
) -> QuadratureResult:
    """Integrate ``f`` over [a, b] by adaptive Gauss-Legendre bisection.

    A panel is accepted when the 15-point estimate on the panel and the sum of
    the 15-point estimates on its two halves agree to within
    ``max(abs_tol, rel_tol * |halves|)``; otherwise both halves are refined
    with half the absolute tolerance.

    Args:
        f: Vectorized integrand
        a: Lower limit (finite)
        b: Upper limit (finite)
        abs_tol: Absolute tolerance (defaults to settings)
        rel_tol: Relative tolerance (defaults to settings)
        max_depth: Maximum bisection depth (defaults to settings)

    Returns:
        QuadratureResult with value and error estimate

    Raises:
        QuadratureError: On infinite limits, non-finite integrand values or
            when the maximum depth is exhausted
    """
    abs_tol = settings.quad_abs_tol if abs_tol is None else abs_tol
    rel_tol = settings.quad_rel_tol if rel_tol is None else rel_tol
    max_depth = settings.quad_max_depth if max_depth is None else max_depth

    if not (np.isfinite(a) and np.isfinite(b)):
        raise QuadratureError(f"Integration limits must be finite, got [{a}, {b}]")
    if a == b:
        return QuadratureResult(0.0, 0.0, 0)
    if a > b:
        result = adaptive_gauss_legendre(f, b, a, abs_tol, rel_tol, max_depth)
        return QuadratureResult(-result.value, result.error, result.evaluations)

    evaluations = 0

    def _refine(lo: float, hi: float, whole: float, tol: float, depth: int) -> Tuple[float, float]:
        nonlocal evaluations
        mid = 0.5 * (lo + hi)
        left = _panel(f, lo, mid)
        right = _panel(f, mid, hi)
        evaluations += 2 * PANEL_ORDER
        halves = left + right
        error = abs(halves - whole)
        if error <= max(tol, rel_tol * abs(halves)):
            return halves, error
        if depth >= max_depth:
            raise QuadratureError(
                f"Adaptive quadrature did not converge on [{lo:.6g}, {hi:.6g}] "
                f"(error {error:.3g}, depth {depth})"
            )
        left_value, left_error = _refine(lo, mid, left, tol / 2.0, depth + 1)
        right_value, right_error = _refine(mid, hi, right, tol / 2.0, depth + 1)
        return left_value + right_value, left_error + right_error

    whole = _panel(f, a, b)
    evaluations += PANEL_ORDER
    value, error = _refine(a, b, whole, abs_tol, 0)
    return QuadratureResult(value, error, evaluations)


def integrate_pieces(
    f: Integrand,
    breakpoints: Sequence[float],
    abs_tol: float | None = None,
    rel_tol: float | None = None,
) -> QuadratureResult:
    """Adaptive integral over consecutive intervals of ``breakpoints``.

    Splitting at known kinks keeps every piece smooth.
    """
    points = sorted(set(float(p) for p in breakpoints))
    value, error, evaluations = 0.0, 0.0, 0
    for lo, hi in zip(points[:-1], points[1:]):
        piece = adaptive_gauss_legendre(f, lo, hi, abs_tol=abs_tol, rel_tol=rel_tol)
        value += piece.value
        error += piece.error
        evaluations += piece.evaluations
    return QuadratureResult(value, error, evaluations)


def graded_panel_rule(
    lo: np.ndarray,
    hi: np.ndarray,
    panels: int | None = None,
    nodes: int | None = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on many intervals at once.

    Panel breakpoints are placed at ``lo + (hi - lo) * (j / panels)**2`` so
    the rule is refined towards ``lo``, where the kernel integrands of this
    package concentrate their mass.

    Args:
        lo: Interval starts, shape (M,)
        hi: Interval ends, shape (M,); may be smaller than ``lo``
        panels: Number of panels (defaults to settings)
        nodes: Gauss-Legendre nodes per panel (defaults to settings)

    Returns:
        (points, weights), each of shape (M, panels * nodes); weights carry the
        orientation sign so ``sum(weights * f(points))`` is the oriented integral
    """
    panels = panels or settings.kernel_panels
    nodes = nodes or settings.kernel_nodes
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    ref_nodes, ref_weights = gauss_legendre_rule(nodes)

    fractions = (np.arange(panels + 1) / panels) ** 2
    length = (hi - lo)[:, None]
    breaks = lo[:, None] + length * fractions[None, :]
    starts, ends = breaks[:, :-1], breaks[:, 1:]
    half = 0.5 * (ends - starts)
    mid = 0.5 * (ends + starts)
    points = mid[:, :, None] + half[:, :, None] * ref_nodes[None, None, :]
    weights = half[:, :, None] * ref_weights[None, None, :]
    return points.reshape(len(lo), -1), weights.reshape(len(lo), -1)


def tensor_rule(
    rules: Sequence[Tuple[np.ndarray, np.ndarray]]
) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor product of one-dimensional (nodes, weights) rules.

    Returns:
        (points, weights) with points of shape (d, Q) and weights of shape (Q,)
    """
    if not rules:
        return np.zeros((0, 1)), np.ones(1)
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    weight_grids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids])
    weights = np.prod(np.stack([w.reshape(-1) for w in weight_grids]), axis=0)
    return points, weights


def reduced_tensor_order(order: int, dims: int) -> int:
    """Largest per-coordinate order keeping a tensor grid within budget."""
    if dims == 0:
        return order
    budget = settings.max_tensor_nodes
    if order**dims <= budget:
        return order
    reduced = max(4, int(np.floor(budget ** (1.0 / dims))))
    logger.warning(
        f"Tensor quadrature over {dims} coordinates reduced from order {order} to {reduced}"
    )
    return reduced


def trapezoid_integral(y: np.ndarray, x: np.ndarray) -> float:
    """Trapezoid integral of samples ``y`` on the grid ``x``."""
    return float(trapezoid(y, x))


def cumulative_integral(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid integral from the first grid point (starts at 0)."""
    return cumulative_trapezoid(y, x, initial=0.0)


def reverse_cumulative_integral(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid integral from each grid point to the last one."""
    forward = cumulative_trapezoid(y, x, initial=0.0)
    return forward[-1] - forward
