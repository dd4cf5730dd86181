"""Cuadras covariance formula, the kernel operator L and the Stein kernel Θ.

For a law with CDF F and density p, the kernel operator acts on a function h
of one variable as

    L h(x) = ∫ (F(x ∧ y) - F(x) F(y)) h'(y) dy / p(x)          (double_integral)
           = ∫_x^b h(y) p(y) dy / p(x)    for E[h(X)] = 0      (ibp)

and the Stein kernel of T with decomposition h is
Θ(x) = Σ_k ∂_k T(x) · L_k h_k(x). The ibp form is evaluated as
∫ h(y) exp(log p(y) - log p(x)) dy on the side of x holding less mass, which
stays finite where p(x) underflows and avoids cancellation in the far tail.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Sequence

import numpy as np

from src.decomposition import Decomposition
from src.distributions import Distribution
from src.errors import (
    ExpressionDomainError,
    NumericalError,
    PreconditionError,
    QuadratureError,
    SupportBoundaryError,
)
from src.expressions import Expression
from src.quadrature import graded_panel_rule, integrate_pieces
from src.random_streams import RandomStream, draw_inputs, map_blocks

logger = logging.getLogger(__name__)

METHODS = ("ibp", "double_integral")
CENTERING_TOL = 1e-8
MIN_DENSITY = 1e-300


@dataclass(frozen=True)
class KernelEvaluation:
    """L h(x) with the method used and its quadrature error estimate."""

    x: float
    value: float
    method: str
    est_error: float


@dataclass(frozen=True)
class IdentityReport:
    """Monte Carlo estimates of both sides of E[g(T)T] = E[g'(T)Θ]."""

    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float
    samples: int
    seed: int

    @property
    def difference(self) -> float:
        return self.lhs - self.rhs

    @property
    def threshold(self) -> float:
        return 3.0 * (self.se_lhs + self.se_rhs)

    @property
    def passed(self) -> bool:
        return abs(self.difference) < self.threshold or self.difference == 0.0

    def to_dict(self) -> Dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "se_lhs": self.se_lhs,
            "se_rhs": self.se_rhs,
            "difference": self.difference,
            "threshold": self.threshold,
            "samples": self.samples,
            "seed": self.seed,
            "passed": self.passed,
        }


def _as_function(h) -> Callable[[np.ndarray], np.ndarray]:
    return h.as_function() if isinstance(h, Expression) else h


def _as_derivative(h) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(h, Expression):
        return h.derivative_function()
    raise PreconditionError("The double-integral form needs h as an expression to differentiate")


def _split_points(dist: Distribution, lo: float, hi: float, *extra: float):
    return [lo, hi] + [b for b in (*dist.breakpoints(), *extra) if lo < b < hi]


def kernel_integral(dist: Distribution, h_prime, x: float):
    """∫ (F(x ∧ y) - F(x) F(y)) h'(y) dy (the Cuadras kernel applied to h').

    Returns:
        (value, error) of the integral
    """
    f_x = float(dist.cdf(x))
    lo, hi = dist.tail_limits(np.array(x))
    lo, hi = float(lo), float(hi)
    below = integrate_pieces(lambda y: dist.cdf(y) * h_prime(y), _split_points(dist, lo, x))
    above = integrate_pieces(lambda y: (1.0 - dist.cdf(y)) * h_prime(y), _split_points(dist, x, hi))
    value = (1.0 - f_x) * below.value + f_x * above.value
    error = (1.0 - f_x) * below.error + f_x * above.error
    return value, error


def cuadras_cov(dist: Distribution, alpha, beta) -> float:
    """Cov(α(X), β(X)) = ∬ (F(x ∧ y) - F(x) F(y)) α'(x) β'(y) dx dy.

    Args:
        dist: Law of X
        alpha: One-variable expression (absolutely continuous)
        beta: One-variable expression (absolutely continuous)

    Returns:
        The covariance, by nested adaptive quadrature

    Raises:
        NumericalError: If either integral diverges
    """
    alpha_prime = _as_derivative(alpha)
    beta_prime = _as_derivative(beta)

    def outer(xs: np.ndarray) -> np.ndarray:
        inner = np.array([kernel_integral(dist, beta_prime, float(x))[0] for x in np.ravel(xs)])
        return alpha_prime(xs) * inner.reshape(np.shape(xs))

    lo, hi = dist.box
    try:
        result = integrate_pieces(outer, _split_points(dist, lo, hi))
    except (QuadratureError, ExpressionDomainError) as e:
        raise NumericalError(f"Covariance integral diverges: {e}") from e
    if not math.isfinite(result.value):
        raise NumericalError("Covariance integral is not finite")
    return result.value


def l_op(dist: Distribution, h, x: float, method: str = "ibp") -> KernelEvaluation:
    """Kernel operator L h at ``x``.

    Args:
        dist: Law of the active coordinate
        h: One-variable expression (or vectorized callable for ibp)
        x: Evaluation point inside the support
        method: "ibp" (default) or "double_integral"

    Raises:
        SupportBoundaryError: If the density vanishes at ``x``
        PreconditionError: If h is not centered under the ibp method
    """
    if method not in METHODS:
        raise PreconditionError(f"Unknown kernel method {method!r}; use one of {METHODS}")
    log_px = float(dist.logpdf(x))
    if method == "double_integral":
        p_x = math.exp(log_px)
        if p_x < MIN_DENSITY:
            raise SupportBoundaryError(f"Density {p_x:.3g} at x = {x:g} is too small for the kernel form")
        value, error = kernel_integral(dist, _as_derivative(h), x)
        return KernelEvaluation(float(x), value / p_x, method, error / p_x)

    if not math.isfinite(log_px):
        raise SupportBoundaryError(f"x = {x:g} is outside the support {dist.support}")
    h_fn = _as_function(h)
    mean = dist.expectation(h_fn)
    if abs(mean) >= CENTERING_TOL:
        raise PreconditionError(f"ibp kernel form needs E[h(X)] = 0, got {mean:.3g}")

    lo, hi = dist.tail_limits(np.array(x))
    integrand = lambda y: h_fn(y) * np.exp(dist.logpdf(y) - log_px)
    if float(dist.cdf(x)) <= 0.5:
        # -∫_a^x equals ∫_x^b for centered h
        piece = integrate_pieces(integrand, _split_points(dist, float(lo), x))
        value = -piece.value
    else:
        piece = integrate_pieces(integrand, _split_points(dist, x, float(hi)))
        value = piece.value
    return KernelEvaluation(float(x), value, method, piece.error)


def kernel_on_samples(
    decomposition: Decomposition,
    i: int,
    x: np.ndarray,
) -> np.ndarray:
    """L_k h_i at every column of ``x`` (k = active coordinate of h_i).

    Uses the ibp form on a graded composite rule anchored at each sample and
    running towards the nearer support end in probability.
    """
    k = decomposition.coordinate(i)
    dist = decomposition.dists[k - 1]
    xk = x[k - 1]
    log_px = dist.logpdf(xk)
    outside = ~np.isfinite(log_px)
    if np.any(outside):
        index = int(np.argmax(outside))
        raise SupportBoundaryError(f"Sample {index}: x{k} = {xk[index]:g} is outside the support {dist.support}")

    lo, hi = dist.tail_limits(xk)
    lower_side = dist.cdf(xk) <= 0.5
    end = np.where(lower_side, lo, hi)
    nodes, weights = graded_panel_rule(xk, end)
    h = decomposition.component_on_line(i, x, nodes)
    ratio = np.exp(dist.logpdf(nodes) - log_px[:, None])
    # Lower-side rules run from x down to a, so the signed sum is already -∫_a^x
    return np.sum(weights * h * ratio, axis=1)


def theta_values(decomposition: Decomposition, x: np.ndarray) -> np.ndarray:
    """Θ_{T,h} at every column of ``x`` (shape (n, M))."""
    x = np.asarray(x, dtype=float)
    statistic = decomposition.statistic
    theta = np.zeros(x.shape[1])
    for i in range(decomposition.m):
        k = decomposition.coordinate(i)
        d_t = statistic.partial(k, x)
        d_t = np.broadcast_to(d_t, theta.shape)
        active = d_t != 0.0
        if not np.any(active):
            continue
        contribution = np.zeros_like(theta)
        contribution[active] = d_t[active] * kernel_on_samples(decomposition, i, x[:, active])
        theta += contribution
    return theta


def theta_sample(decomposition: Decomposition, x: Sequence[float]) -> float:
    """Θ_{T,h}(x) = Σ_k ∂_k T(x) · L_k h_k(x) at a single point."""
    point = np.asarray(x, dtype=float).reshape(-1, 1)
    return float(theta_values(decomposition, point)[0])


def stein_identity_check(
    decomposition: Decomposition,
    g: Expression,
    samples: int,
    seed: int = 0,
    workers: int | None = None,
) -> IdentityReport:
    """Estimate both sides of E[g(T)T] = E[g'(T)Θ] from one Monte Carlo run.

    T is centered by the decomposition's Ê[T]. The identity passes when the
    two means differ by less than 3·(SE_lhs + SE_rhs).
    """
    center = decomposition.center
    statistic = decomposition.statistic

    def block(stream: RandomStream, start: int, count: int):
        x = draw_inputs(decomposition.dists, stream, count)
        t = statistic.evaluate(x) - center
        theta = theta_values(decomposition, x)
        lhs = np.asarray(g.evaluate(t[None, :]), dtype=float) * t
        rhs = np.asarray(g.partial(1, t[None, :]), dtype=float) * theta
        return np.broadcast_to(lhs, t.shape), np.broadcast_to(rhs, t.shape)

    parts = map_blocks(samples, seed, "identity", block, workers)
    lhs = np.concatenate([p[0] for p in parts])
    rhs = np.concatenate([p[1] for p in parts])
    if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs))):
        raise NumericalError("Non-finite values in the Stein identity samples")
    report = IdentityReport(
        lhs=float(lhs.mean()),
        rhs=float(rhs.mean()),
        se_lhs=float(lhs.std(ddof=1) / math.sqrt(samples)),
        se_rhs=float(rhs.std(ddof=1) / math.sqrt(samples)),
        samples=samples,
        seed=seed,
    )
    logger.info(
        f"Stein identity: lhs={report.lhs:.6g} ± {report.se_lhs:.2g}, "
        f"rhs={report.rhs:.6g} ± {report.se_rhs:.2g}, passed={report.passed}"
    )
    return report
