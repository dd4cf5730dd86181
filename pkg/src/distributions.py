"""Input laws X_k: density, CDF, quantile, moments and sampling.

Every law has a connected support and a density that is strictly positive
on the open support. All methods are vectorized over numpy arrays; scalar
input gives scalar output.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from src.config import settings
from src.errors import DomainError, InputError, NumericalError, QuadratureError
from src.quadrature import adaptive_gauss_legendre, gauss_legendre_rule, integrate_pieces
from src.random_streams import RandomStream

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-8


@dataclass(frozen=True)
class SupportInterval:
    """Connected support [lower, upper]; either end may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InputError(f"Support must satisfy lower < upper, got [{self.lower}, {self.upper}]")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lower) & (x <= self.upper)

    def __str__(self) -> str:
        return f"[{self.lower:g}, {self.upper:g}]"


def _scalar_or_array(x, values):
    return float(values) if np.ndim(x) == 0 else values


class Distribution(ABC):
    """Univariate law with an a.e. positive density on a connected support."""

    name = "distribution"

    def __init__(self, support: SupportInterval, normalizer: float):
        if not (normalizer > 0 and math.isfinite(normalizer)):
            raise NumericalError(f"{self.name}: normalizer must be positive and finite, got {normalizer}")
        self.support = support
        self.normalizer = float(normalizer)

    # -- law -----------------------------------------------------------------

    @abstractmethod
    def _logpdf(self, x: np.ndarray) -> np.ndarray:
        """Log density on the open support (may assume x inside)."""

    @abstractmethod
    def _cdf(self, x: np.ndarray) -> np.ndarray:
        """CDF for x inside the support."""

    @abstractmethod
    def _quantile(self, u: np.ndarray) -> np.ndarray:
        """Quantile for u in (0, 1)."""

    def logpdf(self, x):
        """Log density; -inf outside the support."""
        x = np.asarray(x, dtype=float)
        inside = self.support.contains(x)
        out = np.full(x.shape, -np.inf)
        if np.any(inside):
            out[inside] = self._logpdf(x[inside])
        return _scalar_or_array(x, out)

    def pdf(self, x):
        """Density p(x); 0 outside the support."""
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        """Distribution function F(x), clamped to [0, 1]."""
        x = np.asarray(x, dtype=float)
        out = np.where(x >= self.support.upper, 1.0, 0.0)
        inside = (x > self.support.lower) & (x < self.support.upper)
        if np.any(inside):
            out[inside] = self._cdf(x[inside])
        return _scalar_or_array(x, np.clip(out, 0.0, 1.0))

    def quantile(self, u):
        """Quantile function on (0, 1).

        Raises:
            DomainError: If any level is outside the open unit interval
        """
        u = np.asarray(u, dtype=float)
        if np.any(~((u > 0.0) & (u < 1.0))):
            raise DomainError(f"{self.name}: quantile level must lie in (0, 1)")
        return _scalar_or_array(u, self._quantile(u))

    def sample(self, stream: RandomStream, size: int | None = None):
        """Inverse-CDF draws from ``stream``."""
        u = stream.uniform(size)
        return _scalar_or_array(u, self._sample_quantile(np.asarray(u, dtype=float)))

    def _sample_quantile(self, u: np.ndarray) -> np.ndarray:
        return self._quantile(u)

    # -- derived quantities ---------------------------------------------------

    @cached_property
    def box(self) -> Tuple[float, float]:
        """Finite integration range: the support, with infinite ends truncated
        at the ``settings.tail_level`` quantiles."""
        level = settings.tail_level
        lo = self.support.lower if math.isfinite(self.support.lower) else float(self._quantile(np.array(level)))
        hi = self.support.upper if math.isfinite(self.support.upper) else float(self._quantile(np.array(1.0 - level)))
        return lo, hi

    def breakpoints(self) -> Tuple[float, ...]:
        """Points where the density is not smooth (quadrature splits there)."""
        return self.box

    def tail_limits(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Integration limits for kernel integrals anchored at ``x``.

        Finite support ends are used as they are. Infinite ends are pushed
        half a box width beyond both the truncation box and ``x`` so the
        neglected tail is far below quadrature tolerance.
        """
        lo_box, hi_box = self.box
        pad = 0.5 * (hi_box - lo_box)
        x = np.asarray(x, dtype=float)
        if math.isfinite(self.support.lower):
            lo = np.full(x.shape, self.support.lower)
        else:
            lo = np.minimum(lo_box, x) - pad
        if math.isfinite(self.support.upper):
            hi = np.full(x.shape, self.support.upper)
        else:
            hi = np.maximum(hi_box, x) + pad
        return lo, hi

    def expectation(self, f, x_breaks: Tuple[float, ...] = ()) -> float:
        """E[f(X)] by adaptive quadrature over the truncation box."""
        lo, hi = self.box
        points = [lo, hi] + [b for b in (*self.breakpoints(), *x_breaks) if lo < b < hi]
        return integrate_pieces(lambda y: f(y) * self.pdf(y), points).value

    def moment(self, k: int) -> float:
        """Raw moment E[X^k] by quadrature.

        Raises:
            NumericalError: If the integral does not converge
        """
        if k < 0:
            raise InputError(f"Moment order must be nonnegative, got {k}")
        try:
            value = self.expectation(lambda y: np.power(y, k))
        except QuadratureError as e:
            raise NumericalError(f"{self.name}: moment {k} did not converge: {e}") from e
        if not math.isfinite(value):
            raise NumericalError(f"{self.name}: moment {k} is not finite")
        return value

    def expectation_rule(self, order: int) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes and probability weights (summing to 1) for E[f(X)] ≈ Σ w f(x)."""
        lo, hi = self.box
        nodes, weights = gauss_legendre_rule(order)
        half = 0.5 * (hi - lo)
        x = 0.5 * (hi + lo) + half * nodes
        w = half * weights * self.pdf(x)
        return x, w / np.sum(w)

    def check_normalization(self) -> float:
        """Integrate the density over its support.

        Raises:
            NumericalError: If the mass differs from 1 by more than 1e-8
        """
        lo, hi = self.box
        mass = integrate_pieces(self.pdf, [lo, hi, *[b for b in self.breakpoints() if lo < b < hi]]).value
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise NumericalError(f"{self.name}: density integrates to {mass:.12g}, not 1")
        return mass

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.describe()})"

    def describe(self) -> str:
        return str(self.support)


class Uniform(Distribution):
    """Uniform law on [a, b]."""

    name = "uniform"

    def __init__(self, a: float = 0.0, b: float = 1.0):
        if not (math.isfinite(a) and math.isfinite(b)):
            raise InputError("Uniform bounds must be finite")
        super().__init__(SupportInterval(float(a), float(b)), 1.0 / (b - a))
        self.a, self.b = float(a), float(b)
        self.check_normalization()

    def _logpdf(self, x):
        return np.full(np.shape(x), math.log(self.normalizer))

    def _cdf(self, x):
        return (x - self.a) / (self.b - self.a)

    def _quantile(self, u):
        return self.a + (self.b - self.a) * u

    def describe(self) -> str:
        return f"a={self.a:g}, b={self.b:g}"


class StdNormal(Distribution):
    """Standard normal law."""

    name = "normal"

    def __init__(self):
        super().__init__(SupportInterval(-math.inf, math.inf), 1.0 / math.sqrt(2.0 * math.pi))
        self.check_normalization()

    def _logpdf(self, x):
        return math.log(self.normalizer) - 0.5 * x * x

    def _cdf(self, x):
        return special.ndtr(x)

    def _quantile(self, u):
        return special.ndtri(u)

    def describe(self) -> str:
        return ""


def curie_weiss_normalizer(s: int, sigma: float) -> float:
    """Normalizing constant c_s of the Curie-Weiss density.

    c_s = 1 / ∫ exp(-x^{2s} / (2 s σ²)) dx, computed by adaptive quadrature on
    the half line (the integrand is even) up to the point where it drops
    below 1e-300.

    Raises:
        InputError: If s < 1 or σ <= 0
        NumericalError: If the quadrature does not converge
    """
    if int(s) != s or s < 1:
        raise InputError(f"Curie-Weiss s must be a positive integer, got {s}")
    if not sigma > 0:
        raise InputError(f"Curie-Weiss sigma must be positive, got {sigma}")
    s = int(s)
    scale = 2.0 * s * sigma * sigma
    # exp(-x^{2s}/scale) < 1e-300 beyond this point
    cutoff = (scale * 300.0 * math.log(10.0)) ** (1.0 / (2 * s))
    breaks = [0.0, *(cutoff * f for f in (0.05, 0.1, 0.2, 0.4)), cutoff]
    try:
        half = integrate_pieces(lambda x: np.exp(-np.power(x, 2 * s) / scale), breaks)
    except QuadratureError as e:
        raise NumericalError(f"Curie-Weiss normalizer did not converge: {e}") from e
    return 1.0 / (2.0 * half.value)


class CurieWeiss(Distribution):
    """Curie-Weiss limit law p(x) = c_s exp(-x^{2s} / (2 s σ²)).

    s = 1 is the normal law N(0, σ²).
    """

    name = "curie_weiss"

    def __init__(self, s: int = 1, sigma: float = 1.0):
        normalizer = curie_weiss_normalizer(s, sigma)
        super().__init__(SupportInterval(-math.inf, math.inf), normalizer)
        self.s = int(s)
        self.sigma = float(sigma)
        self._scale = 2.0 * self.s * self.sigma**2
        self._log_c = math.log(normalizer)
        self.check_normalization()

    def _logpdf(self, x):
        return self._log_c - np.power(x, 2 * self.s) / self._scale

    def _cdf(self, x):
        # Half-line mass is a regularized lower incomplete gamma function
        shape = 1.0 / (2 * self.s)
        half = 0.5 * special.gammainc(shape, np.power(np.abs(x), 2 * self.s) / self._scale)
        return 0.5 + np.sign(x) * half

    def _quantile(self, u):
        flat = np.atleast_1d(u).astype(float)
        out = np.array([self._root(level) for level in flat.reshape(-1)])
        return out.reshape(np.shape(u))

    def _root(self, level: float) -> float:
        if level == 0.5:
            return 0.0
        # σ·(2s·(-log(tail)))^{1/(2s)} bounds the quantile from above
        tail = min(level, 1.0 - level)
        bound = (self._scale * (40.0 + abs(math.log(tail)))) ** (1.0 / (2 * self.s)) + 1.0
        try:
            root = brentq(lambda x: float(self._cdf(np.array(x))) - level, -bound, bound, xtol=1e-13, rtol=4 * np.finfo(float).eps)
        except (ValueError, RuntimeError) as e:
            raise NumericalError(f"{self.name}: quantile root at level {level:g} failed: {e}") from e
        return float(root)

    @cached_property
    def _quantile_table(self) -> PchipInterpolator:
        size = settings.quantile_table_size
        level = settings.tail_level
        z = np.linspace(special.logit(level), special.logit(1.0 - level), size)
        x = self._quantile(special.expit(z))
        logger.debug(f"Built {size}-point quantile table for {self!r}")
        return PchipInterpolator(z, x, extrapolate=True)

    def _sample_quantile(self, u):
        return self._quantile_table(special.logit(u))

    def describe(self) -> str:
        return f"s={self.s}, sigma={self.sigma:g}"


class Tabulated(Distribution):
    """Piecewise-linear density through (grid, pdf_values), normalized.

    The CDF is exactly piecewise quadratic, so quantiles are closed form on
    every segment.
    """

    name = "tabulated"

    def __init__(self, grid, pdf_values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(pdf_values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) < 2:
            raise InputError("Tabulated grid and pdf values must be 1-D arrays of equal length >= 2")
        if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
            raise InputError("Tabulated grid must be finite and strictly ascending")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InputError("Tabulated pdf values must be finite and nonnegative")
        if np.any(values[1:-1] <= 0):
            raise InputError("Tabulated density must be strictly positive inside its support")
        masses = 0.5 * (values[1:] + values[:-1]) * np.diff(grid)
        total = float(np.sum(masses))
        super().__init__(SupportInterval(float(grid[0]), float(grid[-1])), 1.0 / total)
        self.grid = grid
        self.values = values / total
        self._slopes = np.diff(self.values) / np.diff(grid)
        self._cum = np.concatenate([[0.0], np.cumsum(masses / total)])
        self.check_normalization()

    def _segment(self, x):
        return np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, len(self.grid) - 2)

    def _logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(np.interp(x, self.grid, self.values))

    def _cdf(self, x):
        k = self._segment(x)
        d = x - self.grid[k]
        return self._cum[k] + self.values[k] * d + 0.5 * self._slopes[k] * d * d

    def _quantile(self, u):
        k = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, len(self.grid) - 2)
        r = u - self._cum[k]
        p = self.values[k]
        m = self._slopes[k]
        # Root of m/2 d² + p d - r = 0 in the cancellation-free form
        d = 2.0 * r / (p + np.sqrt(np.maximum(p * p + 2.0 * m * r, 0.0)))
        return np.minimum(self.grid[k] + d, self.grid[k + 1])

    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(self.grid)

    def expectation_rule(self, order: int) -> Tuple[np.ndarray, np.ndarray]:
        per_segment = max(2, -(-order // (len(self.grid) - 1)))
        nodes, weights = gauss_legendre_rule(per_segment)
        lo, hi = self.grid[:-1, None], self.grid[1:, None]
        half = 0.5 * (hi - lo)
        x = (0.5 * (hi + lo) + half * nodes[None, :]).reshape(-1)
        w = (half * weights[None, :]).reshape(-1) * self.pdf(x)
        return x, w / np.sum(w)

    def describe(self) -> str:
        return f"{len(self.grid)} points on {self.support}"


def build_distribution(kind: str, **params) -> Distribution:
    """Construct a distribution from its declared kind and parameters."""
    kind = kind.lower()
    if kind == "uniform":
        return Uniform(params.get("a", 0.0), params.get("b", 1.0))
    if kind in ("normal", "std_normal", "stdnormal"):
        return StdNormal()
    if kind in ("curie_weiss", "curieweiss"):
        return CurieWeiss(params.get("s", 1), params.get("sigma", 1.0))
    if kind == "tabulated":
        return Tabulated(params["grid"], params["pdf"])
    raise InputError(f"Unknown distribution kind: {kind}")


def parse_distribution(declaration: str) -> Distribution:
    """Build a distribution from a shorthand such as ``uniform:0:1``,
    ``normal`` or ``curie_weiss:2:1``."""
    parts = [p.strip() for p in declaration.split(":")]
    kind, args = parts[0].lower(), parts[1:]
    try:
        if kind == "uniform":
            return Uniform(*(float(a) for a in args)) if args else Uniform()
        if kind in ("normal", "std_normal"):
            return StdNormal()
        if kind == "curie_weiss":
            s = int(args[0]) if args else 1
            sigma = float(args[1]) if len(args) > 1 else 1.0
            return CurieWeiss(s, sigma)
    except (TypeError, ValueError) as e:
        raise InputError(f"Invalid distribution declaration '{declaration}': {e}") from e
    raise InputError(f"Unknown distribution declaration '{declaration}'")
