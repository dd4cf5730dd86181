"""Closed-form reference densities, θ envelopes and identity oracles.

Reference cases are addressable by name (see ``get_reference``):

    chi_square:<k>                  chi-square density with k degrees of freedom
    irwin_hall:<n>                  sum of n independent U(0, 1) variables
    normal:<v>                      N(0, v)
    curie_weiss:<s>:<sigma>:<a,..>  W = Σ a_k X_k^{2s} with Curie-Weiss inputs
    gaussian:<s1sq>:<s2sq>          Gaussian-input statistic with s1sq <= θ <= s2sq
    uif:<n>                         conditional second-moment identity table
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from src.distributions import SupportInterval
from src.errors import InputError, PrecisionError, UnknownReferenceError, WindowError
from src.random_streams import RandomStream, map_blocks

logger = logging.getLogger(__name__)

IRWIN_HALL_MAX_N = 25
DEFAULT_WINDOW = 0.01
UIF_POINTS = (0.5, 1.0, 1.5)

Evaluable = Callable[[np.ndarray], np.ndarray]


def _irwin_hall_scalar(n: int, x: float) -> float:
    if not 0.0 < x < n:
        return 0.0
    terms = [(-1) ** k * math.comb(n, k) * (x - k) ** (n - 1) for k in range(n) if k < x]
    return max(0.0, math.fsum(terms) / math.factorial(n - 1))


def irwin_hall_pdf(n: int, x):
    """Density of the sum of ``n`` independent U(0, 1) variables.

    Alternating binomial sum with compensated summation; zero outside (0, n).

    Raises:
        InputError: If n < 1
        PrecisionError: If n > 25, where the alternating sum cancels
            catastrophically
    """
    if int(n) != n or n < 1:
        raise InputError(f"Irwin-Hall n must be a positive integer, got {n}")
    n = int(n)
    if n > IRWIN_HALL_MAX_N:
        raise PrecisionError(f"Irwin-Hall density for n = {n} > {IRWIN_HALL_MAX_N} loses all precision")
    if np.ndim(x) == 0:
        return _irwin_hall_scalar(n, float(x))
    x = np.asarray(x, dtype=float)
    return np.fromiter((_irwin_hall_scalar(n, v) for v in x.reshape(-1)), float, x.size).reshape(x.shape)


def chi_square_pdf(k: float, x):
    """Chi-square density with ``k`` (possibly fractional) degrees of freedom.

    Computed in log space via log-gamma. At x = 0 with k < 2 the density is
    infinite; the largest finite float is returned there and
    ``chi_square_diverges`` reports the point.
    """
    if not k > 0:
        raise InputError(f"Degrees of freedom must be positive, got {k}")
    x_arr = np.asarray(x, dtype=float)
    half = 0.5 * k
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = special.xlogy(half - 1.0, x_arr) - 0.5 * x_arr - half * math.log(2.0) - special.gammaln(half)
        values = np.where(x_arr < 0.0, 0.0, np.exp(log_p))
    values = np.where(np.isposinf(values), np.finfo(float).max, values)
    return float(values) if np.ndim(x) == 0 else values


def chi_square_diverges(k: float, x) -> np.ndarray | bool:
    """Marker for the points where ``chi_square_pdf`` returned its divergence flag."""
    x_arr = np.asarray(x, dtype=float)
    flag = (k < 2.0) & (x_arr == 0.0)
    return bool(flag) if np.ndim(x) == 0 else flag


def normal_pdf(variance: float, x):
    """N(0, variance) density."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x / variance) / math.sqrt(2.0 * math.pi * variance)


@dataclass(frozen=True)
class CurieWeissParameters:
    """Shape constants of W = Σ α_k X_k^{2s} with Curie-Weiss inputs."""

    s: int
    sigma: float
    alphas: Tuple[float, ...]

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise InputError(f"Curie-Weiss s must be a positive integer, got {self.s}")
        if not self.sigma > 0:
            raise InputError(f"Curie-Weiss sigma must be positive, got {self.sigma}")
        if not self.alphas or any(a <= 0 for a in self.alphas):
            raise InputError("Curie-Weiss weights must be positive")

    @property
    def scale(self) -> float:
        return 2.0 * self.s * self.sigma**2

    @property
    def alpha_min(self) -> float:
        return min(self.alphas)

    @property
    def alpha_max(self) -> float:
        return max(self.alphas)

    @property
    def beta(self) -> float:
        """E[W] = σ² Σ α_k."""
        return self.sigma**2 * sum(self.alphas)

    @property
    def is_chi_square(self) -> bool:
        target = 1.0 / (self.s * self.sigma**2)
        return all(math.isclose(a, target, rel_tol=1e-12) for a in self.alphas)

    @property
    def chi_square_degrees(self) -> float:
        return len(self.alphas) / self.s


def curie_weiss_bounds(s: int, sigma: float, alphas: Sequence[float], x) -> Tuple:
    """Lower and upper envelopes of the density of W, with c = 1.

    lower(x) = exp(-(x-β)/(λ α_*)) x^{β/(λ α_*) - 1} / (λ α^* β^{β/(λ α_*)})
    upper(x) = exp(-(x-β)/(λ α^*)) x^{β/(λ α^*) - 1} / (λ α_* β^{β/(λ α^*)})

    with λ = 2sσ² and β = σ² Σ α_k.

    Raises:
        InputError: If x < 0 or a weight is not positive
    """
    params = CurieWeissParameters(int(s), float(sigma), tuple(float(a) for a in alphas))
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise InputError("Curie-Weiss envelopes are defined for x >= 0")
    beta, lam = params.beta, params.scale

    def envelope(rate_alpha: float, front_alpha: float) -> np.ndarray:
        shape = beta / (lam * rate_alpha)
        with np.errstate(divide="ignore"):
            log_value = (
                -(x_arr - beta) / (lam * rate_alpha)
                + special.xlogy(shape - 1.0, x_arr)
                - math.log(lam * front_alpha)
                - shape * math.log(beta)
            )
        return np.exp(log_value)

    lower = envelope(params.alpha_min, params.alpha_max)
    upper = envelope(params.alpha_max, params.alpha_min)
    if np.ndim(x) == 0:
        return float(lower), float(upper)
    return lower, upper


def curie_weiss_theta_bounds(s: int, sigma: float, alphas: Sequence[float]) -> Tuple[Evaluable, Evaluable]:
    """θ envelopes 2sσ²α_*(t+β) and 2sσ²α^*(t+β) for the centered statistic."""
    params = CurieWeissParameters(int(s), float(sigma), tuple(float(a) for a in alphas))
    lam, beta = params.scale, params.beta
    lower = lambda t: lam * params.alpha_min * (np.asarray(t, dtype=float) + beta)
    upper = lambda t: lam * params.alpha_max * (np.asarray(t, dtype=float) + beta)
    return lower, upper


def gaussian_theta_bounds(
    derivative_lower: Sequence[float],
    derivative_upper: Sequence[float],
) -> Tuple[float, float]:
    """θ bounds for a statistic of standard normal inputs from bounds on its
    partial derivatives: σ₁² = Σ α_k² <= θ <= σ₂² = Σ β_k².

    Raises:
        InputError: On negative, mismatched or crossing derivative bounds
    """
    lo = np.asarray(derivative_lower, dtype=float)
    hi = np.asarray(derivative_upper, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise InputError("Derivative bounds must be two vectors of equal length")
    if np.any(lo < 0) or np.any(lo > hi):
        raise InputError("Derivative bounds must satisfy 0 <= lower <= upper")
    return float(np.sum(lo**2)), float(np.sum(hi**2))


@dataclass(frozen=True)
class OracleEstimate:
    """Windowed Monte Carlo estimate with its standard error."""

    value: float
    std_error: float
    accepted: int
    window: float


def uif_lhs_oracle(
    n: int,
    x: float,
    samples: int,
    seed: int = 0,
    window: float = DEFAULT_WINDOW,
    workers: int | None = None,
) -> OracleEstimate:
    """E[X_1² + ... + X_n² | X_1 + ... + X_n = x] for U(0, 1) inputs.

    Conditioning is approximated by accepting draws with |Σ X_k - x| < w;
    the window bias is O(w²).

    Raises:
        InputError: If x is not inside (0, n)
        WindowError: If fewer than two draws land in the window
    """
    if not 0.0 < x < n:
        raise InputError(f"x must lie in (0, {n}), got {x}")

    def block(stream: RandomStream, start: int, count: int) -> np.ndarray:
        u = stream.uniform((n, count))
        keep = np.abs(u.sum(axis=0) - x) < window
        return np.sum(u[:, keep] ** 2, axis=0)

    accepted = np.concatenate(map_blocks(samples, seed, "uif_oracle", block, workers))
    if accepted.size < 2:
        raise WindowError(f"Only {accepted.size} of {samples} draws fell within {window} of x = {x}")
    logger.debug(f"uif oracle n={n}, x={x}: accepted {accepted.size} of {samples}")
    return OracleEstimate(
        value=float(accepted.mean()),
        std_error=float(accepted.std(ddof=1) / math.sqrt(accepted.size)),
        accepted=int(accepted.size),
        window=window,
    )


@dataclass(frozen=True)
class ReferenceCase:
    """A named reference law or identity.

    ``pdf`` is in the statistic's own (un-centered) coordinates. ``theta_bounds``
    holds θ envelopes in centered coordinates when the case has them.
    """

    name: str
    provenance: str
    support: SupportInterval
    pdf: Optional[Evaluable] = None
    theta_bounds: Optional[Tuple[Evaluable, Evaluable]] = None
    identity_order: Optional[int] = None
    parameters: Dict = field(default_factory=dict)

    @property
    def has_density(self) -> bool:
        return self.pdf is not None

    @property
    def has_envelopes(self) -> bool:
        return self.theta_bounds is not None

    @property
    def is_identity(self) -> bool:
        return self.identity_order is not None


def _numbers(parts: List[str], name: str) -> List[float]:
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise UnknownReferenceError(f"Malformed reference '{name}': {e}") from e


def _constant(value: float) -> Evaluable:
    return lambda t: np.full(np.shape(t), value, dtype=float)


def get_reference(name: str) -> ReferenceCase:
    """Look up a reference case by its name (see the module docstring).

    Raises:
        UnknownReferenceError: For unknown or malformed names
    """
    parts = [p.strip() for p in name.split(":")]
    kind, args = parts[0].lower(), parts[1:]

    if kind == "chi_square" and len(args) == 1:
        (k,) = _numbers(args, name)
        if not k > 0:
            raise UnknownReferenceError(f"Malformed reference '{name}': degrees must be positive")
        return ReferenceCase(
            name=name,
            provenance=f"chi-square law with {k:g} degrees of freedom",
            support=SupportInterval(0.0, math.inf),
            pdf=lambda x, k=k: chi_square_pdf(k, x),
            parameters={"k": k},
        )

    if kind == "irwin_hall" and len(args) == 1:
        (n,) = _numbers(args, name)
        if int(n) != n or not 1 <= n <= IRWIN_HALL_MAX_N:
            raise UnknownReferenceError(f"Malformed reference '{name}': n must be an integer in 1..{IRWIN_HALL_MAX_N}")
        n = int(n)
        return ReferenceCase(
            name=name,
            provenance=f"sum of {n} independent U(0, 1) variables",
            support=SupportInterval(0.0, float(n)),
            pdf=lambda x, n=n: irwin_hall_pdf(n, x),
            parameters={"n": n},
        )

    if kind == "normal" and len(args) <= 1:
        variance = _numbers(args, name)[0] if args else 1.0
        if not variance > 0:
            raise UnknownReferenceError(f"Malformed reference '{name}': variance must be positive")
        return ReferenceCase(
            name=name,
            provenance=f"centered normal law with variance {variance:g}",
            support=SupportInterval(-math.inf, math.inf),
            pdf=lambda x, v=variance: normal_pdf(v, x),
            theta_bounds=(_constant(variance), _constant(variance)),
            parameters={"variance": variance},
        )

    if kind == "gaussian" and len(args) == 2:
        low, high = _numbers(args, name)
        if not 0 < low <= high:
            raise UnknownReferenceError(f"Malformed reference '{name}': need 0 < s1sq <= s2sq")
        return ReferenceCase(
            name=name,
            provenance="statistic of standard normal inputs with bounded partial derivatives",
            support=SupportInterval(-math.inf, math.inf),
            pdf=(lambda x, v=low: normal_pdf(v, x)) if low == high else None,
            theta_bounds=(_constant(low), _constant(high)),
            parameters={"sigma1_sq": low, "sigma2_sq": high},
        )

    if kind == "curie_weiss" and len(args) == 3:
        s, sigma = _numbers(args[:2], name)
        alphas = tuple(_numbers([a for a in args[2].split(",") if a], name))
        try:
            params = CurieWeissParameters(int(s), sigma, alphas)
        except InputError as e:
            raise UnknownReferenceError(f"Malformed reference '{name}': {e}") from e
        pdf = None
        if params.is_chi_square:
            degrees = params.chi_square_degrees
            pdf = lambda x, k=degrees: chi_square_pdf(k, x)
        return ReferenceCase(
            name=name,
            provenance=f"weighted sum of Curie-Weiss powers with s={params.s}, sigma={sigma:g}",
            support=SupportInterval(0.0, math.inf),
            pdf=pdf,
            theta_bounds=curie_weiss_theta_bounds(params.s, sigma, alphas),
            parameters={"s": params.s, "sigma": sigma, "alphas": list(alphas), "beta": params.beta},
        )

    if kind == "uif" and len(args) == 1:
        (n,) = _numbers(args, name)
        if int(n) != n or not 1 <= n <= IRWIN_HALL_MAX_N:
            raise UnknownReferenceError(f"Malformed reference '{name}': n must be an integer in 1..{IRWIN_HALL_MAX_N}")
        return ReferenceCase(
            name=name,
            provenance=f"conditional second moment of {int(n)} uniforms given their sum",
            support=SupportInterval(0.0, float(n)),
            identity_order=int(n),
            parameters={"n": int(n), "points": [x for x in UIF_POINTS if x < n]},
        )

    raise UnknownReferenceError(f"Unknown reference case '{name}'")
