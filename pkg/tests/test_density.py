"""Tests for existence verdicts, reconstruction and density transforms."""
import math

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

from src.conditional import ConditionalEstimate, collect, estimate_theta
from src.decomposition import ExplicitDecomposition
from src.density import (
    DensityEstimate,
    Verdict,
    bounds,
    check_existence,
    conditional_identity_rhs,
    discrete_mixture,
    empirical_density,
    irwin_hall_identity_rhs,
    l1_distance,
    linf_distance,
    phi_and_theta_from_density,
    reconstruct,
    theta_for_reconstruction,
)
from src.distributions import CurieWeiss, StdNormal, SupportInterval
from src.errors import ExistenceError, InputError, PreconditionError, SupportBoundaryError
from src.expressions import parse
from src.reference import chi_square_pdf, curie_weiss_theta_bounds, irwin_hall_pdf, normal_pdf


def binned(means, se, counts=None):
    means = np.asarray(means, dtype=float)
    bins = len(means)
    counts = np.full(bins, 1000) if counts is None else np.asarray(counts)
    return ConditionalEstimate(
        bin_edges=np.linspace(-1.0, 1.0, bins + 1),
        bin_means=np.maximum(means, 0.0),
        bin_se=np.broadcast_to(np.asarray(se, dtype=float), (bins,)).copy(),
        counts=counts,
        raw_means=means,
        clipped=means < 0,
    )


def triangle(points=2001):
    grid = np.linspace(-1.0, 1.0, points)
    return DensityEstimate(grid=grid, pdf_values=1.0 - np.abs(grid), support=SupportInterval(-1.0, 1.0), c=1.0)


class TestExistence:
    def test_supported(self):
        verdict = check_existence(binned(np.ones(10), 0.01))
        assert verdict.verdict is Verdict.SUPPORTED
        assert verdict.zero_regions == []
        assert verdict.mass_at_risk == 0.0

    def test_rejected_on_zero_bins(self):
        means = np.r_[np.zeros(5), np.ones(5)]
        se = np.r_[np.zeros(5), np.full(5, 0.01)]
        verdict = check_existence(binned(means, se))
        assert verdict.verdict is Verdict.REJECTED
        assert verdict.mass_at_risk == pytest.approx(0.5)
        assert verdict.zero_regions == [(-1.0, pytest.approx(0.0))]
        assert verdict.flagged_bins == 5

    def test_small_bins_do_not_reject(self):
        means = np.r_[0.0, np.ones(9)]
        verdict = check_existence(binned(means, 0.01, counts=np.full(10, 100)))
        assert verdict.verdict is Verdict.INCONCLUSIVE

    def test_inconclusive_when_weakly_positive(self):
        means = np.r_[0.02, np.ones(9)]
        verdict = check_existence(binned(means, 0.01))
        assert verdict.verdict is Verdict.INCONCLUSIVE
        assert verdict.to_dict()["verdict"] == "inconclusive"
        assert verdict.mass_at_risk == pytest.approx(0.1)


class TestThetaForReconstruction:
    def weak_first_bin(self):
        # one empty bin with too few samples to reject
        return binned(np.r_[0.0, np.ones(9)], 0.01, counts=np.full(10, 100))

    def test_supported_estimate_is_unchanged(self):
        estimate = binned(np.ones(10), 0.01)
        assert theta_for_reconstruction(estimate, check_existence(estimate)) is estimate

    def test_inconclusive_is_floored_not_rejected(self):
        estimate = self.weak_first_bin()
        verdict = check_existence(estimate)
        assert verdict.verdict is Verdict.INCONCLUSIVE
        with pytest.raises(ExistenceError):
            reconstruct(estimate, (-0.99, 0.99))
        density = reconstruct(theta_for_reconstruction(estimate, verdict), (-0.99, 0.99))
        assert density.floored
        assert density.mass() == pytest.approx(1.0, abs=1e-12)

    def test_rejected_needs_force(self):
        means = np.r_[np.zeros(5), np.ones(5)]
        estimate = binned(means, np.r_[np.zeros(5), np.full(5, 0.01)])
        verdict = check_existence(estimate)
        with pytest.raises(ExistenceError) as info:
            theta_for_reconstruction(estimate, verdict)
        assert info.value.verdict is verdict
        forced = theta_for_reconstruction(estimate, verdict, force=True)
        assert np.all(forced(np.linspace(-1.0, 1.0, 51)) > 0.0)


class TestReconstruct:
    def test_constant_theta_is_gaussian(self):
        density = reconstruct(lambda t: np.ones_like(t), (-8.0, 8.0), grid_size=512)
        assert density.evaluate(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=5e-4)
        assert density.c == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=5e-4)
        assert density.mass() == pytest.approx(1.0, abs=1e-12)
        assert l1_distance(density, lambda x: normal_pdf(1.0, x)) < 1e-3

    def test_variance_of_constant_theta(self):
        density = reconstruct(lambda t: np.full_like(t, 4.0), (-20.0, 20.0), grid_size=2048)
        assert linf_distance(density, lambda x: normal_pdf(4.0, x)) < 1e-4

    def test_chi_square_two_degrees(self):
        # θ(t) = 2(t + 2) is the kernel of a chi-square law with 2 degrees, centered at 2
        lo, hi = -1.9, 28.0
        density = reconstruct(lambda t: 2.0 * (t + 2.0), (lo, hi), grid_size=4096, center_shift=2.0, floor=False)
        kept = math.exp(-(lo + 2.0) / 2.0) - math.exp(-(hi + 2.0) / 2.0)
        expected = 0.5 * math.exp(-1.0) / kept
        assert density.evaluate_shifted(2.0) == pytest.approx(expected, rel=1e-3)
        assert 0.5 * math.exp(-1.0) == pytest.approx(0.18394, abs=1e-5)

    def test_shifted_grid(self):
        density = reconstruct(lambda t: np.ones_like(t), (-5.0, 5.0), grid_size=101, center_shift=3.0)
        np.testing.assert_allclose(density.shifted_grid, density.grid + 3.0)
        rows = density.rows()
        assert rows[50]["x_shifted"] == pytest.approx(3.0)
        assert set(rows[0]) == {"x", "pdf", "x_shifted", "pdf_shifted"}

    def test_range_must_contain_zero(self):
        with pytest.raises(PreconditionError):
            reconstruct(lambda t: np.ones_like(t), (0.5, 3.0))

    def test_vanishing_theta(self):
        with pytest.raises(ExistenceError) as info:
            reconstruct(lambda t: np.where(t < -1.0, 0.0, 1.0), (-3.0, 3.0), grid_size=601)
        assert info.value.location == pytest.approx(-3.0)

    def test_floor_is_reported(self):
        density = reconstruct(lambda t: np.where(np.abs(t) > 2.0, 1e-6, 1.0), (-3.0, 3.0))
        assert density.floored

    def test_recentered(self):
        density = reconstruct(lambda t: 2.0 * (t + 2.0), (-1.9, 20.0), grid_size=2048, floor=False)
        shifted = density.recentered()
        assert shifted.mean() == pytest.approx(0.0, abs=1e-10)
        assert shifted.center_shift == pytest.approx(density.mean())


class TestBounds:
    def test_equal_envelopes_match_density(self):
        density = reconstruct(lambda t: np.ones_like(t), (-6.0, 6.0))
        envelopes = bounds(lambda t: np.ones_like(t), lambda t: np.ones_like(t), density.grid, c=density.c)
        np.testing.assert_allclose(envelopes.lower, envelopes.upper)
        assert envelopes.contains(density).all()

    def test_sandwich_for_linear_theta(self):
        density = reconstruct(lambda t: 3.0 * (t + 3.0), (-2.5, 10.0))
        envelopes = bounds(lambda t: 2.0 * (t + 3.0), lambda t: 4.0 * (t + 3.0), density.grid, c=density.c)
        assert np.all(envelopes.lower <= envelopes.upper)
        assert envelopes.contains(density).all()

    def test_crossing_envelopes(self):
        grid = np.linspace(-1.0, 1.0, 11)
        with pytest.raises(InputError):
            bounds(lambda t: np.full_like(t, 2.0), lambda t: np.ones_like(t), grid)

    def test_nonpositive_lower_envelope(self):
        grid = np.linspace(-1.0, 1.0, 11)
        with pytest.raises(InputError):
            bounds(lambda t: t, lambda t: np.full_like(t, 2.0), grid)


class TestInverseRelation:
    def test_triangle_theta(self):
        phi, theta = phi_and_theta_from_density(triangle())
        grid = triangle().grid
        zero = int(np.argmin(np.abs(grid)))
        half = int(np.argmin(np.abs(grid - 0.5)))
        assert phi[zero] == pytest.approx(1.0 / 6.0, abs=1e-6)
        assert theta[zero] == pytest.approx(1.0 / 6.0, abs=1e-6)
        # (1 - x)(1 + 2x)/6 at x = 1/2
        assert theta[half] == pytest.approx(1.0 / 6.0, abs=1e-5)
        assert np.isnan(theta[-1])

    def test_needs_normalized_density(self):
        p = triangle()
        with pytest.raises(PreconditionError):
            phi_and_theta_from_density(DensityEstimate(p.grid, 2.0 * p.pdf_values, p.support, 1.0))

    def test_needs_centered_density(self):
        p = triangle()
        moved = DensityEstimate(p.grid + 1.0, p.pdf_values, SupportInterval(0.0, 2.0), 1.0)
        with pytest.raises(PreconditionError):
            phi_and_theta_from_density(moved)
        phi, _ = phi_and_theta_from_density(moved.recentered())
        assert phi[1000] == pytest.approx(1.0 / 6.0, abs=1e-6)

    def test_recovers_theta_used_for_reconstruction(self):
        # θ(t) = 1 + t²/4 belongs to p(t) ∝ (1 + t²/4)^-3
        theta = lambda t: 1.0 + 0.25 * t**2
        density = reconstruct(theta, (-20.0, 20.0), grid_size=2001, floor=False)
        _, recovered = phi_and_theta_from_density(density)
        cdf = cumulative_trapezoid(density.pdf_values, density.grid, initial=0.0)
        central = (cdf > 0.05) & (cdf < 0.95)
        assert central.sum() > 100
        np.testing.assert_allclose(recovered[central], theta(density.grid[central]), rtol=5e-3)


class TestConditionalIdentity:
    def test_irwin_hall_exact(self):
        assert irwin_hall_identity_rhs(2, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-10)
        assert irwin_hall_identity_rhs(2, 0.5) == pytest.approx(1.0 / 6.0, abs=1e-10)
        assert irwin_hall_identity_rhs(1, 0.7) == pytest.approx(0.49, abs=1e-12)
        assert irwin_hall_identity_rhs(3, 1.0) == pytest.approx(0.5, abs=1e-10)

    def test_outside_support(self):
        with pytest.raises(SupportBoundaryError):
            irwin_hall_identity_rhs(2, 2.5)

    def test_on_a_density_grid(self):
        grid = np.linspace(0.0, 2.0, 4001)
        p = DensityEstimate(grid, irwin_hall_pdf(2, grid), SupportInterval(0.0, 2.0), 1.0)
        assert conditional_identity_rhs(p, 1.0, irwin_hall_n=2) == pytest.approx(2.0 / 3.0, abs=1e-5)

    def test_generic_form(self):
        phi_zero = conditional_identity_rhs(triangle(), 0.0)
        assert phi_zero == pytest.approx(1.0 / 6.0, abs=1e-6)
        with pytest.raises(SupportBoundaryError):
            conditional_identity_rhs(triangle(), 1.5)


class TestMixturesAndHistograms:
    def test_mixture_of_two_gaussians(self):
        a = reconstruct(lambda t: np.ones_like(t), (-8.0, 8.0), center_shift=-2.0)
        b = reconstruct(lambda t: np.ones_like(t), (-8.0, 8.0), center_shift=2.0)
        mixture = discrete_mixture([(0.25, a), (0.75, b)])
        assert mixture.center_shift == 0.0
        assert mixture.mass() == pytest.approx(1.0, abs=1e-12)
        assert mixture.mean() == pytest.approx(1.0, abs=1e-3)
        assert mixture.evaluate(2.0) == pytest.approx(0.75 / math.sqrt(2.0 * math.pi), rel=2e-3)

    def test_mixture_probabilities_checked(self):
        a = reconstruct(lambda t: np.ones_like(t), (-8.0, 8.0))
        with pytest.raises(InputError):
            discrete_mixture([(0.5, a), (0.6, a)])
        with pytest.raises(InputError):
            discrete_mixture([(1.0, a), (0.0, a)])
        with pytest.raises(InputError):
            discrete_mixture([])

    def test_empirical_density(self):
        samples = np.random.default_rng(0).standard_normal(200_000)
        density = empirical_density(samples, bins=64, value_range=(-5.0, 5.0))
        assert density.mass() == pytest.approx(1.0)
        assert density.evaluate(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=0.01)

    def test_distance_between_estimates(self):
        a = reconstruct(lambda t: np.ones_like(t), (-8.0, 8.0))
        assert l1_distance(a, a) == 0.0
        assert linf_distance(a, a) == 0.0


def quadratic_form(dist, alphas, samples, seed):
    n = len(alphas)
    second = dist.moment(2)
    statistic = " + ".join(f"{a!r}*x{k}^2" for k, a in enumerate(alphas, start=1))
    components = [(parse(f"{a!r}*(x{k}^2 - {second!r})", n), k) for k, a in enumerate(alphas, start=1)]
    decomposition = ExplicitDecomposition(parse(statistic, n), [dist] * n, components)
    return collect(decomposition, samples, seed=seed)


@pytest.mark.slow
class TestSampledPipeline:
    def test_chi_square_two_degrees(self):
        batch = quadratic_form(StdNormal(), [1.0, 1.0], 200_000, seed=11)
        estimate = estimate_theta(batch)
        assert check_existence(estimate).verdict is Verdict.SUPPORTED
        density = reconstruct(estimate, batch.central_range(), 512, center_shift=batch.center)
        assert batch.center == pytest.approx(2.0, abs=1e-6)
        assert l1_distance(density, lambda x: chi_square_pdf(2, x)) < 0.05

    def test_curie_weiss_envelopes(self):
        sigma, alphas = 1.0, [1.0, 2.0]
        batch = quadratic_form(CurieWeiss(1, sigma), alphas, 200_000, seed=12)
        estimate = estimate_theta(batch)
        lower, upper = curie_weiss_theta_bounds(1, sigma, alphas)

        inner = slice(2, -2)
        lo_edges, hi_edges = estimate.bin_edges[:-1][inner], estimate.bin_edges[1:][inner]
        slack = 3.0 * estimate.bin_se[inner]
        means = estimate.bin_means[inner]
        assert np.all(means >= lower(lo_edges) - slack)
        assert np.all(means <= upper(hi_edges) + slack)

        density = reconstruct(estimate, batch.central_range(0.05), 512, center_shift=batch.center)
        assert not density.floored
        envelopes = bounds(lower, upper, density.grid, c=density.c)
        assert envelopes.contains(density).all()
