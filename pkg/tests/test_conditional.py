"""Tests for binned estimation of θ(t) = E[Θ | T = t]."""
import numpy as np
import pytest

from src.conditional import SampleBatch, collect, default_bins, estimate_theta, evaluate
from src.decomposition import ExplicitDecomposition
from src.distributions import StdNormal, Uniform
from src.errors import DegenerateStatisticError, InputError, NumericalError
from src.expressions import parse


def linear_gaussian():
    normal = StdNormal()
    return ExplicitDecomposition(
        parse("x1 + 2*x2", 2), [normal, normal], [(parse("x1", 2), 1), (parse("2*x2", 2), 2)]
    )


def synthetic_batch(n=20_000, seed=0):
    rng = np.random.default_rng(seed)
    t = rng.uniform(-1.0, 1.0, n)
    return SampleBatch(t_values=t, theta_values=2.0 + t, seed=seed)


class TestSampleBatch:
    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            SampleBatch(t_values=np.zeros(3), theta_values=np.zeros(4), seed=0)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericalError):
            SampleBatch(t_values=np.array([0.0, np.nan]), theta_values=np.zeros(2), seed=0)

    def test_central_range(self):
        batch = synthetic_batch()
        lo, hi = batch.central_range(0.005)
        assert lo == pytest.approx(-0.99, abs=0.01)
        assert hi == pytest.approx(0.99, abs=0.01)
        assert batch.size == 20_000


class TestEstimateTheta:
    def test_default_bins(self):
        assert default_bins(100) == 10
        assert default_bins(100_000) == 63
        assert default_bins(10**7) == 200

    def test_recovers_linear_regression(self):
        estimate = estimate_theta(synthetic_batch(), bins=20)
        assert estimate.bins == 20
        assert estimate.total == 20_000
        np.testing.assert_array_equal(estimate.counts, np.full(20, 1000))
        np.testing.assert_allclose(estimate.bin_means, 2.0 + estimate.midpoints, atol=0.01)
        assert not estimate.clipped.any()

    def test_equal_count_edges_are_sorted(self):
        estimate = estimate_theta(synthetic_batch(), bins=10)
        assert np.all(np.diff(estimate.bin_edges) > 0)
        assert len(estimate.rows()) == 10
        assert set(estimate.rows()[0]) == {"bin_lo", "bin_hi", "t_mid", "theta_mean", "theta_se", "count"}

    def test_negative_means_are_clipped(self):
        rng = np.random.default_rng(1)
        t = rng.uniform(-1.0, 1.0, 10_000)
        batch = SampleBatch(t_values=t, theta_values=t, seed=1)
        estimate = estimate_theta(batch, bins=10)
        assert estimate.clipped[:5].all()
        assert np.all(estimate.bin_means >= 0.0)
        assert np.all(estimate.raw_means[:5] < 0.0)

    def test_constant_statistic(self):
        batch = SampleBatch(t_values=np.full(1000, 0.5), theta_values=np.zeros(1000), seed=0)
        with pytest.raises(DegenerateStatisticError):
            estimate_theta(batch, bins=10)

    def test_bin_count_limits(self):
        batch = synthetic_batch(n=1000)
        with pytest.raises(InputError):
            estimate_theta(batch, bins=4)
        with pytest.raises(InputError):
            estimate_theta(batch, bins=50)

    def test_evaluate_interpolates_and_clamps(self):
        estimate = estimate_theta(synthetic_batch(), bins=20)
        mids = estimate.midpoints
        value, se = evaluate(estimate, mids[3])
        assert value == pytest.approx(estimate.bin_means[3])
        assert se == pytest.approx(estimate.bin_se[3])
        far = evaluate(estimate, np.array([-10.0, 10.0]))[0]
        np.testing.assert_allclose(far, [estimate.bin_means[0], estimate.bin_means[-1]])
        assert estimate(0.0) == pytest.approx(2.0, abs=0.02)


class TestCollect:
    def test_needs_enough_samples(self):
        with pytest.raises(InputError):
            collect(linear_gaussian(), samples=9_999)

    def test_linear_gaussian_theta_is_constant(self):
        batch = collect(linear_gaussian(), samples=10_000, seed=3, workers=2)
        assert batch.size == 10_000
        np.testing.assert_allclose(batch.theta_values, 5.0, rtol=1e-6)
        assert abs(batch.t_values.mean()) < 0.1
        estimate = estimate_theta(batch)
        np.testing.assert_allclose(estimate.bin_means, 5.0, rtol=1e-6)

    def test_reproducible_across_workers(self):
        decomposition = ExplicitDecomposition(
            parse("x1 + x2", 2), [Uniform(), Uniform()], [(parse("x1 - 0.5", 2), 1), (parse("x2 - 0.5", 2), 2)]
        )
        a = collect(decomposition, samples=20_000, seed=9, workers=1)
        b = collect(decomposition, samples=20_000, seed=9, workers=4)
        np.testing.assert_array_equal(a.t_values, b.t_values)
        np.testing.assert_array_equal(a.theta_values, b.theta_values)
