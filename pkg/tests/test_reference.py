"""Tests for closed-form reference cases and oracles."""
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from src.density import irwin_hall_identity_rhs
from src.errors import InputError, PrecisionError, UnknownReferenceError, WindowError
from src.reference import (
    CurieWeissParameters,
    chi_square_diverges,
    chi_square_pdf,
    curie_weiss_bounds,
    curie_weiss_theta_bounds,
    gaussian_theta_bounds,
    get_reference,
    irwin_hall_pdf,
    normal_pdf,
    uif_lhs_oracle,
)


class TestIrwinHall:
    @pytest.mark.parametrize(
        "n, x, expected",
        [(1, 0.5, 1.0), (2, 1.0, 1.0), (2, 0.5, 0.5), (3, 1.5, 0.75), (3, 0.5, 0.125)],
    )
    def test_known_values(self, n, x, expected):
        assert irwin_hall_pdf(n, x) == pytest.approx(expected, abs=1e-14)

    def test_zero_outside_support(self):
        np.testing.assert_array_equal(irwin_hall_pdf(3, np.array([-0.5, 0.0, 3.0, 4.0])), 0.0)

    def test_vectorized_and_normalized(self):
        grid = np.linspace(0.0, 4.0, 4001)
        values = irwin_hall_pdf(4, grid)
        assert values.shape == grid.shape
        assert trapezoid(values, grid) == pytest.approx(1.0, abs=1e-6)

    def test_precision_limit(self):
        irwin_hall_pdf(25, 12.5)
        with pytest.raises(PrecisionError):
            irwin_hall_pdf(26, 13.0)

    def test_invalid_order(self):
        with pytest.raises(InputError):
            irwin_hall_pdf(0, 0.5)


class TestChiSquare:
    def test_known_values(self):
        assert chi_square_pdf(2, 2.0) == pytest.approx(0.5 * math.exp(-1.0), rel=1e-14)
        assert chi_square_pdf(2, 2.0) == pytest.approx(0.18394, abs=1e-5)
        assert chi_square_pdf(2, 0.0) == pytest.approx(0.5)
        assert chi_square_pdf(3, -1.0) == 0.0

    def test_divergence_flag(self):
        assert chi_square_pdf(1, 0.0) == np.finfo(float).max
        assert chi_square_diverges(1, 0.0)
        assert not chi_square_diverges(2, 0.0)

    def test_fractional_degrees(self):
        # Fractional degrees go through log-gamma
        grid = np.linspace(1e-6, 60.0, 200_001)
        mass = trapezoid(chi_square_pdf(4.5, grid), grid)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_normal(self):
        assert normal_pdf(1.0, 0.0) == pytest.approx(0.3989423, abs=1e-7)


class TestCurieWeissReference:
    def test_parameters(self):
        params = CurieWeissParameters(1, 1.0, (1.0, 2.0))
        assert params.scale == 2.0
        assert params.beta == 3.0
        assert (params.alpha_min, params.alpha_max) == (1.0, 2.0)
        assert not params.is_chi_square
        chi = CurieWeissParameters(1, 1.0, (1.0, 1.0, 1.0))
        assert chi.is_chi_square
        assert chi.chi_square_degrees == 3.0

    def test_invalid_parameters(self):
        with pytest.raises(InputError):
            CurieWeissParameters(0, 1.0, (1.0,))
        with pytest.raises(InputError):
            CurieWeissParameters(1, 1.0, (1.0, -1.0))

    def test_envelopes_are_ordered(self):
        for x in (1.0, 5.0):
            lower, upper = curie_weiss_bounds(1, 1.0, (1.0, 2.0), x)
            assert 0.0 < lower < upper

    def test_equal_weights_give_the_chi_square_shape(self):
        x = np.array([0.5, 2.0, 6.0])
        lower, upper = curie_weiss_bounds(1, 1.0, (1.0, 1.0), x)
        np.testing.assert_allclose(lower, upper)
        ratio = lower / chi_square_pdf(2, x)
        np.testing.assert_allclose(ratio, ratio[0])

    def test_negative_argument(self):
        with pytest.raises(InputError):
            curie_weiss_bounds(1, 1.0, (1.0,), -0.5)

    def test_theta_bounds(self):
        lower, upper = curie_weiss_theta_bounds(1, 1.0, (1.0, 2.0))
        np.testing.assert_allclose(lower(np.array([0.0, 1.0])), [6.0, 8.0])
        np.testing.assert_allclose(upper(np.array([0.0, 1.0])), [12.0, 16.0])

    def test_gaussian_theta_bounds(self):
        assert gaussian_theta_bounds([1.0, 0.5], [2.0, 1.0]) == (1.25, 5.0)
        with pytest.raises(InputError):
            gaussian_theta_bounds([1.0], [0.5])
        with pytest.raises(InputError):
            gaussian_theta_bounds([1.0, 1.0], [2.0])


class TestUniformIdentityOracle:
    def test_diagonal_value(self):
        oracle = uif_lhs_oracle(2, 1.0, samples=200_000, seed=0)
        assert abs(oracle.value - 2.0 / 3.0) < 3.0 * oracle.std_error + 1e-3
        assert oracle.accepted > 1000

    def test_reproducible_across_workers(self):
        a = uif_lhs_oracle(3, 1.5, samples=50_000, seed=2, workers=1)
        b = uif_lhs_oracle(3, 1.5, samples=50_000, seed=2, workers=3)
        assert a == b

    @pytest.mark.slow
    @pytest.mark.parametrize("n, x", [(3, 0.5), (3, 1.0), (3, 1.5), (3, 2.2), (2, 0.5), (2, 1.5)])
    def test_agrees_with_exact_identity(self, n, x):
        oracle = uif_lhs_oracle(n, x, samples=1_000_000, seed=n)
        assert abs(irwin_hall_identity_rhs(n, x) - oracle.value) < 3.0 * oracle.std_error + 1e-3

    def test_point_outside_support(self):
        with pytest.raises(InputError):
            uif_lhs_oracle(2, 2.0, samples=1000)

    def test_empty_window(self):
        with pytest.raises(WindowError):
            uif_lhs_oracle(2, 1.0, samples=1000, window=1e-12)


class TestRegistry:
    def test_chi_square(self):
        case = get_reference("chi_square:2")
        assert case.has_density and not case.has_envelopes
        assert case.pdf(np.array([2.0]))[0] == pytest.approx(0.18394, abs=1e-5)

    def test_normal_default_variance(self):
        case = get_reference("normal")
        assert case.parameters["variance"] == 1.0
        lower, upper = case.theta_bounds
        np.testing.assert_array_equal(lower(np.zeros(3)), np.ones(3))

    def test_curie_weiss_chi_square_case(self):
        case = get_reference("curie_weiss:1:1:1,1")
        assert case.has_density and case.has_envelopes
        assert case.pdf(2.0) == pytest.approx(0.5 * math.exp(-1.0))

    def test_curie_weiss_general_case(self):
        case = get_reference("curie_weiss:2:1:1,3")
        assert not case.has_density
        assert case.parameters["beta"] == 4.0

    def test_gaussian(self):
        case = get_reference("gaussian:1:4")
        assert case.pdf is None
        assert get_reference("gaussian:2:2").has_density

    def test_identity_cases(self):
        assert get_reference("uif:2").parameters["points"] == [0.5, 1.0, 1.5]
        assert get_reference("uif:1").parameters["points"] == [0.5]
        assert get_reference("uif:3").is_identity

    @pytest.mark.parametrize(
        "name",
        ["beta:1:2", "chi_square:-1", "chi_square", "irwin_hall:2.5", "irwin_hall:30", "gaussian:4:1", "uif:x"],
    )
    def test_unknown_or_malformed(self, name):
        with pytest.raises(UnknownReferenceError):
            get_reference(name)
