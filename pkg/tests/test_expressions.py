"""Tests for the expression language."""
import math

import numpy as np
import pytest

from src.errors import DimensionError, ExpressionDomainError, ExpressionSyntaxError
from src.expressions import parse, parse_all, tokenize


class TestParsing:
    def test_precedence(self):
        assert parse("1 + 2 * 3", 1).evaluate([0.0]) == 7.0
        assert parse("(1 + 2) * 3", 1).evaluate([0.0]) == 9.0
        assert parse("2 ^ 3 ^ 2", 1).evaluate([0.0]) == 512.0
        assert parse("-2^2", 1).evaluate([0.0]) == -4.0
        assert parse("2 ** 3", 1).evaluate([0.0]) == 8.0

    def test_variables_and_constants(self):
        expr = parse("x1 * x2 + pi", 2)
        assert expr.evaluate([2.0, 3.0]) == pytest.approx(6.0 + math.pi)
        assert expr.variables() == frozenset({1, 2})
        assert expr.max_index() == 2
        assert parse("e", 1).evaluate([0.0]) == pytest.approx(math.e)

    def test_bare_x_in_one_dimension(self):
        assert parse("x^2", 1).evaluate([3.0]) == 9.0
        with pytest.raises(ExpressionSyntaxError):
            parse("x + x2", 2)

    def test_functions(self):
        expr = parse("max(x1, x2, 0.5) + min(x1, x2) + sum(x1, x2, 1)", 2)
        assert expr.evaluate([0.2, 0.3]) == pytest.approx(0.5 + 0.2 + 1.5)
        assert parse("sqrt(abs(x1))", 1).evaluate([-4.0]) == pytest.approx(2.0)
        assert parse("exp(log(x1))", 1).evaluate([1.7]) == pytest.approx(1.7)

    def test_scientific_numbers(self):
        assert parse("1.5e2 + .5", 1).evaluate([0.0]) == 150.5

    def test_vectorized_evaluation(self):
        x = np.array([[1.0, 2.0, 3.0], [0.0, 1.0, 2.0]])
        np.testing.assert_allclose(parse("x1 + 2*x2", 2).evaluate(x), [1.0, 4.0, 7.0])

    def test_constant_broadcasts(self):
        values = parse("3", 2).evaluate(np.zeros((2, 5)))
        np.testing.assert_array_equal(values, np.full(5, 3.0))

    def test_parse_all(self):
        exprs = parse_all(["x1", "x2^2"], 2)
        assert [e.text for e in exprs] == ["x1", "x2^2"]


class TestErrors:
    def test_syntax_error_position(self):
        with pytest.raises(ExpressionSyntaxError) as info:
            parse("x1 + * 2", 1)
        assert info.value.position == 5

    def test_unknown_name(self):
        with pytest.raises(ExpressionSyntaxError):
            parse("foo(x1)", 1)

    def test_unexpected_character(self):
        with pytest.raises(ExpressionSyntaxError) as info:
            tokenize("x1 $ 2")
        assert info.value.position == 3

    def test_unbalanced_parenthesis(self):
        with pytest.raises(ExpressionSyntaxError):
            parse("(x1 + 1", 1)

    def test_index_beyond_dimension(self):
        with pytest.raises(DimensionError):
            parse("x1 + x3", 2)

    def test_wrong_point_shape(self):
        with pytest.raises(DimensionError):
            parse("x1 + x2", 2).evaluate([1.0])

    def test_domain_errors(self):
        with pytest.raises(ExpressionDomainError):
            parse("log(x1)", 1).evaluate([0.0])
        with pytest.raises(ExpressionDomainError):
            parse("1 / x1", 1).evaluate([0.0])
        with pytest.raises(ExpressionDomainError):
            parse("sqrt(x1)", 1).evaluate([-1.0])


class TestDerivatives:
    def test_polynomial_partials(self):
        expr = parse("x1^2 * x2 + 3*x2", 2)
        assert expr.partial(1, [2.0, 5.0]) == pytest.approx(20.0)
        assert expr.partial(2, [2.0, 5.0]) == pytest.approx(7.0)

    def test_chain_rule(self):
        expr = parse("sin(x1^2)", 1)
        x = 0.7
        assert expr.partial(1, [x]) == pytest.approx(2 * x * math.cos(x * x))
        assert parse("tanh(x1)", 1).partial(1, [0.3]) == pytest.approx(1 - math.tanh(0.3) ** 2)

    def test_quotient_and_real_power(self):
        assert parse("1 / x1", 1).partial(1, [2.0]) == pytest.approx(-0.25)
        assert parse("x1 ^ 0.5", 1).partial(1, [4.0]) == pytest.approx(0.25)

    def test_kink_conventions(self):
        assert parse("abs(x1)", 1).partial(1, [0.0]) == 0.0
        expr = parse("max(x1, 0.5)", 1)
        np.testing.assert_array_equal(expr.partial(1, np.array([[0.2, 0.8]])), [0.0, 1.0])

    def test_one_variable_callables(self):
        expr = parse("x^3", 1)
        f = expr.as_function()
        df = expr.derivative_function()
        np.testing.assert_allclose(f(np.array([1.0, 2.0])), [1.0, 8.0])
        np.testing.assert_allclose(df(np.array([1.0, 2.0])), [3.0, 12.0])

    def test_partial_coordinate_range(self):
        with pytest.raises(DimensionError):
            parse("x1", 1).partial(2, [1.0])


ROUND_TRIP_CORPUS = [
    ("-x1^-2 + 3", 1),
    ("x1 ** -0.5 * 2e-3", 1),
    ("max(x1, -x2) * abs(x1 - 1)", 2),
    ("-(x1 + x2)^3 - x2 - 1", 2),
    ("exp(-x1^2) / 2", 1),
    ("2 ^ 3 ^ -x1", 1),
    ("min(x1, x2, -0.25) + sum(x1, abs(-x2), pi)", 2),
    ("--x1 + +x2 * -e", 2),
    ("sqrt(abs(x1)) / -(1 + tanh(x2))", 2),
    ("x1 - x2 - x3 / x1 / 4", 3),
]

SMOOTH_CORPUS = [
    ("x1^2 * x2 - 3 * x2^3", 2),
    ("sin(x1 * x2) + cos(x1) / (1 + x2^2)", 2),
    ("exp(-x1^2 / 2) * tanh(x2)", 2),
    ("log(1 + x1^2 + x2^2) - sqrt(2 + x1^2)", 2),
    ("(1 + x1^2) ^ -1.5 * x3", 3),
    ("sum(x1^2, x2 * x3, exp(x3 / 4))", 3),
]


class TestTextRoundTrip:
    @pytest.mark.parametrize("text,n", ROUND_TRIP_CORPUS)
    def test_reparse_of_text_is_identical(self, text, n):
        expr = parse(text, n)
        again = parse(expr.to_text(), n)
        assert again == expr
        assert again.to_text() == expr.to_text()

    @pytest.mark.parametrize("text,n", ROUND_TRIP_CORPUS)
    def test_reparsed_values_agree(self, text, n):
        expr = parse(text, n)
        x = np.random.default_rng(11).uniform(0.5, 2.0, size=(n, 8))
        np.testing.assert_array_equal(parse(expr.to_text(), n).evaluate(x), expr.evaluate(x))


class TestDerivativesAgainstDifferences:
    @pytest.mark.parametrize("text,n", SMOOTH_CORPUS)
    def test_partials_match_central_differences(self, text, n):
        expr = parse(text, n)
        rng = np.random.default_rng(5)
        for point in rng.uniform(-1.5, 1.5, size=(10, n)):
            for k in range(1, n + 1):
                step = 1e-5 * max(1.0, abs(point[k - 1]))
                up, down = point.copy(), point.copy()
                up[k - 1] += step
                down[k - 1] -= step
                difference = (expr.evaluate(up) - expr.evaluate(down)) / (2.0 * step)
                assert expr.partial(k, point) == pytest.approx(difference, rel=1e-5, abs=1e-7)
