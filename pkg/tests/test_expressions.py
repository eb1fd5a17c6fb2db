import numpy as np
import pytest
import sympy
from numpy.testing import assert_allclose

from hyperflow.errors import ExpressionSyntaxError, StructureError, UnknownVariableError
from hyperflow.expressions import (
    ScalarExpression,
    gradient,
    parse_expression,
    parse_triple,
    split_tuple,
)


def central_difference(expr, point, h=1e-5):
    grad = np.zeros(len(point))
    for i in range(len(point)):
        e = np.zeros(len(point))
        e[i] = h
        grad[i] = (expr.evaluate(point + e) - expr.evaluate(point - e)) / (2 * h)
    return grad


def test_radial_profile_value():
    expr = parse_expression("r1*(1 - r1)", 4)
    assert expr.is_radial
    assert expr.evaluate([0.5, 0.0, 0.0, 0.0]) == pytest.approx(0.1875)
    assert expr.evaluate_radial([0.25]) == pytest.approx(0.1875)


def test_rationals_and_decimals_are_exact():
    assert parse_expression("0.25*r1", 4).sympy_expr == parse_expression("1/4*r1", 4).sympy_expr
    assert parse_expression("3/2", 4).sympy_expr == sympy.Rational(3, 2)


def test_leading_sign_and_nesting():
    expr = parse_expression("-(x1 - 2)^2 - x2", 4)
    assert expr.evaluate([1.0, 3.0, 0.0, 0.0]) == pytest.approx(-4.0)


def test_gradient_of_radius_is_twice_the_point():
    expr = parse_expression("r1", 4)
    x = np.array([1.0, -2.0, 0.5, 3.0])
    assert_allclose(gradient(expr, x), 2 * x)


def test_gradient_of_product():
    expr = parse_expression("x1*x3", 4)
    assert_allclose(expr.gradient([1.0, 0.0, 2.0, 0.0]), [2.0, 0.0, 1.0, 0.0])


def test_gradient_matches_finite_differences(rng):
    expr = parse_expression("x1^3 - 2*x2*x3*x4 + 3/2*x1*x2^2 + r1*x4 - r2^2 + x7*x8", 8)
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, 8)
        assert_allclose(expr.gradient(x), central_difference(expr, x), rtol=1e-8, atol=1e-8)


def test_expanded_form_agrees_with_radii():
    expr = parse_expression("r1^2 - x1*r1", 4)
    x = np.array([0.3, -1.1, 0.7, 2.0])
    substitution = dict(zip(expr.symbols[0], x))
    assert float(expr.expanded.subs(substitution)) == pytest.approx(expr.evaluate(x), rel=1e-14)
    assert expr.degree == 4


@pytest.mark.parametrize(
    "text, position",
    [
        ("q1 +", 3),
        ("x1^-1", 3),
        ("x1^1.5", 3),
        ("(x1 + x2", 6),
        ("x1 $ x2", 3),
        ("2 x1", 2),
        ("x1 + * x2", 5),
    ],
)
def test_syntax_errors_report_offset(text, position):
    with pytest.raises(ExpressionSyntaxError) as excinfo:
        parse_expression(text, 4)
    assert excinfo.value.position == position
    assert f"offset {position}" in excinfo.value.message


def test_empty_and_zero_denominator():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("   ", 4)
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("1/0", 4)


@pytest.mark.parametrize("text, name", [("x5", "x5"), ("x0 + 1", "x0"), ("r2", "r2"), ("y1", "y1")])
def test_unknown_variables(text, name):
    with pytest.raises(UnknownVariableError) as excinfo:
        parse_expression(text, 4)
    assert name in excinfo.value.message


def test_dimension_must_be_a_multiple_of_four():
    with pytest.raises(StructureError):
        parse_expression("x1", 6)


def test_radial_derivative():
    expr = parse_expression("r1^3 - r1", 4)
    assert expr.radial_derivative(0).evaluate_radial([2.0]) == pytest.approx(11.0)


def test_sum_radial_detection():
    assert parse_expression("r1 + r2", 8).is_sum_radial
    assert parse_expression("(r1 + r2)^2 - 3", 8).is_sum_radial
    assert not parse_expression("r1*r2", 8).is_sum_radial
    assert not parse_expression("r1", 8).is_sum_radial
    assert not parse_expression("x1", 4).is_sum_radial
    assert parse_expression("r1", 4).is_sum_radial


def test_evaluate_radial_needs_radial_expression():
    with pytest.raises(StructureError):
        parse_expression("x1 + r1", 4).evaluate_radial([1.0])


def test_constant_expression():
    expr = ScalarExpression.constant(0.5, 4)
    assert expr.is_radial
    assert expr.degree == 0
    assert_allclose(expr.gradient(np.ones(4)), np.zeros(4))


@pytest.mark.parametrize(
    "text, items",
    [
        ("(r1, 0, 1 - r1)", ["r1", "0", "1 - r1"]),
        ("(x1 + x2)*x3, (1), x4", ["(x1 + x2)*x3", "(1)", "x4"]),
        ("((r1), r1, r1)", ["(r1)", "r1", "r1"]),
    ],
)
def test_split_tuple(text, items):
    assert split_tuple(text) == items


def test_parse_triple_needs_three_items():
    assert len(parse_triple([1, "r1", "x2"], 4)) == 3
    with pytest.raises(StructureError):
        parse_triple("(r1, 0)", 4)
