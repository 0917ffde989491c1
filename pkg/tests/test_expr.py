import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cta_lab.expr import ExpressionError, parse


def test_arithmetic_and_precedence():
    assert parse("1 + 2*3")(0, 0, 0) == 7
    assert parse("-2^2")(0, 0, 0) == -4
    assert parse("2^3^2")(0, 0, 0) == 2 ** 9
    assert parse("2**3")(0, 0, 0) == 8
    assert parse("(1+x1)/(1+y1)")(1.0, 3.0, 0.0) == 0.5


def test_functions_constants_and_broadcast():
    x = np.linspace(0, 1, 7)
    f = parse("sin(pi*x1)*cos(y2) + exp(y1) - tanh(e)")
    np.testing.assert_allclose(f(x, 0.3, 0.2), np.sin(np.pi * x) * np.cos(0.2) + np.exp(0.3) - np.tanh(np.e))


def test_fractional_powers():
    assert parse("(0.5*sin(pi*x1))^(1/3)")(0.5, 0, 0) == pytest.approx(0.5 ** (1 / 3))


@pytest.mark.parametrize("text", ["sqrt(x1)", "x1 +", "foo", "(x1", "x1 y1"])
def test_errors_carry_position(text):
    with pytest.raises(ExpressionError) as info:
        parse(text)
    assert "column" in str(info.value)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=4), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_polynomial_matches_python(coeffs, a, b, c):
    text = " + ".join(f"({k!r})*x1^{i}*(y1 - y2)" for i, k in enumerate(coeffs))
    expect = sum(k * a**i * (b - c) for i, k in enumerate(coeffs))
    assert parse(text)(a, b, c) == pytest.approx(expect, abs=1e-12)
