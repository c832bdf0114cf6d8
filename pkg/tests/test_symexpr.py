import numpy as np
import pytest
import sympy as sp

from chern_weil.core.errors import EvaluationError, ExpressionSyntaxError
from chern_weil.core.symexpr import (
    canonical_equal, canonicalize, compile_numeric, declare_function, differentiate, equal_sym, eval_numeric,
    free_variables, is_zero, parse, substitute, to_latex, to_text
)

x, y, t = sp.symbols("x y t")


def test_parse_precedence():
    assert parse("x + 2*y") == x + 2 * y
    assert parse("2^3^2") == 512
    assert parse("-x^2") == -(x ** 2)
    assert parse("(x + y)/2") == (x + y) / 2


def test_parse_constants_and_elementary_functions():
    assert parse("pi") == sp.pi
    assert parse("I*I") == -1
    assert parse("sin(x) + exp(y)") == sp.sin(x) + sp.exp(y)
    assert parse("sqrt(x)") == sp.sqrt(x)


def test_parse_unicode_minus():
    assert parse("x − 1") == x - 1


def test_derivative_marker_matches_differentiation():
    a = parse("A(t)")
    assert parse("A'(t)") == sp.diff(a, t)
    assert parse("A''(t)") == sp.diff(a, t, 2)


def test_partial_derivative_marker():
    f = parse("fxy(x, y)")
    assert parse("fxy'1_0(x, y)") == sp.diff(f, x)
    assert parse("fxy'1_1(x, y)") == sp.diff(f, x, y)


@pytest.mark.parametrize("text, offset", [
    ("x + * y", 4),
    ("(x + y", 6),
    ("x − $", 6),
    ("", 0),
])
def test_syntax_error_offsets(text, offset):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset


@pytest.mark.parametrize("text", ["1/0", "0^-1", "x^y", "sin", "pi(x)", "sin(x, y)"])
def test_rejected_expressions(text):
    with pytest.raises(ExpressionSyntaxError):
        parse(text)


def test_function_arity_is_fixed():
    parse("arity_check(x)")
    with pytest.raises(ExpressionSyntaxError):
        parse("arity_check(x, y)")
    with pytest.raises(ValueError):
        declare_function("arity_check", 2)


def test_text_printer_round_trip():
    for text in ["A'(t)/(2*pi)", "x^2 - 3*x*y + 1", "sqrt(x)/(2*sinh(sqrt(x)/2))", "(z + zbar)/2"]:
        e = parse(text)
        assert canonical_equal(parse(to_text(e)), e)


def test_text_printer_uses_primes():
    assert to_text(parse("A'(t)")) == "A'(t)"
    assert to_text(parse("x^2")) == "x^2"


def test_latex_printer_uses_partial_notation():
    assert "\\partial" in to_latex(parse("A'(t)"))
    assert "\\partial^{2}" in to_latex(parse("A''(t)"))


def test_canonicalize_cancels_and_reduces_unit():
    assert canonicalize("(x^2 - 1)/(x - 1)") == x + 1
    assert canonicalize("x*y + y*x") == canonicalize("2*y*x")
    assert canonical_equal("1/(1 + I)", "(1 - I)/2")
    assert not canonicalize("1/(1 + I*x)").as_numer_denom()[1].has(sp.I)


def test_canonicalize_is_idempotent():
    e = parse("(x + I*y)*(x - I*y)/(1 + x^2 + y^2)^2")
    once = canonicalize(e)
    assert canonicalize(once) == once


def test_canonicalize_keeps_opaque_functions():
    e = canonicalize("A(t)*A'(t) - A'(t)*A(t)")
    assert e == 0


def test_is_zero():
    assert is_zero("(x + 1)^2 - x^2 - 2*x - 1")
    assert not is_zero("x")


def test_equal_sym_exact_and_sampled(rng):
    verdict = equal_sym("A(t)*A(t)", "A(t)^2", rng=rng)
    assert verdict.equal and verdict.exact

    verdict = equal_sym("sin(x)^2 + cos(x)^2", "1", rng=rng)
    assert verdict.equal
    assert not verdict.exact
    assert verdict.trials > 0


def test_equal_sym_reports_witness(rng):
    verdict = equal_sym("x", "x + 1/1000", rng=rng)
    assert not verdict
    assert set(verdict.witness) == {"x"}


def test_equal_sym_distinguishes_derivatives(rng):
    assert not equal_sym("A'(t)", "A(t)", rng=rng)


def test_equal_sym_uses_implementations(rng):
    impls = {"B": np.sin, "B'": np.cos}
    assert equal_sym("B'(t)^2 + B(t)^2", "1", rng=rng, fn_impls=impls)


def test_eval_numeric():
    assert eval_numeric("x^2 + 1", {"x": 2}) == 5
    assert eval_numeric("I*x", {"x": 3}) == 3j
    with pytest.raises(EvaluationError):
        eval_numeric("1/x", {"x": 0})
    with pytest.raises(EvaluationError):
        eval_numeric("x + y", {"x": 1})


def test_compile_numeric_is_vectorized():
    f = compile_numeric("x*y + 1", [x, y])
    result = f(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    assert np.allclose(result, [4.0, 9.0])


def test_compile_numeric_needs_implementations():
    with pytest.raises(EvaluationError):
        compile_numeric("C(t)", [t])
    f = compile_numeric("C'(t)", [t], {"C'": lambda v: 2 * v})
    assert np.allclose(f(np.array([1.0, 2.0])), [2.0, 4.0])


def test_free_variables_and_substitute():
    assert free_variables("x + y*A(t)") == ["t", "x", "y"]
    assert substitute("x + y", {"x": "y"}) == 2 * y
    assert substitute("x*y", {x: y, y: x}) == x * y


def _random_rational(rng, depth):
    if depth == 0:
        return rng.choice([x, y, sp.Integer(rng.randint(-3, 3)), sp.Rational(rng.randint(1, 5), rng.randint(1, 5))])
    a, b = _random_rational(rng, depth - 1), _random_rational(rng, depth - 1)
    op = rng.choice(["add", "mul", "div", "pow"])
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "div":
        return a / (1 + b ** 2)
    return a ** 2


def _random_smooth(rng, depth):
    if depth == 0:
        return rng.choice([x, y, sp.Integer(rng.randint(1, 3)), sp.Rational(1, rng.randint(2, 5))])
    a = _random_smooth(rng, depth - 1)
    op = rng.choice(["add", "mul", "div", "sin", "exp", "cos"])
    if op in ("sin", "exp", "cos"):
        return getattr(sp, op)(a / 2)
    b = _random_smooth(rng, depth - 1)
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    return a / (1 + b ** 2)


def test_canonicalize_is_idempotent_on_random_rationals(rng):
    for _ in range(1000):
        once = canonicalize(_random_rational(rng, rng.randint(1, 3)))
        assert canonicalize(once) == once


def test_text_printer_round_trip_on_random_expressions(rng):
    for _ in range(200):
        e = _random_smooth(rng, rng.randint(1, 3))
        assert canonical_equal(parse(to_text(e)), e), to_text(e)


def test_differentiate_matches_central_differences(rng):
    step = 1e-6
    for _ in range(50):
        e = _random_smooth(rng, rng.randint(1, 3))
        var = rng.choice(["x", "y"])
        derivative = differentiate(e, var)
        point = {"x": rng.uniform(-2, 2), "y": rng.uniform(-2, 2)}
        above, below = dict(point), dict(point)
        above[var] += step
        below[var] -= step
        numeric = (eval_numeric(e, above) - eval_numeric(e, below)) / (2 * step)
        exact = eval_numeric(derivative, point)
        scale = max(1.0, abs(exact), abs(eval_numeric(e, point)))
        assert abs(numeric - exact) <= 1e-5 * scale, to_text(e)
