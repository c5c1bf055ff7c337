import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from contactmech.expressions import (
    Binary,
    Const,
    Dual,
    EvaluationDomainError,
    ExpressionSyntaxError,
    Power,
    Unary,
    UnknownSymbolError,
    Var,
    eval_gradient,
    eval_jet2,
    evaluate,
    free_variables,
    gradient_evaluator,
    parse,
    to_string,
)

ENV = {"q": 1.3, "p": 0.7, "z": 2.1}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def test_parse_number_forms():
    assert parse("2") == Const(2.0)
    assert parse("2.5") == Const(2.5)
    assert parse(".5") == Const(0.5)
    assert parse("1e-3") == Const(0.001)
    assert parse("2.5E2") == Const(250.0)


def test_parse_precedence_and_associativity():
    assert evaluate(parse("2 + 3 * 4"), {}) == 14.0
    assert evaluate(parse("2 - 3 - 4"), {}) == -5.0
    assert evaluate(parse("12 / 2 / 3"), {}) == 2.0
    # ^ is right associative and binds tighter than unary minus
    assert evaluate(parse("2 ^ 3 ^ 2"), {}) == 512.0
    assert evaluate(parse("-2 ^ 2"), {}) == -4.0
    assert evaluate(parse("(-2) ^ 2"), {}) == 4.0


def test_parse_constant_exponent_folding():
    node = parse("q ^ (1 + 1)")
    assert node == Power(Var("q"), 2.0)
    node = parse("q ^ -2")
    assert node == Power(Var("q"), -2.0)


def test_parse_rejects_variable_exponent():
    with pytest.raises(ExpressionSyntaxError) as err:
        parse("q ^ p")
    assert err.value.offset == 4


def test_parse_structure():
    assert parse("q + p * z") == Binary("+", Var("q"), Binary("*", Var("p"), Var("z")))
    assert parse("-q^2") == Unary("neg", Power(Var("q"), 2.0))
    assert parse("exp(q - p)") == Unary("exp", Binary("-", Var("q"), Var("p")))


def test_syntax_error_offsets():
    with pytest.raises(ExpressionSyntaxError) as err:
        parse("q + * p")
    assert err.value.offset == 4
    with pytest.raises(ExpressionSyntaxError) as err:
        parse("(q + p")
    assert err.value.offset == 6
    with pytest.raises(ExpressionSyntaxError) as err:
        parse("q $ p")
    assert err.value.offset == 2
    with pytest.raises(ExpressionSyntaxError):
        parse("")


def test_unknown_symbols():
    with pytest.raises(UnknownSymbolError):
        parse("frob(2)")
    with pytest.raises(UnknownSymbolError):
        parse("q + w", ["q", "p", "z"])
    # no variable list disables the check
    assert parse("q + w") == Binary("+", Var("q"), Var("w"))


def test_free_variables():
    assert free_variables(parse("q * p + exp(z)")) == {"q", "p", "z"}
    assert free_variables(parse("2 + 2")) == frozenset()
    assert free_variables(parse("q ^ 2")) == {"q"}


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "source",
    [
        "q + p + z",
        "q - (p - z)",
        "q - (p + z)",
        "q / (p * z)",
        "(q + p) * z",
        "-q^2.0",
        "(-q)^2.0",
        "q^(-2.0)",
        "exp(q) * sin(p) - sqrt(z)",
        "-(q + p)",
        "2.0 * -p",
    ],
)
def test_printer_round_trip(source):
    tree = parse(source)
    printed = to_string(tree)
    assert parse(printed) == tree
    assert to_string(parse(printed)) == printed


def test_printer_minimal_parens():
    assert to_string(parse("q + (p * z)")) == "q + p * z"
    assert to_string(parse("(q + p) + z")) == "q + p + z"
    assert to_string(parse("q - (p - z)")) == "q - (p - z)"
    assert to_string(parse("q / (p / z)")) == "q / (p / z)"


_LEAVES = st.one_of(
    st.sampled_from([Var("q"), Var("p"), Var("z")]),
    st.floats(min_value=-4.0, max_value=4.0).map(lambda v: Const(float(v))),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/"), children, children).map(
            lambda t: Binary(t[0], t[1], t[2])
        ),
        st.tuples(st.sampled_from(("neg", "exp", "sin", "cos", "tanh")), children).map(
            lambda t: Unary(t[0], t[1])
        ),
        st.tuples(children, st.integers(min_value=0, max_value=3)).map(
            lambda t: Power(t[0], float(t[1]))
        ),
    )


_TREES = st.recursive(_LEAVES, _extend, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(_TREES)
def test_printer_is_canonical(tree):
    printed = to_string(tree)
    reparsed = parse(printed, ["q", "p", "z"])
    # printing a parsed tree is a fixed point
    assert to_string(reparsed) == printed
    assert parse(to_string(reparsed)) == reparsed


@settings(max_examples=200, deadline=None)
@given(_TREES)
def test_gradient_implementations_agree(tree):
    # vector-tangent duals and nested per-pair duals are independent paths
    names = ("q", "p", "z")
    point = (1.3, 0.7, 2.1)
    try:
        value, grad = eval_gradient(tree, names, point)
        jet = eval_jet2(tree, names, point)
    except EvaluationDomainError:
        return
    # near-overflow constants (1/2e-311) make inf/nan legitimate; the
    # property is agreement, including where both paths produce nan
    assume(math.isfinite(value))
    assert value == pytest.approx(jet.value, rel=1e-12, abs=1e-12)
    assert np.allclose(grad, jet.gradient, rtol=1e-9, atol=1e-9, equal_nan=True)
    assert np.allclose(jet.hessian, jet.hessian.T, equal_nan=True)


# ---------------------------------------------------------------------------
# Evaluation and derivatives
# ---------------------------------------------------------------------------

def test_evaluate_known_values():
    assert evaluate(parse("q^2 + p"), ENV) == pytest.approx(1.3**2 + 0.7)
    assert evaluate(parse("exp(log(z))"), ENV) == pytest.approx(2.1)
    assert evaluate(parse("sqrt(q^2)"), ENV) == pytest.approx(1.3)
    assert evaluate(parse("tanh(0)"), {}) == 0.0


def test_evaluate_missing_variable():
    with pytest.raises(UnknownSymbolError):
        evaluate(parse("q + missing"), {"q": 1.0})


@pytest.mark.parametrize(
    "source",
    ["1 / (q - q)", "log(q - 2)", "sqrt(-q)", "0 ^ -1", "(-q) ^ 0.5"],
)
def test_evaluate_domain_errors(source):
    with pytest.raises(EvaluationDomainError):
        evaluate(parse(source), {"q": 1.0})


def test_domain_error_names_subtree():
    with pytest.raises(EvaluationDomainError) as err:
        evaluate(parse("q + log(p - 1)"), {"q": 1.0, "p": 0.5})
    assert "log(p - 1.0)" in str(err.value)


def test_gradient_against_finite_differences():
    source = "exp(q/4) * sin(p) + z^2 * cos(q) - sqrt(z) * tanh(p*q/3)"
    tree = parse(source)
    names = ("q", "p", "z")
    x = np.array([1.3, 0.7, 2.1])
    value, grad = eval_gradient(tree, names, x)
    assert value == pytest.approx(evaluate(tree, dict(zip(names, x))))
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (
            evaluate(tree, dict(zip(names, x + e)))
            - evaluate(tree, dict(zip(names, x - e)))
        ) / (2 * h)
        assert grad[i] == pytest.approx(fd, abs=1e-8)


def test_gradient_of_constant_is_zero():
    value, grad = eval_gradient(parse("3.5"), ("q", "p"), (1.0, 2.0))
    assert value == 3.5
    assert np.array_equal(grad, np.zeros(2))


def test_gradient_evaluator_is_reusable():
    run = gradient_evaluator(parse("q * p"), ("q", "p"))
    v1, g1 = run((2.0, 3.0))
    v2, g2 = run((5.0, 7.0))
    assert (v1, list(g1)) == (6.0, [3.0, 2.0])
    assert (v2, list(g2)) == (35.0, [7.0, 5.0])


def test_jet2_polynomial_exact():
    # f = q^2 p + 3 z has constant, known second derivatives
    tree = parse("q^2 * p + 3 * z")
    jet = eval_jet2(tree, ("q", "p", "z"), (2.0, 5.0, 1.0))
    assert jet.value == 23.0
    assert np.allclose(jet.gradient, [20.0, 4.0, 3.0])
    want = np.zeros((3, 3))
    want[0, 0] = 10.0
    want[0, 1] = want[1, 0] = 4.0
    assert np.allclose(jet.hessian, want)


def test_jet2_transcendental_against_analytic():
    tree = parse("exp(q) * sin(p)")
    q, p = 0.4, 1.1
    jet = eval_jet2(tree, ("q", "p"), (q, p))
    eq, sp, cp = math.exp(q), math.sin(p), math.cos(p)
    assert jet.value == pytest.approx(eq * sp)
    assert np.allclose(jet.gradient, [eq * sp, eq * cp])
    assert np.allclose(jet.hessian, [[eq * sp, eq * cp], [eq * cp, -eq * sp]])


def test_dual_sqrt_rejects_zero_derivative():
    with pytest.raises(ZeroDivisionError):
        Dual(0.0, 1.0).sqrt()
    with pytest.raises(EvaluationDomainError):
        eval_gradient(parse("sqrt(q)"), ("q",), (0.0,))
