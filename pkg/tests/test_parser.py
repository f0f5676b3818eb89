from hypothesis import given, settings, strategies as st
import pytest

from neighbours.core import App, Builtin, Foldhood, Lambda, Nbr, Rep, Val, Var, lambdas, walk
from neighbours.gen import random_program
from neighbours.parser import ParseError, desugar, parse_expr, parse_program, pretty_print, show_expr
from neighbours.core import If, Let

GRADIENT = """
def gradient(source, metric) { // : (bool, ()->num) -> num
  rep(PositiveInfinity){ (distance) => {
    mux(source, 0.0,
      foldhood(PositiveInfinity, min, nbr{distance} + metric())
    )
  }}
}
if (isObstacle()) { PositiveInfinity } { gradient(isSource(), nbrRange) }  // : num
"""


def test_foldhood_example_shape():
    e = parse_expr("foldhood(2, +, min(nbr{temperature()}, temperature()))")
    assert isinstance(e, Foldhood)
    assert e.init == Val(2.0) and e.agg == Val(Builtin("+"))
    assert isinstance(e.body, App) and e.body.fn == Val(Builtin("min"))
    assert isinstance(e.body.args[0], Nbr)


def test_missing_main_is_a_syntax_error():
    with pytest.raises(ParseError) as err:
        parse_program("def f(x) { x }")
    assert "expression" in err.value.expected


def test_gradient_listing():
    p = parse_program(GRADIENT)
    assert [d.name for d in p.functions] == ["gradient"]
    assert isinstance(p.decl("gradient").body, Rep)


def test_syntax_error_reports_span_and_expected_tokens():
    with pytest.raises(ParseError) as err:
        parse_program("1 +")
    assert err.value.span.line == 1 and err.value.span.col == 4
    assert "number" in err.value.expected


def test_unknown_identifier():
    with pytest.raises(ParseError, match="unknown identifier"):
        parse_program("frobnicate(1)")


def test_if_desugars_to_mux_of_thunks():
    e = parse_expr("if (b1()) {1} {2}")
    assert show_expr(e) == "mux(b1(), () => 1, () => 2)()"
    assert len(list(lambdas(e))) == 2


def test_let_desugars_to_application():
    e = parse_expr("let x = 1 in x")
    assert isinstance(e, App) and isinstance(e.fn, Lambda)
    assert e.fn.params == ("x",) and e.args == (Val(1.0),)


def test_desugar_leaves_plain_terms():
    e = parse_expr("1 + 2")
    assert desugar(e) == e


def test_both_lambda_body_forms():
    a = parse_expr("(x) => { x + 1 }")
    b = parse_expr("(x) => x + 1")
    assert a.body == b.body


def test_print_true_and_infix():
    assert show_expr(parse_expr("True")) == "True"
    assert show_expr(App(Val(Builtin("+")), (Val(1.0), Val(2.0)))) == "1 + 2"


def test_precedence():
    assert show_expr(parse_expr("1 + 2 * 3")) == "1 + 2 * 3"
    assert show_expr(parse_expr("(1 + 2) * 3")) == "(1 + 2) * 3"
    assert show_expr(parse_expr("1 - (2 - 3)")) == "1 - (2 - 3)"
    assert show_expr(parse_expr("!b1() && b2() || True")) == "!(b1()) && b2() || True" \
        or show_expr(parse_expr("!b1() && b2() || True")) == "not(b1()) && b2() || True"


def test_comments_ignored():
    assert parse_expr("1 // one\n + 2") == parse_expr("1 + 2")


def test_gradient_round_trip():
    p = parse_program(GRADIENT)
    assert parse_program(pretty_print(p)) == p


@settings(max_examples=200)
@given(st.integers(0, 100_000))
def test_round_trip_generated(seed):
    p = parse_program(random_program(seed))
    q = parse_program(pretty_print(p))
    assert q == p
    assert [l.tag for l in lambdas(q.main)] == [l.tag for l in lambdas(p.main)]


@given(st.integers(0, 100_000))
def test_each_if_adds_two_lambdas_each_let_one(seed):
    from neighbours.parser import _Parser, tokenize
    src = random_program(seed, allow_defs=False)
    decls, main = _Parser(tokenize(src)).program()
    ifs = sum(isinstance(e, If) for e in walk(main))
    lets = sum(isinstance(e, Let) for e in walk(main))
    plain = sum(isinstance(e, Lambda) for e in walk(main))
    assert len(list(lambdas(desugar(main)))) == plain + 2 * ifs + lets
