from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from stepcalc.terms import (Abs, App, AstError, AstNode, Bound, Const, Context,
                            ParseFailure, TArrow, TList, TypeMismatch, Var,
                            alpha_eq, arrow, ast_from_json, ast_to_json,
                            ast_to_term, infer_types, mk_num, num_value, parse,
                            pretty, subst_vars, term_to_ast, typ_of, BOOL,
                            REAL)


def ctx_with(**vars):
    return Context(variables=dict(vars))


def beam_ctx():
    return Context("Biegelinie",
                   constants={"Q": arrow(REAL, REAL), "M_b": arrow(REAL, REAL),
                              "y": arrow(REAL, REAL),
                              "d_dx": arrow(TArrow(REAL, REAL), REAL, REAL)})


class TestParse:
    def test_plus_zero_shape(self):
        t = parse("x + 0", ctx_with(x=REAL))
        assert t == App(App(Const("plus", arrow(REAL, REAL, REAL)),
                            Var("x", REAL)), Const("0", REAL))

    def test_boundary_condition_is_equality_of_application_and_product(self):
        t = parse("Q 0 = q_0 * L", beam_ctx())
        assert typ_of(t) == BOOL
        head, args = t.fun.fun, [t.fun.arg, t.arg]
        assert head.name == "eq"
        assert args[0] == App(Const("Q", arrow(REAL, REAL)), Const("0", REAL))

    def test_syntax_error_position(self):
        with pytest.raises(ParseFailure) as e:
            parse("x + * 2")
        assert e.value.position == 4

    def test_unknown_identifiers_become_typed_variables(self):
        t = parse("a + b")
        assert isinstance(t.fun.arg, Var) and t.fun.arg.typ == REAL

    def test_strict_mode_rejects_unknown(self):
        ctx = Context(strict=True)
        with pytest.raises(Exception):
            parse("mystery_name + 1", ctx)

    def test_list_literal(self):
        t = parse("[1, 2, 3]")
        assert typ_of(t) == TList(REAL)

    def test_lambda(self):
        t = parse("%x. x + 1")
        assert isinstance(t, Abs)
        assert isinstance(t.body, App)
        assert t.body.fun.arg == Bound(0)

    def test_decimal_literal_is_exact(self):
        t = parse("2.5")
        assert num_value(t) == Fraction(5, 2)

    def test_tuple_sugar_is_two_element_list(self):
        assert alpha_eq(parse("(a, b)"), parse("[a, b]"))


class TestInfer:
    def test_variable_typed_from_context(self):
        t = infer_types(Var("x", None), ctx_with(x=REAL))
        assert t == Var("x", REAL)

    def test_function_application_bool(self):
        t = parse("y 0 = 0", ctx_with(y=TArrow(REAL, REAL)))
        assert typ_of(t) == BOOL

    def test_type_clash(self):
        with pytest.raises(TypeMismatch):
            parse("x = [1]", ctx_with(x=REAL))

    def test_idempotent(self):
        ctx = beam_ctx()
        t = parse("Q 0 = q_0 * L", ctx)
        assert infer_types(t, ctx) == t


class TestPretty:
    def test_round_trip_simple(self):
        ctx = ctx_with(x=REAL)
        t = parse("x + 0", ctx)
        assert pretty(t) == "x + 0"
        assert alpha_eq(parse(pretty(t), ctx), t)

    def test_boundary_list(self):
        text = "[Q 0 = q_0 * L, M_b L = 0, y 0 = 0, d_dx y 0 = 0]"
        t = parse(text, beam_ctx())
        assert pretty(t) == text

    def test_lambda_prefix(self):
        assert pretty(parse("%x. x + 1")).startswith("%x. ")

    def test_precedences(self):
        cases = ["a + b * c", "(a + b) * c", "a ^ b ^ c", "(a ^ b) ^ c",
                 "a - b - c", "a - (b - c)", "- a + b", "- (a + b)",
                 "a / b * (c / d)", "a ^ (-3) * - b", "f a (g b)"]
        for text in cases:
            t = parse(text)
            assert alpha_eq(parse(pretty(t)), t), text


class TestAst:
    def test_fixity_table_entry(self):
        ast = term_to_ast(parse("a / b"))
        assert ast.head == "/" and ast.fixity == "infix:70:left"

    def test_round_trip_relate_list(self):
        ctx = beam_ctx()
        t = parse("[Q 0 = q_0 * L, M_b L = 0, y 0 = 0, d_dx y 0 = 0]", ctx)
        back = ast_to_term(term_to_ast(t), ctx)
        assert alpha_eq(back, t)

    def test_infix_arity_error(self):
        bad = AstNode("+", (ast_from_json({"leaf": "a"}),
                            ast_from_json({"leaf": "b"}),
                            ast_from_json({"leaf": "c"})), "infix:65:left")
        with pytest.raises(AstError):
            ast_to_term(bad)

    def test_json_round_trip(self):
        t = parse("%x. x * (y + 1)")
        ast = term_to_ast(t)
        assert ast_from_json(ast_to_json(ast)) == ast


# ---------------------------------------------------------------------------
# generated terms

_leaf = st.sampled_from(["a", "b", "x", "y", "q_0", "0", "1", "2", "3", "7"])
_binop = st.sampled_from(["+", "-", "*", "/", "^"])


@st.composite
def real_expr(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(_leaf)
    kind = draw(st.integers(0, 2))
    if kind == 0:
        op = draw(_binop)
        return f"({draw(real_expr(depth=depth - 1))} {op} {draw(real_expr(depth=depth - 1))})"
    if kind == 1:
        return f"(- {draw(real_expr(depth=depth - 1))})"
    return f"(f {draw(real_expr(depth=depth - 1))})"


@st.composite
def term_text(draw):
    kind = draw(st.integers(0, 2))
    if kind == 0:
        return draw(real_expr())
    if kind == 1:
        items = draw(st.lists(real_expr(), min_size=1, max_size=3))
        return "[" + ", ".join(items) + "]"
    return f"({draw(real_expr())} = {draw(real_expr())})"


@given(term_text())
@settings(max_examples=200, deadline=None)
def test_parse_pretty_round_trip(text):
    ctx = Context(constants={"f": arrow(REAL, REAL)})
    t = parse(text, ctx)
    assert alpha_eq(parse(pretty(t), ctx), t)


@given(term_text())
@settings(max_examples=200, deadline=None)
def test_ast_round_trip(text):
    ctx = Context(constants={"f": arrow(REAL, REAL)})
    t = parse(text, ctx)
    assert alpha_eq(ast_to_term(term_to_ast(t), ctx), t)


@given(term_text())
@settings(max_examples=100, deadline=None)
def test_substitution_preserves_types(text):
    ctx = Context(constants={"f": arrow(REAL, REAL)})
    t = parse(text, ctx)
    before = typ_of(t)
    out = subst_vars(t, {"x": parse("q_0 + 1", ctx), "a": mk_num(4)})
    assert typ_of(out) == before
