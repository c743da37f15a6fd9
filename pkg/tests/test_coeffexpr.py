import json
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gbsde import vm
from gbsde.coeffexpr import (
    Bin,
    Call,
    Neg,
    Num,
    Var,
    compile_expr,
    evaluate,
    free_variables,
    parse,
    problem_from_dict,
    to_source,
    validate,
)
from gbsde.errors import ExprEvalError, ExprSyntaxError, SchemaError
from tests.conftest import make_problem

# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def test_parse_power():
    assert parse("x^2") == Bin("^", Var("x"), Num(2.0))


def test_parse_call():
    assert parse("max(x-1, 0)") == Call("max", (Bin("-", Var("x"), Num(1.0)), Num(0.0)))


def test_parse_eval_separation():
    e = parse("1/(x-x)")  # parses fine, fails only at evaluation
    with pytest.raises(ExprEvalError):
        evaluate(e, {"x": 3.0})


def test_precedence():
    assert parse("-x^2") == Neg(Bin("^", Var("x"), Num(2.0)))
    assert parse("x^2^3") == Bin("^", Var("x"), Bin("^", Num(2.0), Num(3.0)))
    assert parse("2*-3") == Bin("*", Num(2.0), Neg(Num(3.0)))
    assert parse("1-2-3") == Bin("-", Bin("-", Num(1.0), Num(2.0)), Num(3.0))
    assert evaluate(parse("2+3*4"), {}) == 14.0


def test_syntax_errors_carry_offsets():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x +")
    assert err.value.offset == 3
    with pytest.raises(ExprSyntaxError) as err:
        parse("max(x, y")
    assert "expected" in str(err.value)
    with pytest.raises(ExprSyntaxError):
        parse("foo(1)")
    with pytest.raises(ExprSyntaxError):
        parse("max(1)")  # wrong arity
    with pytest.raises(ExprSyntaxError):
        parse(b"\xff\xfe")  # invalid UTF-8
    with pytest.raises(ExprSyntaxError):
        parse("1e999")  # overflowing literal


def test_evaluate_examples():
    assert evaluate(parse("x^2"), {"x": 3.0}) == 9.0
    assert evaluate(parse("pos(z)"), {"z": -2.0}) == 0.0
    assert evaluate(parse("0.25*z^2"), {"z": 2.0}) == 1.0
    assert evaluate(parse("neg(x)"), {"x": -3.0}) == 3.0
    assert evaluate(parse("min(2, exp(0))"), {}) == 1.0


def test_evaluate_errors():
    with pytest.raises(ExprEvalError, match="unbound"):
        evaluate(parse("y"), {"x": 1.0})
    with pytest.raises(ExprEvalError):
        evaluate(parse("log(x)"), {"x": -1.0})
    with pytest.raises(ExprEvalError):
        evaluate(parse("sqrt(x)"), {"x": -1.0})
    with pytest.raises(ExprEvalError):
        evaluate(parse("x^0.5"), {"x": -2.0})


# round-trip sources covering each operator and function
ROUND_TRIP_SOURCES = [
    "x^2",
    "-x^2",
    "max(x-1, 0)",
    "min(t, x) + abs(y) - neg(z)",
    "1/(1+exp(-x))",
    "sqrt(pos(x)) * log(2.5)",
    "x^-2",
    "(x+1)*(x-1)",
    "2 - -3",
    "0.25*z^2 - t/3",
]


@pytest.mark.parametrize("src", ROUND_TRIP_SOURCES)
def test_print_reparse_fixed_sources(src):
    ast = parse(src)
    assert parse(to_source(ast)) == ast


_leaf = st.one_of(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False).map(Num),
    st.sampled_from(["t", "x", "y", "z"]).map(Var),
)


def _exprs(children):
    unary = st.sampled_from(["abs", "exp", "log", "sqrt", "pos", "neg"])
    return st.one_of(
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda p: Bin(*p)),
        children.map(Neg),
        st.tuples(unary, children).map(lambda p: Call(p[0], (p[1],))),
        st.tuples(st.sampled_from(["max", "min"]), children, children).map(
            lambda p: Call(p[0], (p[1], p[2]))
        ),
    )


expr_trees = st.recursive(_leaf, _exprs, max_leaves=25)


@given(expr_trees)
def test_print_reparse_generated_trees(ast):
    assert parse(to_source(ast)) == ast


@given(
    expr_trees,
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=-3, max_value=3),
)
def test_compiled_program_matches_tree_eval(ast, t, x, y, z):
    env = {"t": t, "x": x, "y": y, "z": z}
    prog = compile_expr(ast)
    got = float(vm.eval_vector(prog, **env))
    try:
        want = evaluate(ast, env)
    except ExprEvalError:
        assert not math.isfinite(got) or got != got  # fault surfaces as nan/inf
        return
    if math.isfinite(want):
        assert got == pytest.approx(want, rel=1e-12, abs=1e-300) or (
            not math.isfinite(got) and abs(want) > 1e300
        )


def test_parser_totality_quick_fuzz():
    rng = random.Random(20240817)
    for _ in range(2000):
        n = rng.randrange(0, 30)
        blob = bytes(rng.randrange(0, 256) for _ in range(n))
        try:
            parse(blob)
        except ExprSyntaxError:
            pass  # the only acceptable failure


# ---------------------------------------------------------------------------
# Problem documents
# ---------------------------------------------------------------------------


def test_problem_unknown_keys_rejected():
    with pytest.raises(SchemaError, match="unknown problem keys"):
        make_problem(volatility="1")
    with pytest.raises(SchemaError, match="unknown bounds keys"):
        make_problem(bounds={"Lipschitz": 1.0})


def test_problem_missing_keys():
    with pytest.raises(SchemaError, match="missing"):
        problem_from_dict({"T": 1.0})


def test_problem_scope_enforced():
    with pytest.raises(SchemaError, match="may only use"):
        make_problem(phi="x + y")
    with pytest.raises(SchemaError, match="may only use"):
        make_problem(sigma="1 + z")


def test_problem_bad_domain():
    with pytest.raises(SchemaError):
        make_problem(domain=[2.0, -2.0])
    with pytest.raises(SchemaError):
        make_problem(x0=99.0)


def test_problem_round_trips_through_json(tmp_path):
    from gbsde.coeffexpr import load_problem

    doc = {
        "T": 0.5,
        "sigma_low": 0.4,
        "sigma_high": 0.9,
        "phi": "max(1-x, 0)",
        "obstacle": "max(1-x, 0)",
        "domain": {"x_lo": -2.0, "x_hi": 4.0},
        "bounds": {"L_y": 0.1, "L_z": 0.0, "M_0": 3.5, "N_0": 3.0},
    }
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    p = load_problem(path)
    assert p.has_obstacle
    assert p.x0 == 1.0  # defaults to the midpoint
    assert evaluate(p.phi, {"x": 0.0}) == 1.0


# ---------------------------------------------------------------------------
# Sampled validation
# ---------------------------------------------------------------------------


def test_validate_all_pass():
    p = make_problem(phi="max(x, 0)*0 + 1", bounds={"M_0": 1.0})
    report = validate(p, sample_density=7)
    assert report.passed, report.lines()


def test_validate_obstacle_bound_fails_with_witness():
    p = make_problem(obstacle="2", phi="x^2 + 2", bounds={"N_0": 1.0})
    report = validate(p, sample_density=7)
    failed = {c.name: c for c in report.checks if not c.passed}
    assert "A9 obstacle bound" in failed
    assert failed["A9 obstacle bound"].witness is not None


def test_validate_terminal_consistency_fails():
    p = make_problem(obstacle="x^2 + 1", bounds={"N_0": 150.0})
    report = validate(p, sample_density=7)
    failed = {c.name for c in report.checks if not c.passed}
    assert "A9 terminal consistency" in failed


def test_validate_quadratic_growth_violation_witnessed_near_edge():
    p = make_problem(f="0.5*z^2", bounds={"L_z": 0.2})
    report = validate(p, sample_density=9)
    failed = {c.name: c for c in report.checks if not c.passed}
    assert "H3 z-growth of f" in failed
    witness = failed["H3 z-growth of f"].witness
    # the quotient excess 0.5|z+z'| - 0.2(1+|z|+|z'|) is worst near |z| = 2
    assert max(abs(witness["z"]), abs(witness["z2"])) > 1.0


def test_validate_quadratic_growth_passes_with_honest_bound():
    p = make_problem(f="0.3*z^2", bounds={"L_z": 0.3})
    assert validate(p, sample_density=9).passed


def test_validate_data_bound():
    p = make_problem(bounds={"M_0": 10.0})  # |phi| reaches 144 on the box
    report = validate(p, sample_density=7)
    failed = {c.name for c in report.checks if not c.passed}
    assert "H1 data bound" in failed


def test_validate_sigma_band():
    p = make_problem(sigma="0", bounds={"sigma_sq_range": [0.5, 2.0]})
    report = validate(p, sample_density=5)
    failed = {c.name for c in report.checks if not c.passed}
    assert "A4 sigma band" in failed


def test_free_variables():
    assert free_variables(parse("x*t + max(y, z)")) == {"x", "t", "y", "z"}
    assert free_variables(parse("1.5")) == set()
