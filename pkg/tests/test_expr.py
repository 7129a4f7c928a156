"""Expression language: parser, printer, canonical forms, rank homomorphism."""

import random

import pytest

from adamsrr import expr as E
from adamsrr import suite as SU
from adamsrr.expr import (
    Bundle, Dual, IntConst, Line, Neg, ParseError, Power, Psi, RankError, Sum,
    SymbolTable, SymbolError, Tensor, Theta, UNIT, canonicalize, parse, print_expr, rank,
)


@pytest.fixture
def table():
    t = SymbolTable()
    t.declare_line("L")
    t.declare_line("M")
    t.declare_bundle("E", 2)
    t.declare_bundle("H0", 2)
    t.declare_bundle("H1", 2)
    t.declare_bundle("H", 3)
    return t


def test_parse_theta_of_line(table):
    assert parse("theta(2, L)", table) == Theta(2, Line("L"))


def test_parse_tensor_with_adams_and_dual(table):
    got = parse("psi(3, E) (x) dual(L)", table)
    assert got == canonicalize(Tensor((Psi(3, Bundle("E")), Dual(Line("L")))))
    assert isinstance(got, Tensor)
    assert set(got.factors) == {Psi(3, Bundle("E")), Dual(Line("L"))}


def test_parse_accepts_non_effective_theta_argument(table):
    # effectivity is a semantic check made by the evaluator, not the parser
    got = parse("theta(2, E - L)", table)
    assert got == Theta(2, Sum((Bundle("E"), Neg(Line("L")))))


def test_parse_reports_position_on_syntax_error(table):
    with pytest.raises(ParseError) as err:
        parse("theta(2, L", table)
    assert err.value.position == 10


def test_parse_rejects_undeclared_symbol(table):
    with pytest.raises(ParseError, match="undeclared symbol 'Z'"):
        parse("Z (x) L", table)


def test_parse_power_and_unary_minus(table):
    assert parse("(H0 - H1)^3", table) == Power(Sum((Bundle("H0"), Neg(Bundle("H1")))), 3)
    assert parse("-L + M", table) == Sum((Line("M"), Neg(Line("L"))))
    assert parse("L^-2", table) == Power(Line("L"), -2)


def test_print_theta(table):
    assert print_expr(Theta(2, Line("L"))) == "theta(2, L)"


def test_print_sorts_tensor_operands():
    assert print_expr(Tensor((Line("B"), Line("A")))) == "A (x) B"


def test_print_negated_unit():
    assert print_expr(Sum((Neg(UNIT), Line("L")))) == "L - 1"


def test_print_is_deterministic_on_equal_asts(table):
    a = Sum((Line("L"), Tensor((Line("M"), Bundle("E")))))
    b = Sum((Tensor((Bundle("E"), Line("M"))), Line("L")))
    assert canonicalize(a) == canonicalize(b)
    assert print_expr(a) == print_expr(b)


def test_parse_print_roundtrip_on_random_expressions():
    rng = random.Random(20240)
    t = SU.law_table()
    for _ in range(300):
        e = SU.random_expr(rng)
        text = print_expr(e)
        assert parse(text, t) == canonicalize(e), text


def test_canonicalize_is_idempotent():
    rng = random.Random(99)
    for _ in range(200):
        e = SU.random_expr(rng)
        c = canonicalize(e)
        assert canonicalize(c) == c


def test_rank_of_theta_power_bundle(table):
    for p in (2, 3, 5):
        for n in (1, 2, 3):
            t = SymbolTable()
            t.declare_bundle("W", n)
            assert rank(Theta(p, Bundle("W")), t) == p**n


def test_rank_virtual_difference(table):
    assert rank(Sum((Bundle("E"), Neg(Line("L")))), table) == 1


def test_rank_zero_difference_tensor(table):
    e = Tensor((Sum((Bundle("H0"), Neg(Bundle("H1")))), Bundle("H")))
    assert rank(e, table) == 0


def test_rank_rejects_non_effective_theta_argument(table):
    with pytest.raises(RankError):
        rank(Theta(2, Sum((Bundle("E"), Neg(Line("L"))))), table)


def test_rank_is_a_ring_homomorphism():
    rng = random.Random(4517)
    t = SU.law_table()
    for _ in range(150):
        a, b = SU.random_expr(rng, 2), SU.random_expr(rng, 2)
        assert rank(Sum((a, b)), t) == rank(a, t) + rank(b, t)
        assert rank(Tensor((a, b)), t) == rank(a, t) * rank(b, t)


def test_rank_special_cases(table):
    assert rank(UNIT, table) == 1
    assert rank(IntConst(5), table) == 5
    assert rank(Dual(Bundle("E")), table) == 2
    assert rank(E.DetClass(Bundle("E")), table) == 1
    assert rank(Power(Line("L"), -3), table) == 1


def test_symbol_table_rejects_bad_declarations():
    t = SymbolTable()
    t.declare_bundle("E", 2)
    t.declare_bundle("E", 2)  # same redeclaration is fine
    with pytest.raises(SymbolError):
        t.declare_bundle("E", 3)
    with pytest.raises(SymbolError):
        t.declare_bundle("F", 0)
    with pytest.raises(SymbolError):
        t.declare_line("1bad")


def test_reserved_omega_symbol():
    t = SymbolTable(rel_dim=2)
    assert t.rank(SymbolTable.OMEGA) == 2
    t0 = SymbolTable(rel_dim=0)
    assert t0.rank(SymbolTable.OMEGA) == 0
