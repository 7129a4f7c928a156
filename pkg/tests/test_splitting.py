"""Split-principle evaluator: operation semantics, tau/theta, binomial kernel."""

import random
from fractions import Fraction
from math import comb

import pytest

from adamsrr import expr as E
from adamsrr import suite as SU
from adamsrr.splitting import (
    ContextMismatch, EvalError, NonEffectiveError, SplitClass, SplitContext, UniPoly,
    binomial_identity_check, classes_equal, eval_expr, formal_inverse, tau_class,
    tau_equals_theta, tilde_theta_inverse, truncated_filtration,
)


@pytest.fixture
def ctx():
    t = E.SymbolTable(space="X")
    t.declare_line("L")
    t.declare_line("M")
    t.declare_bundle("E", 2)
    t.declare_bundle("F", 2)
    return SplitContext(t)


def var(name):
    return SplitClass.variable(name)


def test_adams_on_line_is_power(ctx):
    got = eval_expr(E.Psi(2, E.Line("L")), ctx)
    assert got == var("L") * var("L")


def test_theta_on_line_is_truncated_geometric(ctx):
    assert eval_expr(E.Theta(2, E.Line("L")), ctx) == 1 + var("L")


def test_theta_on_rank2_matches_product_oracle(ctx):
    # oracle: multiply (1+a)(1+b) over the two roots directly
    a, b = var("E.1"), var("E.2")
    oracle = (SplitClass.constant(1) + a) * (SplitClass.constant(1) + b)
    assert eval_expr(E.Theta(2, E.Bundle("E")), ctx) == oracle
    assert str(oracle) == "1 + E.1 + E.2 + E.1*E.2"


def test_det_of_virtual_difference(ctx):
    got = eval_expr(E.DetClass(E.Sum((E.Bundle("E"), E.Neg(E.Line("L")), E.UNIT))), ctx)
    assert got == SplitClass({(("E.1", 1), ("E.2", 1), ("L", -1)): 1})


def test_eval_rejects_non_effective_theta(ctx):
    with pytest.raises(NonEffectiveError):
        eval_expr(E.Theta(2, E.Sum((E.Bundle("E"), E.Neg(E.Line("L"))))), ctx)


def test_eval_rejects_negative_power_of_non_line(ctx):
    with pytest.raises(EvalError):
        eval_expr(E.Power(E.Bundle("E"), -1), ctx)


def test_dual_inverts_monomials(ctx):
    got = eval_expr(E.Dual(E.Sum((E.Line("L"), E.Line("M")))), ctx)
    assert got == SplitClass({(("L", -1),): 1, (("M", -1),): 1})


def test_tau_rank_one():
    t = E.SymbolTable(space="Z")
    t.declare_line("V")
    ctx = SplitContext(t)
    assert tau_class("V", 2, ctx) == 1 + var("V")


def test_tau_rank_two_enumerates_four_monomials():
    t = E.SymbolTable(space="Z")
    t.declare_bundle("V", 2)
    ctx = SplitContext(t)
    a, b = var("V.1"), var("V.2")
    assert tau_class("V", 2, ctx) == 1 + a + b + a * b


def test_tau_augmentation_is_p_to_rank():
    for rank in (1, 2, 3, 4):
        t = E.SymbolTable(space="Z")
        t.declare_line("V") if rank == 1 else t.declare_bundle("V", rank)
        ctx = SplitContext(t)
        for p in (2, 3, 5):
            assert tau_class("V", p, ctx).augmentation() == p**rank


@pytest.mark.parametrize("rank,p", [(1, 3), (3, 2), (2, 5)])
def test_tau_equals_theta(rank, p):
    t = E.SymbolTable(space="Z")
    t.declare_line("V") if rank == 1 else t.declare_bundle("V", rank)
    ctx = SplitContext(t)
    assert tau_equals_theta("V", p, ctx).ok


def test_tau_theta_verdict_reports_difference():
    # comparing tau at p=2 against theta at p=3 must produce a witness
    t = E.SymbolTable(space="Z")
    t.declare_line("V")
    ctx = SplitContext(t)
    diff = tau_class("V", 2, ctx) - eval_expr(E.Theta(3, E.Line("V")), ctx)
    assert not diff.is_zero()


def test_adams_composition(ctx):
    e = E.Sum((E.Bundle("E"), E.Dual(E.Line("L"))))
    lhs = eval_expr(E.Psi(2, E.Psi(3, e)), ctx)
    rhs = eval_expr(E.Psi(6, e), ctx)
    assert classes_equal(lhs, rhs)
    # independent oracle: scale every exponent of the base class by 6
    base = eval_expr(e, ctx)
    scaled = SplitClass({tuple((v, 6 * x) for v, x in m): c for m, c in base.terms.items()},
                        base.space)
    assert classes_equal(rhs, scaled)


def test_adams_is_a_ring_endomorphism():
    rng = random.Random(424242)
    t = SU.law_table()
    ctx = SplitContext(t)
    for _ in range(100):
        a, b = SU.random_expr(rng, 2), SU.random_expr(rng, 2)
        k = rng.randint(1, 4)
        pa, pb = eval_expr(E.Psi(k, a), ctx), eval_expr(E.Psi(k, b), ctx)
        assert classes_equal(eval_expr(E.Psi(k, E.Sum((a, b))), ctx), pa + pb)
        assert classes_equal(eval_expr(E.Psi(k, E.Tensor((a, b))), ctx), pa * pb)


def test_theta_multiplicative_on_sum(ctx):
    lhs = eval_expr(E.Theta(2, E.Sum((E.Bundle("E"), E.Bundle("F")))), ctx)
    rhs = eval_expr(E.Theta(2, E.Bundle("E")), ctx) * eval_expr(E.Theta(2, E.Bundle("F")), ctx)
    assert classes_equal(lhs, rhs)


def test_line_differs_from_its_dual(ctx):
    assert not classes_equal(eval_expr(E.Line("L"), ctx),
                             eval_expr(E.Dual(E.Line("L")), ctx))


def test_classes_equal_rejects_context_mismatch():
    a = SplitClass({(): 1}, space="X")
    b = SplitClass({(): 1}, space="Y")
    with pytest.raises(ContextMismatch):
        classes_equal(a, b)


def test_augmentation_matches_rank_on_random_corpus():
    rng = random.Random(1001)
    t = SU.law_table()
    ctx = SplitContext(t)
    for _ in range(120):
        e = SU.random_expr(rng)
        assert eval_expr(e, ctx).augmentation() == E.rank(e, t)


def test_canonicalization_preserves_semantics():
    rng = random.Random(60601)
    t = SU.law_table()
    ctx = SplitContext(t)
    for _ in range(200):
        e = SU.random_expr(rng)
        assert classes_equal(eval_expr(e, ctx), eval_expr(E.canonicalize(e), ctx))
        assert E.rank(e, t) == E.rank(E.canonicalize(e), t)


# -- tilde inverse and the binomial kernel ----------------------------------

def _tilde_oracle(n, p):
    """Independent expansion of (-1)^(n+1) sum C(n+2,i) y^(n+1-i) (-p^n)^i."""
    coeffs = {}
    a = p**n
    for i in range(n + 2):
        d = n + 1 - i
        coeffs[d] = coeffs.get(d, 0) + comb(n + 2, i) * (-a) ** i
    sign = (-1) ** (n + 1)
    return {d: sign * c for d, c in coeffs.items() if c}


def test_tilde_n1_p2():
    got = tilde_theta_inverse(1, 2, UniPoly.y())
    assert got.coeffs == {2: 1, 1: -6, 0: 12}
    assert got.coeffs == _tilde_oracle(1, 2)


def test_tilde_n0_p2():
    got = tilde_theta_inverse(0, 2, UniPoly.y())
    assert got.coeffs == {1: -1, 0: 2}
    assert got.coeffs == _tilde_oracle(0, 2)


def test_tilde_leading_coefficient_is_sign():
    for n in range(6):
        for p in (2, 3, 5):
            got = tilde_theta_inverse(n, p, UniPoly.y())
            assert got.coeffs[n + 1] == (-1) ** (n + 1)
            assert got.coeffs == _tilde_oracle(n, p)


def test_tilde_on_split_classes(ctx):
    x = eval_expr(E.Theta(2, E.Bundle("E")), ctx)
    got = tilde_theta_inverse(1, 2, x)
    assert classes_equal(got, x * x - 6 * x + 12)


def _poly_mul(a, b):
    out = {}
    for d1, c1 in a.items():
        for d2, c2 in b.items():
            out[d1 + d2] = out.get(d1 + d2, 0) + c1 * c2
    return {d: c for d, c in out.items() if c}


def _binom_oracle(n, p):
    """(y - p^n)^(n+2) via repeated convolution, no UniPoly involved."""
    out = {0: 1}
    for _ in range(n + 2):
        out = _poly_mul(out, {1: 1, 0: -(p**n)})
    return out


def test_binomial_identity_n1_p2_explicit():
    w = binomial_identity_check(1, 2)
    assert w.ok
    assert w.lhs.coeffs == {3: 1, 2: -6, 1: 12, 0: -8}
    assert w.lhs.coeffs == _binom_oracle(1, 2)  # (y-2)^3, quotient +1
    assert w.quotient == UniPoly.constant(1)


def test_binomial_identity_n0_p3():
    w = binomial_identity_check(0, 3)
    assert w.ok
    assert w.quotient == UniPoly.constant(-1)
    # y(2 - y) - 1 = -(y - 1)^2
    assert w.lhs.coeffs == {d: -c for d, c in _binom_oracle(0, 3).items()}


def test_binomial_identity_n2_p2_quotient():
    w = binomial_identity_check(2, 2)
    assert w.ok
    assert w.quotient == UniPoly.constant(-1)
    assert w.divisor.coeffs == _binom_oracle(2, 2)


def test_binomial_identity_matches_oracle_on_grid():
    for n in range(6):
        for p in (2, 3, 5, 7):
            w = binomial_identity_check(n, p)
            assert w.ok, (n, p)
            sign = (-1) ** (n + 1)
            assert w.lhs.coeffs == {d: sign * c for d, c in _binom_oracle(n, p).items()}


# -- formal inverse -----------------------------------------------------------

def test_formal_inverse_of_unit(ctx):
    one = eval_expr(E.UNIT, ctx)
    for order in (1, 2, 5):
        assert formal_inverse(one, order) == one


def test_formal_inverse_of_line_order_two(ctx):
    x = eval_expr(E.Line("L"), ctx)
    inv = formal_inverse(x, 2)
    assert inv == 2 - x
    residual = x * inv - 1
    one_minus = SplitClass.constant(1) - x
    assert residual == -(one_minus * one_minus)


def test_formal_inverse_residual_identity_random():
    # exact identity: c * inv(c, m) - 1 = -((r - c)/r)^m
    rng = random.Random(77)
    t = SU.law_table()
    ctx = SplitContext(t)
    done = 0
    while done < 40:
        c = eval_expr(SU.random_effective(rng), ctx)
        r = c.augmentation()
        if r == 0:
            continue
        m = rng.randint(1, 4)
        inv = formal_inverse(c, m)
        delta = (SplitClass.constant(r) - c) * Fraction(1, 1)
        expected = SplitClass.constant(-Fraction(1) / r**m) * delta**m
        assert c * inv - 1 == expected
        done += 1


def test_formal_inverse_rejects_zero_augmentation(ctx):
    z = eval_expr(E.Sum((E.Line("L"), E.Neg(E.Line("M")))), ctx)
    with pytest.raises(EvalError):
        formal_inverse(z, 3)


# -- truncated filtration ------------------------------------------------------

def test_truncated_filtration_detects_ideal_powers(ctx):
    lm1 = eval_expr(E.Sum((E.Line("L"), E.Neg(E.UNIT))), ctx)
    sq = lm1 * lm1
    assert truncated_filtration(sq, ctx.var_aug, 2).is_zero()
    assert not truncated_filtration(sq, ctx.var_aug, 3).is_zero()
    assert not truncated_filtration(lm1, ctx.var_aug, 2).is_zero()


def test_truncated_filtration_with_opaque_rank():
    t = E.SymbolTable(space="X'")
    t.declare_bundle("B", 4)
    ctx = SplitContext(t, opaque=frozenset({"B"}))
    diff = eval_expr(E.Sum((E.Bundle("B"), E.Neg(E.IntConst(4)))), ctx)
    cube = diff * diff * diff
    assert truncated_filtration(cube, ctx.var_aug, 3).is_zero()
    assert not truncated_filtration(cube, ctx.var_aug, 4).is_zero()


def test_unipoly_division_requires_unit_lead():
    y = UniPoly.y()
    with pytest.raises(ValueError):
        (y * y).divmod_exact(y * 2)
    q, r = (y * y - 1).divmod_exact(y - 1)
    assert q == y + 1 and r == UniPoly()
