"""Rewrite engine: rule set, chain replay, base change, lambda expansion, traces."""

import json
from dataclasses import replace
from math import comb

import pytest

from adamsrr import expr as E
from adamsrr import picard as P
from adamsrr import splitting as S
from adamsrr.rewrite import (
    Geometry, OMEGA, adams_to_frobenius, emit_trace, insert_rank_zero_power,
    is_prime, knudsen_mumford_expansion, parse_trace_json, revalidate_trace,
    rule_set, tilde_inverse_expr, verify_base_change, verify_arr_identity,
)


# -- geometry and rules -----------------------------------------------------------

def test_rule_set_contains_the_cited_rules():
    rules = rule_set(1, 2)
    for name in ("R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8", "R9", "KEQ"):
        assert name in rules
        assert all(h for _, h in rules[name].conditions)


def test_rule_set_requires_prime():
    with pytest.raises(Exception):
        Geometry(1, 4)


def test_r5_rewrites_pushed_structure_to_bott_class():
    geom = Geometry(2, 3)
    got = geom.frobenius_reduce(geom.pushed_structure())
    assert got == E.Theta(3, E.Bundle(OMEGA))
    # the Bott class has the right rank p^n
    assert E.rank(got, geom.table_x) == 3**2


def test_frobenius_reduce_composes_through_twist_symbols():
    geom = Geometry(1, 2, {"L": 1})
    got = geom.frobenius_reduce(E.Line(geom.j_name("L")))
    assert got == E.Psi(2, E.Line("L"))


def test_r3_refuses_below_boundary_and_records_it():
    geom = Geometry(1, 2, {"L": 1})
    rules = rule_set(1, 2)
    gl = P.det_rf_atom(geom.fp, E.Line(geom.j_name("L")))
    out, conds = insert_rank_zero_power(geom, gl, geom.n + 1, rules)
    assert out == gl  # unchanged
    recorded = dict(conds)
    assert recorded["l = 2 >= n+2 = 3"] is False
    out2, conds2 = insert_rank_zero_power(geom, gl, geom.n + 2, rules)
    assert all(h for _, h in conds2)
    assert out2.same_atoms(gl)  # inserted summand is det-trivial


def test_r1_rewrites_adams_of_det_atom_to_pullback_atom():
    geom = Geometry(1, 2, {"L": 1})
    rules = rule_set(1, 2)
    gl = P.psi_line(2, P.det_rf_atom(geom.f, E.Line("L")))
    out = adams_to_frobenius(geom, gl, rules)
    (slot,) = out.dets.keys()
    assert slot[0] == (("pull", geom.name_FS),)
    assert "F_S^*(det_rf[f](L))" in out.render()


# -- theorem (I) --------------------------------------------------------------------

def test_theorem_replay_line_n1_p2():
    tr = verify_arr_identity(1, 2)
    assert tr.verified
    assert len(tr.steps) == 9
    assert [s.label for s in tr.steps] == [f"({i})" for i in range(1, 10)]
    assert all(s.ok() for s in tr.steps)


def test_theorem_replay_bundle_n2_p3():
    tr = verify_arr_identity(2, 3, E.Bundle("E"), {"E": 2})
    assert tr.verified
    assert len(tr.steps) == 9


def test_theorem_replay_steps_chain():
    tr = verify_arr_identity(1, 3)
    for a, b in zip(tr.steps, tr.steps[1:]):
        assert a.after == b.before


def test_theorem_replay_cites_expected_rules():
    tr = verify_arr_identity(1, 2)
    cited = [s.rule for s in tr.steps]
    assert cited[0] == "R1,R2"
    assert cited[1] == "R2"
    assert cited[2] == "R3,R8"
    assert cited[5] == "R4"
    assert cited[6] == "R9,R6"
    assert cited[7] == "R5,R1"


def test_tampered_r5_fails_at_its_step():
    rules = rule_set(1, 2)
    rules["R5"] = replace(rules["R5"],
                          action=lambda: E.Tensor((E.Theta(2, E.Bundle(OMEGA)),
                                                   E.Line("L"))))
    tr = verify_arr_identity(1, 2, rules=rules)
    assert tr.status == "failed"
    assert "R5" in tr.steps[tr.failed_step].rule
    assert tr.steps[tr.failed_step].label == "(8)"


def test_missing_rule_fails_cleanly():
    rules = rule_set(1, 2)
    del rules["R4"]
    tr = verify_arr_identity(1, 2, rules=rules)
    assert tr.status == "failed"
    assert "R4" in tr.failure


def test_stubbed_binomial_oracle_fails_the_chain():
    def bad_oracle(n, p):
        w = S.binomial_identity_check(n, p)
        w.ok = False
        return w

    tr = verify_arr_identity(1, 2, binomial_oracle=bad_oracle)
    assert tr.status == "failed"
    assert tr.steps[tr.failed_step].label == "(4)"


def test_every_step_records_at_least_one_condition():
    tr = verify_arr_identity(2, 2)
    assert all(s.conditions for s in tr.steps)


def test_tilde_expr_matches_polynomial_kernel():
    # the AST-level tilde evaluates to the same class as the generic ring version
    geom = Geometry(1, 2)
    theta = E.Theta(2, geom.omega())
    ast_val = S.eval_expr(tilde_inverse_expr(1, 2, theta), geom.ctx_x)
    ring_val = S.tilde_theta_inverse(1, 2, S.eval_expr(theta, geom.ctx_x))
    assert S.classes_equal(ast_val, ring_val)


def test_trivial_summand_reduction_is_order_independent():
    # normalize sees the rank-zero-power summands in either order
    geom = Geometry(1, 2, {"L": 1})
    j_l = E.Line(geom.j_name("L"))
    diff = E.Sum((geom.pushed_structure(), E.Neg(E.IntConst(2))))
    t1 = E.Tensor((E.Power(diff, 3), j_l))
    t2 = E.Tensor((E.Power(diff, 4), j_l))
    core = E.Tensor((E.IntConst(8), j_l))
    a = P.normalize(P.det_rf_atom(geom.fp, E.Sum((core, t1, t2))))
    b = P.normalize(P.det_rf_atom(geom.fp, E.Sum((t2, core, t1))))
    c = P.normalize(P.det_rf_atom(geom.fp, core))
    assert a == b
    assert a.same_atoms(c)


# -- theorem (II) ----------------------------------------------------------------------

@pytest.mark.parametrize("n,p", [(1, 2), (1, 3), (2, 2), (2, 3)])
def test_base_change_square_commutes(n, p):
    tr = verify_base_change(n, p)
    assert tr.verified, tr.failure


def test_base_change_square_rank3_bundle():
    tr = verify_base_change(2, 2, E.Bundle("E"), {"E": 3})
    assert tr.verified


def test_base_change_top_edge_step_labels():
    tr = verify_base_change(1, 2)
    labels = [s.label for s in tr.steps]
    for want in ("(10)", "(11)", "(12)", "(13)", "right", "left", "square"):
        assert want in labels


def test_ablating_r7_breaks_the_bottom_edge():
    rules = rule_set(1, 2)
    del rules["R7"]
    tr = verify_base_change(1, 2, rules=rules)
    assert tr.status == "failed"
    assert "R7" in tr.failure


# -- lambda expansion --------------------------------------------------------------------

def test_km_exponents_n1_p2():
    km = knudsen_mumford_expansion(1, 2)
    assert km.verified
    assert km.exponents == [1, 6, 12]
    assert km.left_exponent == 16


def test_km_exponents_n2_p2():
    km = knudsen_mumford_expansion(2, 2)
    assert km.verified
    assert km.exponents == [1, 16, 96, 256]
    assert km.left_exponent == 2 ** (2 * 4 + 1)


def test_km_exponents_n1_p3():
    km = knudsen_mumford_expansion(1, 3)
    assert km.verified
    assert km.exponents == [comb(3, i) * 3**i for i in range(3)]
    assert km.left_exponent == 3**4


def test_km_lambda_factors_render():
    km = knudsen_mumford_expansion(1, 2)
    assert len(km.lambda_factors) == 3
    assert any("theta(2, Omega_f)^2" in s for s in km.lambda_factors)
    assert any("L^4" in s for s in km.lambda_factors)


# -- trace emission -------------------------------------------------------------------------

def test_emit_trace_json_schema_and_roundtrip():
    tr = verify_arr_identity(1, 2)
    doc = json.loads(emit_trace(tr, "json"))
    assert doc["status"] == "verified"
    assert doc["params"] == {"n": 1, "p": 2}
    assert set(doc["goal"]) == {"lhs", "rhs"}
    assert len(doc["steps"]) == 9
    for step in doc["steps"]:
        assert {"rule", "anchor", "before", "after", "conditions"} <= set(step)
        for cond in step["conditions"]:
            assert set(cond) == {"name", "holds"}
    back = parse_trace_json(emit_trace(tr, "json"))
    assert revalidate_trace(back)
    assert emit_trace(back, "json") == emit_trace(tr, "json")


def test_emit_trace_failed_carries_step_index():
    rules = rule_set(1, 2)
    del rules["R7"]
    tr = verify_base_change(1, 2, rules=rules)
    doc = json.loads(emit_trace(tr, "json"))
    assert doc["status"] == "failed"
    assert isinstance(doc["failed_step"], int)
    assert revalidate_trace(parse_trace_json(emit_trace(tr, "json")))


def test_emit_trace_text_numbers_steps():
    text = emit_trace(verify_arr_identity(1, 2), "text")
    for i in range(1, 10):
        assert f"({i})" in text
    assert "status: verified" in text


def test_is_prime():
    assert [q for q in range(20) if is_prime(q)] == [2, 3, 5, 7, 11, 13, 17, 19]
