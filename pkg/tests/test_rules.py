import json
import math
from fractions import Fraction

import pytest

from guardstrength import corpus
from guardstrength import expectation as E
from guardstrength.chain import explore, solve_exact
from guardstrength.parser import parse_expectation, parse_guard, parse_program
from guardstrength.rules import (
    TRUNCATION_POLICY,
    Certificate,
    SideCondition,
    Status,
    certify_lower_bound,
    check_ast_witness,
    check_subinvariant,
    check_superinvariant,
    conditional_difference,
    detect_bounded_update,
    hark_lower_bound,
    is_piecewise_polynomial,
    mciver_morgan_bound,
    park_upper_bound,
    reachable_domain,
    replay,
    ui_report,
)
from guardstrength.strengthen import (
    apply_strengthening,
    make_box_strengthening,
    make_raw_strengthening,
    restricted_post,
)
from guardstrength.syntax import State, grid
from guardstrength.wp_engine import Budget

from helpers import brw, l_brw, ns

HIT0 = parse_expectation("[n <= 0]")
LINF = parse_expectation("[n<0] + [n>=0] * (1/2)^n")


def strengthened(name, M):
    e = corpus.load(name)
    return e, apply_strengthening(e.loop, e.spec(M))


def kind(conds, k):
    return next(c for c in conds if c.kind == k)


# ---------------------------------------------------------------- Park

def test_park_limit_bound_is_fixed_point():
    sc = check_superinvariant(brw(), E.ONE, LINF, ns(-3, 50))
    assert sc.status == Status.VERIFIED_ON_DOMAIN
    cert = park_upper_bound(brw(), E.ONE, LINF, ns(-3, 50))
    assert cert.certified


def test_park_infinity_trivial():
    assert check_superinvariant(brw(), E.ONE, E.INFINITY, ns(0, 3)).status == Status.VERIFIED


def test_park_zero_fails_with_exit_witness():
    sc = check_superinvariant(brw(), E.ONE, E.ZERO, ns(-1, 3))
    assert sc.status == Status.FAILED
    assert sc.evidence["witness"]["n"] <= 0


def test_superinvariant_truncation_degrades():
    loop = parse_program("while (0 < n) { while (0 < k && k < 40) { {k := k - 1} [1/2] {k := k + 1} }; n := 0 }")
    dom = [State(n=1, k=20)]
    sc = check_superinvariant(loop, E.ONE, E.ONE, dom, Budget(max_states=5))
    assert sc.status == Status.REPORTED_UNCHECKED
    sub = check_subinvariant(loop, E.ONE, E.ZERO + parse_expectation("[n<=0]"), dom, Budget(max_states=5))
    assert sub.status == Status.VERIFIED_ON_DOMAIN


def test_truncation_policy_table():
    assert TRUNCATION_POLICY == {"SUBINVARIANT": "keep", "SUPERINVARIANT": Status.REPORTED_UNCHECKED}


# ---------------------------------------------------------------- subinvariance

def test_subinvariant_walk_bound():
    sc = check_subinvariant(brw(10), HIT0, l_brw(10), ns(-2, 12))
    assert sc.status == Status.VERIFIED_ON_DOMAIN


def test_subinvariant_zero_trivial():
    assert check_subinvariant(brw(10), HIT0, E.ZERO, ns(0, 3)).status == Status.VERIFIED


def test_subinvariant_fair_in_the_limit_slack():
    M = 7
    e, loop = strengthened("flrw", M)
    l = e.bound(M)
    sc = check_subinvariant(loop, HIT0, l, ns(-1, 8))
    assert sc.status.ok
    from guardstrength.wp_engine import CharFn, char_fn_apply
    phi = CharFn.of(loop, HIT0)
    for n in range(1, M):
        gap = char_fn_apply(phi, l, State(n=n)).value - l(State(n=n))
        assert gap == Fraction(1, (2 * n + 1) * M)


def test_wrong_bound_fails_with_witness():
    bad = parse_expectation("[n<0] + [0<=n<=M] * ((1/2)^n + (1/2)^M)", {"M": 10})
    sc = check_subinvariant(brw(10), HIT0, bad, ns(-2, 12))
    assert sc.status == Status.FAILED and "witness" in sc.evidence


# ---------------------------------------------------------------- AST witness

def test_ast_witness_walk():
    M = 10
    sc = check_ast_witness(brw(M), M, ns(0, M))
    assert sc.status.ok
    assert sc.evidence["p"] <= 1 - Fraction(2, 3) ** (M - 1)


def test_ast_witness_lottery_unstrengthened():
    e = corpus.load("petersburg")
    dom = grid(a=[0, 1], b=[1, 2, 4, 8])
    sc = check_ast_witness(e.loop, 1, dom, require_closed=False)
    assert sc.status.ok and sc.evidence["p"] <= Fraction(1, 2)


def test_ast_witness_dummy_swapper_fails():
    e, loop = strengthened("dummy_swapper", 4)
    sc = check_ast_witness(loop, 4, e.domain(4))
    assert sc.status == Status.FAILED and sc.evidence["p"] == 1


# ---------------------------------------------------------------- bounded update

def test_bounded_update_constant():
    _, loop = strengthened("bounded_update", 10)
    sc = detect_bounded_update(loop)
    assert sc.status == Status.VERIFIED and sc.evidence["c"] == 3


def test_bounded_update_unknown_for_doubling():
    sc = detect_bounded_update(parse_program("while (x < 5) { x := 2 * x }"))
    assert sc.status == Status.REPORTED_UNCHECKED and sc.evidence["result"] == "UNKNOWN"


def test_bounded_update_skip_zero():
    sc = detect_bounded_update(parse_program("while (x < 5) { skip }"))
    assert sc.evidence["c"] == 0


def test_piecewise_polynomial_class():
    assert is_piecewise_polynomial(parse_expectation("[n<0]*b + [0<=n]*(b + 2*n)*(1 - n/7)"))
    assert not is_piecewise_polynomial(parse_expectation("(1/2)^n"))


# ---------------------------------------------------------------- uniform integrability

def test_ui_lottery_looping_time_bounded():
    M = 16
    e, loop = strengthened("petersburg", M)
    conds = ui_report(loop, e.bound(M), e.domain(M))
    a = kind(conds, "UI_LOOPTIME_BOUNDED")
    assert a.status.ok and a.evidence["N"] == math.ceil(math.log2(M))


def test_ui_bounded_update_walk():
    M = 10
    e, loop = strengthened("bounded_update", M)
    l = e.bound(M)
    dom = reachable_domain(loop, e.domain(M))
    conds = ui_report(loop, l, dom)
    assert kind(conds, "UI_LOOPTIME_BOUNDED").status == Status.FAILED
    assert kind(conds, "UI_BOUNDED").status == Status.FAILED
    cdb = kind(conds, "UI_CDB")
    assert cdb.status == Status.FAILED
    w = cdb.evidence["witness"]
    assert cdb.evidence["delta"] == abs(w["b"] + 2 * w["n"]) / Fraction(M)
    assert kind(conds, "UI_BOUNDED_UPDATE_POLY").status == Status.VERIFIED


def test_conditional_difference_formula_on_domain():
    M = 10
    e, loop = strengthened("bounded_update", M)
    l = e.bound(M)
    for s in grid(n=range(1, M), b=range(2 * M + 2, 2 * M + 6)):
        assert conditional_difference(loop, l, s) == abs(s["b"] + 2 * s["n"]) / Fraction(M)


def test_ui_fair_in_the_limit_bounded():
    M = 7
    e, loop = strengthened("flrw", M)
    conds = ui_report(loop, e.bound(M), ns(-1, 8))
    c = kind(conds, "UI_BOUNDED")
    assert c.status == Status.VERIFIED and c.evidence["sup"] == 1


# ---------------------------------------------------------------- McIver and Morgan

def _walk_p(M, dom):
    loop = brw(M)
    res = solve_exact(explore(loop, dom), E.ONE)
    return loop, E.Table({s: res.value(s) for s in dom})


def test_mm_variant_a_equals_p():
    dom = ns(-1, 6)
    loop, p = _walk_p(5, dom)
    cert = mciver_morgan_bound(loop, E.ONE, E.ONE, p, "a", dom)
    assert cert.certified
    concl = E.Table.from_json(cert.conclusion)
    assert all(concl(s) == p(s) for s in dom)


def test_mm_variant_b_negative_start():
    dom = ns(-3, 6)
    loop, p = _walk_p(5, dom)
    cert = mciver_morgan_bound(loop, E.ONE, E.ONE, p, "b", dom, guard=parse_guard("n < 0"))
    assert cert.certified
    concl = E.Table.from_json(cert.conclusion)
    assert all(concl(s) == (1 if s["n"] < 0 else 0) for s in dom)


def test_mm_variant_c_epsilon():
    M = 5
    dom = ns(-1, M + 1)
    loop, p = _walk_p(M, dom)
    f = restricted_post(brw().guard, E.ONE)
    halved = E.scale(Fraction(1, 2), l_brw(M))
    bad = mciver_morgan_bound(loop, f, halved, p, "c", dom, epsilon=Fraction(1, 2))
    assert not bad.certified
    assert kind(bad.side_conditions, "BOUNDARY_MATCH").status == Status.FAILED
    res = solve_exact(explore(loop, dom), f)
    l = E.Table({s: res.value(s) for s in dom})
    good = mciver_morgan_bound(loop, f, l, p, "c", dom, epsilon=Fraction(1, 2))
    assert good.certified
    assert all(Fraction(1, 2) * l(s) <= p(s) for s in dom)
    too_big = mciver_morgan_bound(loop, f, l, E.Table({s: Fraction(1, 4) for s in dom}), "c", dom,
                                  epsilon=Fraction(1, 2))
    assert kind(too_big.side_conditions, "MM_PREMISE").status == Status.FAILED


# ---------------------------------------------------------------- certificates

def test_certify_walk_hark():
    M = 10
    e = corpus.load("1dbrw")
    cert = certify_lower_bound(e.loop, E.ONE, e.bound(M), e.spec(M), "HARK", e.domain(M))
    assert cert.certified
    assert cert.condition("UI_BOUNDED").status == Status.VERIFIED
    res = solve_exact(explore(apply_strengthening(e.loop, e.spec(M)), e.domain(M)),
                      restricted_post(e.loop.guard, E.ONE))
    for s in e.domain(M):
        assert e.bound(M)(s) <= res.value(s)


def test_certify_cube_exact_solve():
    M = 3
    e = corpus.load("3dsrw")
    loop = apply_strengthening(e.loop, e.spec(M))
    dom = reachable_domain(loop, e.init_states())
    res = solve_exact(explore(loop, dom), restricted_post(e.loop.guard, E.ONE))
    table = E.Table({s: res.value(s) for s in dom})
    cert = certify_lower_bound(e.loop, E.ONE, table, e.spec(M), "EXACT_SOLVE", dom)
    assert cert.certified and replay(cert)


def test_certify_raw_guard_not_implying():
    loop = brw()
    spec = make_raw_strengthening(loop.guard, parse_guard("n < 10"))
    cert = certify_lower_bound(loop, E.ONE, l_brw(10), spec, "HARK", ns(-2, 12))
    assert not cert.certified
    gi = cert.condition("GUARD_IMPLIES")
    assert gi.status == Status.FAILED and gi.evidence["witness"] == State(n=-2)


def test_certify_mm_inner_rule():
    M = 6
    e = corpus.load("1dbrw")
    l = parse_expectation("[n <= 0]")
    cert = certify_lower_bound(e.loop, E.ONE, l, e.spec(M), "MM", ns(-1, M + 1), mm_variant="a")
    assert cert.certified and replay(cert)
    assert cert.condition("MM_CONCLUSION").status.ok


def test_simple_lower_induction_is_not_enough():
    loop = brw()
    one = E.ONE
    dom = ns(-2, 30)
    assert check_subinvariant(loop, one, one, dom).status.ok
    cert = hark_lower_bound(loop, one, one, dom)
    assert not cert.certified
    ident = make_box_strengthening(loop.guard, [])
    assert not certify_lower_bound(loop, one, one, ident, "HARK", dom).certified
    diverging = parse_program("while (true) { skip }")
    assert check_subinvariant(diverging, one, one, [State(n=0)]).status.ok
    assert not hark_lower_bound(diverging, one, one, [State(n=0)]).certified


def test_no_ui_criterion_is_unknown_not_refuted():
    loop = parse_program("while (0 < n) { {n := n - 1} [1/2] {n := n + 1} }")
    l = parse_expectation("[n <= 0] * 2^b")
    spec = make_box_strengthening(loop.guard, [("n", "<", 5)])
    cert = certify_lower_bound(loop, parse_expectation("2^b"), l, spec, "HARK", grid(n=range(-1, 7), b=range(3)))
    assert cert.verdict == "UNKNOWN" and not cert.certified
    assert cert.condition("SUBINVARIANT").status.ok and cert.condition("AST_WITNESS").status.ok
    assert not any(cert.condition(k).status.ok for k in ("UI_LOOPTIME_BOUNDED", "UI_BOUNDED",
                                                         "UI_BOUNDED_UPDATE_POLY"))


@pytest.mark.parametrize("name", ["1dbrw", "petersburg", "flrw", "spiral"])
def test_replay_determinism(name):
    e = corpus.load(name)
    M = e.meta["certify"]["M"]
    inner = e.meta["certify"]["inner"]
    loop = e.loop
    dom = e.domain(M) if e.meta.get("domain") else None
    l = e.bound(M)
    if inner == "EXACT_SOLVE":
        s_loop = apply_strengthening(loop, e.spec(M))
        dom = reachable_domain(s_loop, e.init_states(), Budget(max_states=5000))
        res = solve_exact(explore(s_loop, dom), restricted_post(loop.guard, e.post()))
        l = E.Table({s: res.value(s) for s in dom})
    cert = certify_lower_bound(loop, e.post(), l, e.spec(M), inner, dom)
    assert cert.certified
    assert replay(cert)
    text = cert.dumps()
    back = Certificate.from_json(json.loads(text))
    assert back.dumps() == text
    assert replay(json.loads(text))


def test_side_condition_json_round_trip():
    sc = SideCondition("AST_WITNESS", Status.VERIFIED_ON_DOMAIN, {"N": 3, "p": Fraction(1, 3)})
    d = sc.to_json()
    assert d["evidence"]["p"] == "1/3"
    assert SideCondition.from_json(d).status == Status.VERIFIED_ON_DOMAIN


def test_hark_certified_bound_below_exact_solve():
    for name, M in (("flrw", 20), ("1dbrw", 8), ("nested", 6)):
        e, loop = strengthened(name, M)
        g = restricted_post(e.loop.guard, e.post())
        dom = reachable_domain(loop, e.domain(M))
        cert = hark_lower_bound(loop, g, e.bound(M), dom)
        assert cert.certified, name
        res = solve_exact(explore(loop, dom), g)
        assert all(e.bound(M)(s) <= res.value(s) for s in dom)


def test_park_hark_sandwich_on_walk():
    M = 8
    loop = brw(M)
    dom = ns(-1, M + 1)
    res = solve_exact(explore(loop, dom), HIT0)
    exact = E.Table({s: res.value(s) for s in dom})
    assert park_upper_bound(loop, HIT0, exact, dom).certified
    assert hark_lower_bound(loop, HIT0, exact, dom).certified
    assert all(l_brw(M)(s) <= exact(s) for s in dom)
