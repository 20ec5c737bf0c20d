"""Checkers for lower/upper-bound proof rules and certificate assembly."""

from __future__ import annotations

import enum
import functools
import json
from dataclasses import dataclass, field
from fractions import Fraction

from . import expectation as E
from .chain import (
    explore,
    expected_looping_time,
    looping_time_profile,
    solve_exact,
    tail_probability,
)
from .errors import DomainNotClosed, EvalError
from .intervals import global_upper_bound
from .parser import parse_expectation, parse_guard, parse_program, pretty_print, print_expectation, print_guard
from .strengthen import StrengthenSpec, apply_strengthening, restricted_post
from .syntax import (
    ArithExpr,
    Assign,
    BinOp,
    DiscreteDist,
    If,
    Num,
    ProbChoice,
    RandomAssign,
    Seq,
    Skip,
    State,
    UniformChoice,
    UnOp,
    Var,
    While,
    eval_guard,
    is_loop_free,
)
from .wp_engine import DEFAULT_BUDGET, Budget, CharFn, char_fn_apply, step_distribution

ZERO = Fraction(0)
ONE = Fraction(1)


class Status(str, enum.Enum):
    VERIFIED = "VERIFIED"
    VERIFIED_ON_DOMAIN = "VERIFIED_ON_DOMAIN"
    REPORTED_UNCHECKED = "REPORTED_UNCHECKED"
    FAILED = "FAILED"

    @property
    def ok(self) -> bool:
        return self in (Status.VERIFIED, Status.VERIFIED_ON_DOMAIN)


# What a truncated (lower-bound) evaluation of Φ may still establish.
TRUNCATION_POLICY = {
    "SUBINVARIANT": "keep",  # a lower bound on Φ(l) above l still shows l <= Φ(l)
    "SUPERINVARIANT": Status.REPORTED_UNCHECKED,  # a lower bound below u proves nothing
}


def _ev(v):
    if isinstance(v, State):
        return v.to_text()
    if v is E.INF:
        return "inf"
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, dict):
        return {k: _ev(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_ev(x) for x in v]
    return v


@dataclass
class SideCondition:
    kind: str
    status: Status
    evidence: dict = field(default_factory=dict)
    note: str = ""

    def to_json(self) -> dict:
        return {"kind": self.kind, "status": self.status.value, "evidence": _ev(self.evidence), "note": self.note}

    @classmethod
    def from_json(cls, d: dict) -> "SideCondition":
        return cls(d["kind"], Status(d["status"]), d.get("evidence", {}), d.get("note", ""))


def _domain(domain) -> list:
    out = sorted(set(domain), key=State.sort_key)
    if not out:
        raise ValueError("domain must be nonempty")
    return out


def _is_const(f, value) -> bool:
    return isinstance(f, E.Const) and f.value == value


# ---------------------------------------------------------------- invariants


def check_superinvariant(loop: While, f, u, domain, budget: Budget = DEFAULT_BUDGET) -> SideCondition:
    if _is_const(u, E.INF):
        return SideCondition("SUPERINVARIANT", Status.VERIFIED, {"reason": "greatest element"})
    phi = CharFn.of(loop, f)
    truncated = False
    for s in _domain(domain):
        val, trunc = char_fn_apply(phi, u, s, budget)
        us = E.evaluate(u, s)
        if val > us:
            return SideCondition("SUPERINVARIANT", Status.FAILED,
                                 {"witness": s, "phi": val, "bound": us})
        truncated |= trunc
    if truncated:
        return SideCondition("SUPERINVARIANT", TRUNCATION_POLICY["SUPERINVARIANT"],
                             {"states": len(_domain(domain))}, "body step truncated by budget")
    return SideCondition("SUPERINVARIANT", Status.VERIFIED_ON_DOMAIN, {"states": len(_domain(domain))})


def check_subinvariant(loop: While, f, l, domain, budget: Budget = DEFAULT_BUDGET) -> SideCondition:
    if _is_const(l, ZERO):
        return SideCondition("SUBINVARIANT", Status.VERIFIED, {"reason": "least element"})
    phi = CharFn.of(loop, f)
    truncated = False
    min_slack = None
    dom = _domain(domain)
    for s in dom:
        val, trunc = char_fn_apply(phi, l, s, budget)
        ls = E.evaluate(l, s)
        if ls > val:
            return SideCondition("SUBINVARIANT", Status.FAILED, {"witness": s, "bound": ls, "phi": val})
        truncated |= trunc
        if val is not E.INF and ls is not E.INF:
            slack = val - ls
            min_slack = slack if min_slack is None else min(min_slack, slack)
    ev = {"states": len(dom), "min_slack": min_slack}
    note = "body step truncated; Φ values are lower bounds" if truncated else ""
    return SideCondition("SUBINVARIANT", Status.VERIFIED_ON_DOMAIN, ev, note)


# ---------------------------------------------------------------- AST witness


@functools.lru_cache(maxsize=16)
def _explore_cached(loop: While, dom: tuple, budget: Budget):
    return explore(loop, dom, budget)


def _explore(loop, dom, budget):
    return _explore_cached(loop, tuple(dom), budget)


def _escape(loop: While, dom, budget: Budget):
    """A (state, successor) pair leaving dom into the guard, or None."""
    inside = set(dom)
    for s in dom:
        if not eval_guard(loop.guard, s):
            continue
        for t, _ in step_distribution(loop.body, s, budget).items():
            if t not in inside and eval_guard(loop.guard, t):
                return s, t
    return None


def _closure_check(loop: While, dom: list, budget: Budget):
    """Explore from dom after checking that no step reaches a guard state outside it."""
    esc = _escape(loop, dom, budget)
    if esc is not None:
        raise DomainNotClosed(esc[1], esc[0])
    chain = _explore(loop, dom, budget)
    if chain.truncated:
        raise DomainNotClosed("(exploration budget exhausted)")
    return chain


def _open_domain(kind: str, exc: DomainNotClosed) -> SideCondition:
    return SideCondition(kind, Status.REPORTED_UNCHECKED, {"escaping": exc.state, "from": exc.source},
                         "domain not closed under the loop")


def check_ast_witness(loop: While, N: int | None, domain, budget: Budget = DEFAULT_BUDGET,
                      require_closed: bool = True) -> SideCondition:
    dom = _domain(domain)
    if require_closed:
        chain = _closure_check(loop, dom, budget)
        if N is None:
            N = max(len(chain.transient), 1)
        if any(chain.sink_mass(i) for i in chain.transient):
            i = next(i for i in chain.transient if chain.sink_mass(i))
            return SideCondition("AST_WITNESS", Status.FAILED,
                                 {"N": N, "p": ONE, "witness": chain.states[i]},
                                 "body diverges with positive probability; the divergence sink never exits")
        prof = looping_time_profile(chain, N)
        tails = {s: prof.tail(s) for s in dom}
        status = Status.VERIFIED_ON_DOMAIN
    else:
        if N is None:
            raise ValueError("N is required when closure is not checked")
        tails = {}
        for s in dom:
            t, diverges = tail_probability(loop, s, N, budget)
            if diverges:
                return SideCondition("AST_WITNESS", Status.FAILED, {"N": N, "p": ONE, "witness": s},
                                     "body diverges with positive probability")
            tails[s] = t
        status = Status.VERIFIED_ON_DOMAIN
    worst = max(dom, key=lambda s: tails[s])  # first maximiser in canonical order
    p = tails[worst]
    ev = {"N": N, "p": p, "argmax": worst, "closed": require_closed}
    if p < 1:
        return SideCondition("AST_WITNESS", status, ev)
    return SideCondition("AST_WITNESS", Status.FAILED, {**ev, "witness": worst},
                         "some state cannot leave the guard within N steps")


# ---------------------------------------------------------------- bounded update


def _affine(e: ArithExpr, env: dict):
    """Affine form {var or 1: coeff} of e over the initial variables, or None."""
    if isinstance(e, Num):
        return {1: e.value}
    if isinstance(e, Var):
        return dict(env.get(e.name, {e.name: ONE}))
    if isinstance(e, UnOp) and e.op == "neg":
        a = _affine(e.arg, env)
        return None if a is None else {k: -v for k, v in a.items()}
    if isinstance(e, BinOp):
        a, b = _affine(e.left, env), _affine(e.right, env)
        if a is None or b is None:
            return None
        if e.op in ("+", "-"):
            out = dict(a)
            for k, v in b.items():
                out[k] = out.get(k, ZERO) + (v if e.op == "+" else -v)
            return {k: v for k, v in out.items() if v}
        if e.op == "*":
            if set(a) <= {1}:
                c = a.get(1, ZERO)
                return {k: c * v for k, v in b.items() if c * v}
            if set(b) <= {1}:
                c = b.get(1, ZERO)
                return {k: c * v for k, v in a.items() if c * v}
            return None
        if e.op == "/" and set(b) <= {1} and b.get(1):
            c = b[1]
            return {k: v / c for k, v in a.items()}
    return None


def _paths(c, env):
    """Symbolic environments (var -> affine form) after each branch; None marks unknown."""
    if isinstance(c, Skip):
        return [env]
    if isinstance(c, Assign):
        a = _affine(c.expr, env)
        if a is None:
            return None
        return [{**env, c.var: a}]
    if isinstance(c, RandomAssign):
        if not isinstance(c.dist, DiscreteDist):
            return None
        out = []
        for _, e in c.dist.items:
            a = _affine(e, env)
            if a is None:
                return None
            out.append({**env, c.var: a})
        return out
    if isinstance(c, Seq):
        first = _paths(c.first, env)
        if first is None:
            return None
        out = []
        for e1 in first:
            rest = _paths(c.second, e1)
            if rest is None:
                return None
            out += rest
        return out
    if isinstance(c, (ProbChoice, If, UniformChoice)):
        branches = (
            [c.left, c.right] if isinstance(c, ProbChoice)
            else [c.then, c.orelse] if isinstance(c, If) else list(c.branches)
        )
        out = []
        for b in branches:
            r = _paths(b, env)
            if r is None:
                return None
            out += r
        return out
    return None


def detect_bounded_update(loop: While) -> SideCondition:
    body = loop.body
    if not is_loop_free(body):
        return SideCondition("UI_BOUNDED_UPDATE_POLY", Status.REPORTED_UNCHECKED,
                             {"c": None, "result": "UNKNOWN"}, "body contains a loop")
    paths = _paths(body, {})
    if paths is None:
        return SideCondition("UI_BOUNDED_UPDATE_POLY", Status.REPORTED_UNCHECKED,
                             {"c": None, "result": "UNKNOWN"}, "non-affine or continuous update")
    worst = ZERO
    for env in paths:
        total = ZERO
        for x, form in env.items():
            delta = dict(form)
            delta[x] = delta.get(x, ZERO) - ONE
            delta = {k: v for k, v in delta.items() if v}
            if set(delta) - {1}:
                return SideCondition("UI_BOUNDED_UPDATE_POLY", Status.REPORTED_UNCHECKED,
                                     {"c": None, "result": "UNKNOWN", "variable": x},
                                     f"update of {x} is not a bounded shift")
            total += abs(delta.get(1, ZERO))
        worst = max(worst, total)
    return SideCondition("UI_BOUNDED_UPDATE_POLY", Status.VERIFIED, {"c": worst, "metric": "max branch sum |Δvar|"})


def _arith_poly(e: ArithExpr) -> bool:
    if isinstance(e, (Num, Var)):
        return True
    if isinstance(e, UnOp):
        return e.op in ("neg", "abs") and _arith_poly(e.arg)
    if isinstance(e, BinOp):
        if e.op in ("+", "-", "*", "min", "max"):
            return _arith_poly(e.left) and _arith_poly(e.right)
        if e.op == "/":
            return isinstance(e.right, Num) and _arith_poly(e.left)
        if e.op == "^":
            return (isinstance(e.right, Num) and e.right.value.denominator == 1
                    and e.right.value >= 0 and _arith_poly(e.left))
    return False


def is_piecewise_polynomial(f) -> bool:
    """Syntactic class: polynomials glued by Iverson brackets, min, max and monus."""
    if isinstance(f, E.Const):
        return f.value is not E.INF
    if isinstance(f, E.Leaf):
        return _arith_poly(f.expr)
    if isinstance(f, E.Iverson):
        return True
    if isinstance(f, E.Pow):
        return is_piecewise_polynomial(f.base)
    if isinstance(f, (E.Add, E.Mul, E.Min, E.Max, E.Monus)):
        return is_piecewise_polynomial(f.left) and is_piecewise_polynomial(f.right)
    if isinstance(f, E.Table):
        return True  # finitely supported, hence bounded
    return False


# ---------------------------------------------------------------- u.i. criteria

PROBE_SCALES = (10**3, 10**6, 10**9)


def _growth_witness(fn, states, variables, guard=None):
    """Shift one variable far out; return (state, values) if fn grows without sign of stopping."""
    for s in states:
        for v in sorted(variables):
            if v not in s:
                continue
            for sign in (1, -1):
                vals, probes = [], []
                for k in PROBE_SCALES:
                    t = s.set(v, s[v] + sign * k)
                    if guard is not None and not eval_guard(guard, t):
                        break
                    try:
                        val = fn(t)
                    except EvalError:
                        break
                    if val is E.INF:
                        break
                    vals.append(val)
                    probes.append(t)
                # strictly increasing with non-shrinking increments: no sign of saturation
                if len(vals) == len(PROBE_SCALES) and vals[0] < vals[1] < vals[2] and vals[2] - vals[1] >= vals[1] - vals[0]:
                    return probes[-1], vals
    return None


def _loop_time_bounded(loop: While, dom, budget, N) -> SideCondition:
    try:
        chain = _closure_check(loop, dom, budget)
    except DomainNotClosed as e:
        return _open_domain("UI_LOOPTIME_BOUNDED", e)
    for i in chain.transient:
        if chain.divergence.get(i):
            return SideCondition("UI_LOOPTIME_BOUNDED", Status.FAILED, {"witness": chain.states[i]},
                                 "body may diverge")
    # longest path by DFS with cycle detection
    depth, colour = {}, {}
    for root in chain.init:
        if root in colour:
            continue
        stack = [(root, iter(chain.rows.get(root, {})))]
        colour[root] = 1
        while stack:
            i, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                colour[i] = 2
                depth[i] = 0 if i not in chain.rows else 1 + max((depth[j] for j in chain.rows[i]), default=0)
                continue
            c = colour.get(nxt)
            if c == 1:
                return SideCondition("UI_LOOPTIME_BOUNDED", Status.FAILED, {"witness": chain.states[nxt]},
                                     "reachable cycle inside the guard")
            if c is None:
                colour[nxt] = 1
                stack.append((nxt, iter(chain.rows.get(nxt, {}))))
    bound = max((depth[i] for i in chain.init), default=0)
    ev = {"N": bound}
    if N is not None and bound > N:
        return SideCondition("UI_LOOPTIME_BOUNDED", Status.FAILED, {**ev, "requested_N": N},
                             "looping time exceeds the requested bound")
    note = "wp^n(h) finiteness is vacuous for a loop-free body" if is_loop_free(loop.body) else \
        "wp^n(h) finiteness for the nested body is not checked"
    status = Status.VERIFIED_ON_DOMAIN if is_loop_free(loop.body) else Status.REPORTED_UNCHECKED
    return SideCondition("UI_LOOPTIME_BOUNDED", status, ev, note)


def conditional_difference(loop: While, l, state: State, budget: Budget = DEFAULT_BUDGET):
    """wp[body](|l - l(σ)|)(σ) with |.| as a symmetric monus sum."""
    ls = E.evaluate(l, state)
    d = step_distribution(loop.body, state, budget)
    acc = ZERO
    for t, p in d.weights.items():
        lt = E.evaluate(l, t)
        acc += p * (E.ext_sub(lt, ls) + E.ext_sub(ls, lt))
    return acc


def _cdb(loop: While, l, dom, budget) -> SideCondition:
    inside = [s for s in dom if eval_guard(loop.guard, s)]
    if not inside:
        return SideCondition("UI_CDB", Status.REPORTED_UNCHECKED, {"c": ZERO}, "no guard states in domain")
    c = max(conditional_difference(loop, l, s, budget) for s in inside)
    variables = set().union(*(set(s) for s in inside))
    grow = _growth_witness(lambda t: conditional_difference(loop, l, t, budget), inside, variables, loop.guard)
    if grow is not None:
        state, vals = grow
        return SideCondition("UI_CDB", Status.FAILED, {"witness": state, "delta": vals[-1], "probes": vals},
                             "conditional difference grows without bound along the witness direction")
    try:
        chain = _closure_check(loop, dom, budget)
    except DomainNotClosed as e:
        sc = _open_domain("UI_CDB", e)
        sc.evidence["c_domain"] = c
        return sc
    elt = expected_looping_time(chain)
    worst = max(elt[s] for s in dom)
    if worst is E.INF:
        return SideCondition("UI_CDB", Status.FAILED, {"c_domain": c, "expected_looping_time": worst},
                             "expected looping time is infinite on the domain")
    return SideCondition("UI_CDB", Status.REPORTED_UNCHECKED,
                         {"c_domain": c, "expected_looping_time_max": worst},
                         "finite expected looping time for all states is not decidable here")


def _bounded(loop: While, l, dom) -> SideCondition:
    sup = max(E.evaluate(l, s) for s in dom)
    bound = global_upper_bound(l)
    if bound is not None:
        return SideCondition("UI_BOUNDED", Status.VERIFIED, {"sup": sup, "global_bound": bound})
    variables = set().union(*(set(s) for s in dom))
    grow = _growth_witness(lambda t: E.evaluate(l, t), dom, variables)
    if grow is not None:
        state, vals = grow
        return SideCondition("UI_BOUNDED", Status.FAILED, {"witness": state, "value": vals[-1], "sup": sup},
                             "expectation grows without bound along the witness direction")
    return SideCondition("UI_BOUNDED", Status.REPORTED_UNCHECKED, {"sup": sup}, "no global bound found")


def _orthogonal(loop: While, l) -> SideCondition:
    bu = detect_bounded_update(loop)
    poly = is_piecewise_polynomial(l)
    ev = {**bu.evidence, "piecewise_polynomial": poly}
    if bu.status.ok and poly:
        return SideCondition("UI_BOUNDED_UPDATE_POLY", Status.VERIFIED, ev, "needs the AST witness condition")
    return SideCondition("UI_BOUNDED_UPDATE_POLY", Status.REPORTED_UNCHECKED, ev,
                         bu.note or "not syntactically piecewise polynomial")


def ui_report(loop: While, l, domain, budget: Budget = DEFAULT_BUDGET, N: int | None = None) -> list:
    dom = _domain(domain)
    if any(E.evaluate(l, s) is E.INF for s in dom):
        note = "candidate takes the value inf"
        return [SideCondition(k, Status.FAILED, {}, note)
                for k in ("UI_LOOPTIME_BOUNDED", "UI_CDB", "UI_BOUNDED", "UI_BOUNDED_UPDATE_POLY")]
    return [
        _loop_time_bounded(loop, dom, budget, N),
        _cdb(loop, l, dom, budget),
        _bounded(loop, l, dom),
        _orthogonal(loop, l),
    ]


UI_SUFFICIENT = ("UI_LOOPTIME_BOUNDED", "UI_BOUNDED", "UI_BOUNDED_UPDATE_POLY")


# ---------------------------------------------------------------- certificates


@dataclass
class Certificate:
    rule: str
    loop: str
    post: str
    bound: object  # text or table JSON
    side_conditions: list
    domain: list
    verdict: str
    inner_rule: str | None = None
    conclusion: dict | None = None
    inputs: dict | None = None

    @property
    def certified(self) -> bool:
        return self.verdict == "CERTIFIED"

    def condition(self, kind: str) -> SideCondition | None:
        return next((c for c in self.side_conditions if c.kind == kind), None)

    def failures(self) -> list:
        return [c for c in self.side_conditions if c.status == Status.FAILED]

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "inner_rule": self.inner_rule,
            "verdict": self.verdict,
            "loop": self.loop,
            "post": self.post,
            "bound": self.bound,
            "side_conditions": [c.to_json() for c in self.side_conditions],
            "domain": [s.to_text() for s in self.domain],
            "conclusion": self.conclusion,
            "inputs": self.inputs,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "Certificate":
        return cls(
            d["rule"], d["loop"], d["post"], d["bound"],
            [SideCondition.from_json(c) for c in d["side_conditions"]],
            [State.from_text(s) for s in d["domain"]], d["verdict"], d.get("inner_rule"),
            d.get("conclusion"), d.get("inputs"),
        )


def _text(f) -> object:
    if isinstance(f, E.Table):
        return {"table": f.to_json()}
    return print_expectation(f)


def _from_text(x):
    if isinstance(x, dict) and "table" in x:
        return E.Table.from_json(x["table"])
    return parse_expectation(x)


def _verdict(conds, required) -> str:
    for kind in required:
        c = next((c for c in conds if c.kind == kind), None)
        if c is None or not c.status.ok:
            return "FAILED"
    return "CERTIFIED"


def park_upper_bound(loop: While, f, u, domain, budget: Budget = DEFAULT_BUDGET) -> Certificate:
    dom = _domain(domain)
    sc = check_superinvariant(loop, f, u, dom, budget)
    return Certificate("PARK_UPPER", pretty_print(loop), _text(f), _text(u), [sc], dom,
                       _verdict([sc], ["SUPERINVARIANT"]))


def _hark_conditions(loop: While, f, l, dom, budget, N) -> list:
    conds = [check_subinvariant(loop, f, l, dom, budget)]
    try:
        conds.append(check_ast_witness(loop, N, dom, budget))
    except DomainNotClosed as e:
        conds.append(SideCondition("AST_WITNESS", Status.FAILED, {"escaping": str(e.state)}, str(e)))
    conds.extend(ui_report(loop, l, dom, budget))
    return conds


def _hark_ok(conds) -> bool:
    need = all(c.status.ok for c in conds if c.kind in ("SUBINVARIANT", "AST_WITNESS"))
    return need and any(c.status.ok for c in conds if c.kind in UI_SUFFICIENT)


def _hark_verdict(conds) -> str:
    if _hark_ok(conds):
        return "CERTIFIED"
    if all(c.status.ok for c in conds if c.kind in ("SUBINVARIANT", "AST_WITNESS")):
        return "UNKNOWN"  # only the sufficient u.i. criteria are checked, so this is not a refutation
    return "FAILED"


def hark_lower_bound(loop: While, f, l, domain, budget: Budget = DEFAULT_BUDGET, N=None) -> Certificate:
    dom = _domain(domain)
    conds = _hark_conditions(loop, f, l, dom, budget, N)
    return Certificate("HARK_LOWER", pretty_print(loop), _text(f), _text(l), conds, dom,
                       _hark_verdict(conds))


def _bounded_f(f, dom) -> SideCondition:
    bound = global_upper_bound(f)
    if bound is not None:
        return SideCondition("BOUNDED_F", Status.VERIFIED, {"bound": bound})
    vals = [E.evaluate(f, s) for s in dom]
    if any(v is E.INF for v in vals):
        return SideCondition("BOUNDED_F", Status.FAILED, {}, "infinite value on the domain")
    return SideCondition("BOUNDED_F", Status.VERIFIED_ON_DOMAIN, {"sup": max(vals)})


def mciver_morgan_bound(loop: While, f, l, p_lower, variant: str, domain, budget: Budget = DEFAULT_BUDGET,
                        guard=None, epsilon=None) -> Certificate:
    """Lower bound by the McIver–Morgan rule; p_lower under-approximates wp[loop](1)."""
    dom = _domain(domain)
    conds = [_bounded_f(f, dom)]
    lb = _bounded_f(l, dom)
    lb.evidence = {**lb.evidence, "of": "candidate"}
    conds.append(lb)
    conds.append(check_subinvariant(loop, f, l, dom, budget))
    boundary = SideCondition("BOUNDARY_MATCH", Status.VERIFIED_ON_DOMAIN, {"states": len(dom)})
    for s in dom:
        if not eval_guard(loop.guard, s) and E.evaluate(l, s) != E.evaluate(f, s):
            boundary = SideCondition("BOUNDARY_MATCH", Status.FAILED, {"witness": s}, "[¬G]·l differs from [¬G]·f")
            break
    conds.append(boundary)
    table = {}
    pre = SideCondition("MM_PREMISE", Status.VERIFIED_ON_DOMAIN, {"variant": variant})
    for s in dom:
        p = E.evaluate(p_lower, s)
        ls = E.evaluate(l, s)
        if variant == "a":
            if ls not in (ZERO, ONE):
                pre = SideCondition("MM_PREMISE", Status.FAILED, {"witness": s, "value": ls},
                                    "variant (a) needs an Iverson-bracket candidate")
                break
            table[s] = p * ls
        elif variant == "b":
            ind = ONE if eval_guard(guard, s) else ZERO
            if ind > p:
                pre = SideCondition("MM_PREMISE", Status.FAILED, {"witness": s, "p": p},
                                    "[G] is not below the termination probability")
                break
            table[s] = ind * ls
        elif variant == "c":
            eps = Fraction(epsilon)
            if not 0 < eps <= 1:
                raise ValueError("epsilon must lie in (0, 1]")
            if eps * ls > p:
                pre = SideCondition("MM_PREMISE", Status.FAILED, {"witness": s, "p": p},
                                    "ε·l is not below the termination probability")
                break
            table[s] = ls
        else:
            raise ValueError(f"unknown variant {variant!r}")
    conds.append(pre)
    required = ["BOUNDED_F", "SUBINVARIANT", "BOUNDARY_MATCH", "MM_PREMISE"]
    ok = all(c.status.ok for c in conds if c.kind in required)
    conclusion = E.Table(table).to_json() if ok else None
    return Certificate("MM_LOWER", pretty_print(loop), _text(f), _text(l), conds, dom,
                       "CERTIFIED" if ok else "FAILED", conclusion=conclusion)


def certify_lower_bound(loop: While, f, l, spec: StrengthenSpec, inner_rule: str, domain,
                        budget: Budget = DEFAULT_BUDGET, N: int | None = None,
                        mm_variant: str = "c", mm_guard=None, mm_epsilon=None) -> Certificate:
    """Guard-strengthening derivation of l <= wp[loop](f) on the domain."""
    dom = _domain(domain)
    inner_rule = inner_rule.upper()
    inputs = {
        "program": pretty_print(loop),
        "post": _text(f),
        "bound": _text(l),
        "base_guard": print_guard(spec.base_guard),
        "conjuncts": [print_guard(c) for c in spec.conjuncts],
        "raw_guard": print_guard(spec.raw_guard) if spec.raw_guard is not None else None,
        "inner_rule": inner_rule,
        "domain": [s.to_text() for s in dom],
        "budget": {"max_states": budget.max_states, "max_depth": budget.max_depth},
        "N": N,
        "mm": {"variant": mm_variant, "guard": print_guard(mm_guard) if mm_guard is not None else None,
               "epsilon": str(mm_epsilon) if mm_epsilon is not None else None},
    }
    strengthened = apply_strengthening(loop, spec)
    if spec.by_construction:
        gi = SideCondition("GUARD_IMPLIES", Status.VERIFIED, {"by_construction": True})
    else:
        r = spec.check_implication(dom)
        gi = (SideCondition("GUARD_IMPLIES", Status.VERIFIED_ON_DOMAIN, {"states": len(dom)}) if r
              else SideCondition("GUARD_IMPLIES", Status.FAILED, {"witness": r.witness},
                                 "strengthened guard does not imply the original"))
    conds = [gi]
    conclusion = None

    def done(verdict):
        return Certificate("GUARD_STRENGTHEN", pretty_print(strengthened), _text(f), _text(l), conds, dom,
                           verdict, inner_rule, conclusion, inputs)

    if not gi.status.ok:
        return done("FAILED")
    g = restricted_post(loop.guard, f)
    if inner_rule == "HARK":
        conds += _hark_conditions(strengthened, g, l, dom, budget, N)
        return done(_hark_verdict(conds))
    if inner_rule == "EXACT_SOLVE":
        chain = explore(strengthened, dom, budget)
        res = solve_exact(chain, g)
        sc = SideCondition("EXACT_SOLVE", Status.VERIFIED_ON_DOMAIN,
                           {"chain_states": chain.n_states, "truncated": chain.truncated})
        for s in dom:
            ls, v = E.evaluate(l, s), res.value(s)
            if ls > v:
                sc = SideCondition("EXACT_SOLVE", Status.FAILED, {"witness": s, "bound": ls, "solve": v})
                break
        conds.append(sc)
        conclusion = E.Table({s: res.value(s) for s in dom}).to_json()
        return done("CERTIFIED" if sc.status.ok else "FAILED")
    if inner_rule == "MM":
        chain = explore(strengthened, dom, budget)
        p = solve_exact(chain, E.ONE)
        p_table = E.Table({s: p.value(s) for s in dom})
        mm = mciver_morgan_bound(strengthened, g, l, p_table, mm_variant, dom, budget, mm_guard, mm_epsilon)
        conds += mm.side_conditions
        ok = mm.certified
        if ok:
            concl = E.Table.from_json(mm.conclusion)
            cmp = SideCondition("MM_CONCLUSION", Status.VERIFIED_ON_DOMAIN, {"states": len(dom)})
            for s in dom:
                if E.evaluate(l, s) > concl(s):
                    cmp = SideCondition("MM_CONCLUSION", Status.FAILED, {"witness": s},
                                        "candidate exceeds the rule's conclusion")
                    ok = False
                    break
            conds.append(cmp)
            conclusion = mm.conclusion
        return done("CERTIFIED" if ok else "FAILED")
    raise ValueError(f"unknown inner rule {inner_rule!r}")


def replay(cert) -> bool:
    """Re-run a certificate's checks from its serialized inputs and compare."""
    d = cert.to_json() if isinstance(cert, Certificate) else cert
    inp = d["inputs"]
    if inp is None:
        raise ValueError("certificate carries no replay inputs")
    loop = parse_program(inp["program"])
    base = parse_guard(inp["base_guard"])
    spec = StrengthenSpec(base, tuple(parse_guard(c) for c in inp["conjuncts"]),
                          parse_guard(inp["raw_guard"]) if inp["raw_guard"] else None)
    mm = inp["mm"]
    again = certify_lower_bound(
        loop, _from_text(inp["post"]), _from_text(inp["bound"]), spec, inp["inner_rule"],
        [State.from_text(s) for s in inp["domain"]], Budget(**inp["budget"]), inp["N"],
        mm["variant"], parse_guard(mm["guard"]) if mm["guard"] else None,
        Fraction(mm["epsilon"]) if mm["epsilon"] else None,
    )
    return again.to_json() == d


def reachable_domain(loop: While, domain, budget: Budget = DEFAULT_BUDGET) -> list:
    """The domain together with every state the loop can reach from it."""
    chain = explore(loop, list(domain), budget)
    if chain.truncated:
        raise DomainNotClosed("(exploration budget exhausted)")
    return sorted(chain.states, key=State.sort_key)
