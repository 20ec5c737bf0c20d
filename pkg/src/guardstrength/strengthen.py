"""Guard strengthening: conjoin constraints onto a loop guard."""

from __future__ import annotations

from dataclasses import dataclass

from . import expectation as E
from .errors import GuardMismatch
from .parser import parse_arith, parse_guard
from .syntax import ArithExpr, Cmp, Guard, Num, While, conj, guard_implies, negate, to_fraction

COMPARATORS = ("<", ">", "<=", ">=", "=")


@dataclass(frozen=True)
class StrengthenSpec:
    base_guard: Guard
    conjuncts: tuple = ()  # Cmp guards, or arbitrary guards on the raw path
    raw_guard: Guard | None = None  # escape hatch: replaces the whole guard

    @property
    def resulting_guard(self) -> Guard:
        if self.raw_guard is not None:
            return self.raw_guard
        return conj(self.base_guard, *self.conjuncts)

    @property
    def by_construction(self) -> bool:
        return self.raw_guard is None

    def check_implication(self, domain):
        """Domain check of G' => G; trivially true for conjunctive specs."""
        if self.by_construction:
            return guard_implies(self.resulting_guard, self.base_guard, domain)
        return guard_implies(self.raw_guard, self.base_guard, domain)


def _as_expr(x, constants=None) -> ArithExpr:
    if isinstance(x, ArithExpr):
        return x
    if isinstance(x, str):
        return parse_arith(x, constants)
    return Num(to_fraction(x))


def make_box_strengthening(G: Guard, bounds, constants=None) -> StrengthenSpec:
    """`bounds` holds (var, op, c) triples; var may be any arithmetic expression text."""
    cs = []
    for v, op, c in bounds:
        if op == "==":
            op = "="
        if op not in COMPARATORS:
            raise ValueError(f"unsupported comparator {op!r}")
        cs.append(Cmp(op, _as_expr(v, constants), _as_expr(c, constants)))
    return StrengthenSpec(G, tuple(cs))


def make_conjunct_strengthening(G: Guard, extra: Guard) -> StrengthenSpec:
    """Conjoin an arbitrary guard (e.g. an annulus constraint)."""
    return StrengthenSpec(G, (extra,))


def make_raw_strengthening(G: Guard, guard: Guard) -> StrengthenSpec:
    return StrengthenSpec(G, (), raw_guard=guard)


def apply_strengthening(loop: While, spec: StrengthenSpec) -> While:
    if loop.guard != spec.base_guard:
        raise GuardMismatch("strengthening spec does not match the loop guard")
    return While(spec.resulting_guard, loop.body)


def restricted_post(G: Guard, f) -> E.Expectation:
    f = E.lift(f)
    return E.Mul(E.Iverson(negate(G)), f)


# ---------------------------------------------------------------- sweep families


@dataclass(frozen=True)
class SweepFamily:
    """Box strengthenings whose bound expressions mention the parameter."""

    param: str
    values: tuple
    bounds: tuple  # (var text, op, bound text) with `param` free
    nested: bool = True  # G'_M => G'_{M+1} along `values`
    extra: tuple = ()  # extra guard texts, parameterised the same way

    def spec(self, G: Guard, M) -> StrengthenSpec:
        consts = {self.param: M}
        s = make_box_strengthening(G, self.bounds, consts)
        extra = tuple(parse_guard(g, consts) for g in self.extra)
        return StrengthenSpec(G, s.conjuncts + extra)

    def check_nested(self, G: Guard, domain) -> list:
        """Consecutive pairs (M, M', witness) where G'_M does not imply G'_M'."""
        bad = []
        vals = list(self.values)
        for a, b in zip(vals, vals[1:]):
            r = guard_implies(self.spec(G, a).resulting_guard, self.spec(G, b).resulting_guard, domain)
            if not r:
                bad.append((a, b, r.witness))
        return bad


def sweep_values(start, stop, step=1, geometric=False) -> tuple:
    out, v = [], start
    while v <= stop:
        out.append(v)
        v = v * step if geometric else v + step
    return tuple(out)


def family_from_json(data: dict) -> SweepFamily:
    sw = data.get("sweep", {})
    param = sw.get("param", "M")
    if "values" in sw:
        values = tuple(sw["values"])
    else:
        values = sweep_values(sw.get("from", 2), sw.get("to", 32), sw.get("step", 1),
                              sw.get("geometric", False))
    bounds = tuple((b["var"], b["op"], str(b["c"])) for b in data.get("bounds", []))
    return SweepFamily(param, values, bounds, sw.get("nested", True), tuple(data.get("extra", ())))


def spec_from_json(G: Guard, data: dict, constants=None) -> StrengthenSpec:
    if "guard" in data:
        return make_raw_strengthening(G, parse_guard(data["guard"], constants))
    bounds = [(b["var"], b["op"], str(b["c"])) for b in data.get("bounds", [])]
    s = make_box_strengthening(G, bounds, constants)
    extra = tuple(parse_guard(g, constants) for g in data.get("extra", ()))
    return StrengthenSpec(G, s.conjuncts + extra)
