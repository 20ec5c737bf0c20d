"""Abstract syntax of pGCL programs, guards and arithmetic, plus exact evaluation."""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .errors import DivisionByZero, EvalError, UnboundVariable


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, float)):
        return Fraction(value)
    return Fraction(str(value).strip())


# ---------------------------------------------------------------- states


class State(Mapping):
    """Immutable variable assignment with a canonical (sorted) form."""

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, values=(), **kw):
        d = dict(values)
        d.update(kw)
        items = tuple(sorted((str(k), to_fraction(v)) for k, v in d.items()))
        self._items = items
        self._map = dict(items)
        self._hash = None

    def __getitem__(self, name):
        try:
            return self._map[name]
        except KeyError:
            raise UnboundVariable(f"unbound variable {name!r}", self) from None

    def __iter__(self):
        return (k for k, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, name):
        return name in self._map

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._items)
        return self._hash

    def __eq__(self, other):
        if isinstance(other, State):
            return self._items == other._items
        return NotImplemented

    def __lt__(self, other):
        return self._items < other._items

    def items(self):
        return self._items

    def set(self, name, value) -> "State":
        d = dict(self._map)
        d[name] = to_fraction(value)
        return State(d)

    def sort_key(self):
        return self._items

    def __repr__(self):
        return "{" + ", ".join(f"{k}: {v}" for k, v in self._items) + "}"

    def to_text(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self._items)

    @classmethod
    def from_text(cls, text: str) -> "State":
        if not text.strip():
            return cls()
        parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
        return cls({k.strip(): to_fraction(v) for k, v in (p.split("=", 1) for p in parts)})


def grid(**ranges) -> list[State]:
    """Product of per-variable value ranges, in canonical order."""
    names = sorted(ranges)
    pools = [list(ranges[n]) for n in names]
    return [State(zip(names, combo)) for combo in itertools.product(*pools)]


# ---------------------------------------------------------------- arithmetic


class ArithExpr:
    __slots__ = ()


@dataclass(frozen=True)
class Num(ArithExpr):
    value: Fraction


@dataclass(frozen=True)
class Var(ArithExpr):
    name: str


@dataclass(frozen=True)
class UnOp(ArithExpr):
    op: str  # neg | abs | floor
    arg: ArithExpr


@dataclass(frozen=True)
class BinOp(ArithExpr):
    op: str  # + - * / ^ min max
    left: ArithExpr
    right: ArithExpr


def num(v) -> Num:
    return Num(to_fraction(v))


def _pow(base: Fraction, exp: Fraction, state=None) -> Fraction:
    if exp.denominator != 1:
        if base == 1:
            return Fraction(1)
        raise EvalError(f"non-integer exponent {exp}", state)
    k = exp.numerator
    if k < 0:
        if base == 0:
            raise DivisionByZero("zero raised to a negative power", state)
        return Fraction(1) / base ** (-k)
    return base**k


def eval_arith(e: ArithExpr, state: State) -> Fraction:
    t = type(e)
    if t is Num:
        return e.value
    if t is Var:
        return state[e.name]
    if t is BinOp:
        a = eval_arith(e.left, state)
        b = eval_arith(e.right, state)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise DivisionByZero("division by zero", state)
            return a / b
        if op == "^":
            return _pow(a, b, state)
        if op == "min":
            return min(a, b)
        if op == "max":
            return max(a, b)
        raise EvalError(f"unknown operator {op}")
    if t is UnOp:
        a = eval_arith(e.arg, state)
        if e.op == "neg":
            return -a
        if e.op == "abs":
            return abs(a)
        if e.op == "floor":
            return Fraction(math.floor(a))
        raise EvalError(f"unknown operator {e.op}")
    raise TypeError(f"not an arithmetic expression: {e!r}")


def arith_vars(e: ArithExpr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, BinOp):
        return arith_vars(e.left) | arith_vars(e.right)
    if isinstance(e, UnOp):
        return arith_vars(e.arg)
    return set()


def subst_arith(e: ArithExpr, mapping: Mapping[str, ArithExpr]) -> ArithExpr:
    """Simultaneous substitution of variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_arith(e.left, mapping), subst_arith(e.right, mapping))
    if isinstance(e, UnOp):
        return UnOp(e.op, subst_arith(e.arg, mapping))
    return e


# ---------------------------------------------------------------- guards


class Guard:
    __slots__ = ()


@dataclass(frozen=True)
class BoolConst(Guard):
    value: bool


@dataclass(frozen=True)
class Cmp(Guard):
    op: str  # < <= = != >= >
    left: ArithExpr
    right: ArithExpr


@dataclass(frozen=True)
class And(Guard):
    left: Guard
    right: Guard


@dataclass(frozen=True)
class Or(Guard):
    left: Guard
    right: Guard


@dataclass(frozen=True)
class Not(Guard):
    arg: Guard


TRUE = BoolConst(True)
FALSE = BoolConst(False)

_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}
NEGATED_CMP = {"<": ">=", "<=": ">", "=": "!=", "!=": "=", ">=": "<", ">": "<="}


def eval_guard(g: Guard, state: State) -> bool:
    t = type(g)
    if t is Cmp:
        return _CMP[g.op](eval_arith(g.left, state), eval_arith(g.right, state))
    if t is And:
        return eval_guard(g.left, state) and eval_guard(g.right, state)
    if t is Or:
        return eval_guard(g.left, state) or eval_guard(g.right, state)
    if t is Not:
        return not eval_guard(g.arg, state)
    if t is BoolConst:
        return g.value
    raise TypeError(f"not a guard: {g!r}")


def subst_guard(g: Guard, mapping: Mapping[str, ArithExpr]) -> Guard:
    if isinstance(g, Cmp):
        return Cmp(g.op, subst_arith(g.left, mapping), subst_arith(g.right, mapping))
    if isinstance(g, And):
        return And(subst_guard(g.left, mapping), subst_guard(g.right, mapping))
    if isinstance(g, Or):
        return Or(subst_guard(g.left, mapping), subst_guard(g.right, mapping))
    if isinstance(g, Not):
        return Not(subst_guard(g.arg, mapping))
    return g


def guard_vars(g: Guard) -> set[str]:
    if isinstance(g, Cmp):
        return arith_vars(g.left) | arith_vars(g.right)
    if isinstance(g, (And, Or)):
        return guard_vars(g.left) | guard_vars(g.right)
    if isinstance(g, Not):
        return guard_vars(g.arg)
    return set()


def conj(*gs: Guard) -> Guard:
    """Left-nested conjunction, dropping literal true."""
    out = None
    for g in gs:
        if g == TRUE:
            continue
        out = g if out is None else And(out, g)
    return TRUE if out is None else out


def conjuncts(g: Guard) -> list[Guard]:
    if isinstance(g, And):
        return conjuncts(g.left) + conjuncts(g.right)
    return [g]


def negate(g: Guard) -> Guard:
    """Negation pushed onto comparisons where that stays readable."""
    if isinstance(g, BoolConst):
        return BoolConst(not g.value)
    if isinstance(g, Cmp):
        return Cmp(NEGATED_CMP[g.op], g.left, g.right)
    if isinstance(g, Not):
        return g.arg
    return Not(g)


class Implication(NamedTuple):
    holds: bool
    witness: State | None

    def __bool__(self):
        return self.holds


def guard_implies(g1: Guard, g2: Guard, domain) -> Implication:
    domain = list(domain)
    if not domain:
        raise ValueError("domain must be nonempty")
    for s in domain:
        if eval_guard(g1, s) and not eval_guard(g2, s):
            return Implication(False, s)
    return Implication(True, None)


# ---------------------------------------------------------------- distributions


class Dist:
    __slots__ = ()


@dataclass(frozen=True)
class DiscreteDist(Dist):
    items: tuple  # ((weight: Fraction, value: ArithExpr), ...)

    def __post_init__(self):
        if not self.items:
            raise ValueError("empty distribution")
        for w, _ in self.items:
            if w <= 0:
                raise ValueError(f"distribution weight {w} is not positive")
        if sum(w for w, _ in self.items) != 1:
            raise ValueError("distribution weights do not sum to 1")


@dataclass(frozen=True)
class UniformDist(Dist):
    """Continuous uniform on [lo, hi]; executable only by the oracle."""

    lo: Fraction
    hi: Fraction


# ---------------------------------------------------------------- programs


class Program:
    __slots__ = ()


@dataclass(frozen=True)
class Skip(Program):
    pass


@dataclass(frozen=True)
class Assign(Program):
    var: str
    expr: ArithExpr


@dataclass(frozen=True)
class RandomAssign(Program):
    var: str
    dist: Dist


@dataclass(frozen=True)
class Seq(Program):
    first: Program
    second: Program


@dataclass(frozen=True)
class ProbChoice(Program):
    left: Program
    prob: ArithExpr
    right: Program


@dataclass(frozen=True)
class UniformChoice(Program):
    branches: tuple

    def __post_init__(self):
        if len(self.branches) < 2:
            raise ValueError("uniform choice needs at least two branches")

    def desugar(self) -> ProbChoice:
        """Nested binary choices with probabilities 1/k, 1/(k-1), ..."""
        bs = list(self.branches)
        acc = bs[-1]
        for i in range(len(bs) - 2, -1, -1):
            acc = ProbChoice(bs[i], Num(Fraction(1, len(bs) - i)), acc)
        return acc


@dataclass(frozen=True)
class If(Program):
    guard: Guard
    then: Program
    orelse: Program


@dataclass(frozen=True)
class While(Program):
    guard: Guard
    body: Program


SKIP = Skip()
DIVERGE = While(TRUE, SKIP)


def seq(*ps: Program) -> Program:
    ps = [p for p in ps if p is not None]
    if not ps:
        return SKIP
    acc = ps[-1]
    for p in reversed(ps[:-1]):
        acc = Seq(p, acc)
    return acc


def flatten_seq(p: Program) -> list[Program]:
    if isinstance(p, Seq):
        return flatten_seq(p.first) + flatten_seq(p.second)
    return [p]


def eval_prob(p: ArithExpr, state: State) -> Fraction:
    v = eval_arith(p, state)
    if not 0 <= v <= 1:
        raise EvalError(f"choice probability {v} outside [0, 1]", state)
    return v


def is_loop_free(p: Program) -> bool:
    if isinstance(p, While):
        return False
    if isinstance(p, Seq):
        return is_loop_free(p.first) and is_loop_free(p.second)
    if isinstance(p, ProbChoice):
        return is_loop_free(p.left) and is_loop_free(p.right)
    if isinstance(p, If):
        return is_loop_free(p.then) and is_loop_free(p.orelse)
    if isinstance(p, UniformChoice):
        return all(is_loop_free(b) for b in p.branches)
    return True


def is_discrete(p: Program) -> bool:
    if isinstance(p, RandomAssign):
        return isinstance(p.dist, DiscreteDist)
    if isinstance(p, Seq):
        return is_discrete(p.first) and is_discrete(p.second)
    if isinstance(p, ProbChoice):
        return is_discrete(p.left) and is_discrete(p.right)
    if isinstance(p, If):
        return is_discrete(p.then) and is_discrete(p.orelse)
    if isinstance(p, UniformChoice):
        return all(is_discrete(b) for b in p.branches)
    if isinstance(p, While):
        return is_discrete(p.body)
    return True


def split_loop(p: Program) -> tuple[Program | None, While]:
    """Split `prefix; while (...) {...}` into its prefix and final loop."""
    parts = flatten_seq(p)
    last = parts[-1]
    if not isinstance(last, While):
        raise ValueError("program does not end in a while loop")
    prefix = seq(*parts[:-1]) if len(parts) > 1 else None
    return prefix, last


def join_loop(prefix: Program | None, loop: While) -> Program:
    return loop if prefix is None else seq(*flatten_seq(prefix), loop)
