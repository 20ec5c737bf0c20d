"""Nonnegative extended-rational expectations."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .errors import EvalError, NegativeExpectation
from .syntax import (
    ArithExpr,
    Guard,
    Num,
    State,
    Var,
    eval_arith,
    eval_guard,
    subst_arith,
    subst_guard,
    to_fraction,
)

# ---------------------------------------------------------------- ExtRat


class Infinity:
    """The single non-finite value. 0 * inf == 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "inf"

    __str__ = __repr__

    def __hash__(self):
        return hash("guardstrength.inf")

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __mul__(self, other):
        if other == 0:
            return Fraction(0)
        return self

    __rmul__ = __mul__

    def __reduce__(self):
        return (Infinity, ())


INF = Infinity()


def ext(value):
    """Coerce to ExtRat."""
    if value is INF:
        return INF
    if isinstance(value, str) and value.strip() in ("inf", "oo", "∞"):
        return INF
    q = to_fraction(value)
    if q < 0:
        raise NegativeExpectation(f"negative value {q}")
    return q


def ext_sub(a, b):
    """Monus a ⊖ b on ExtRat."""
    if a is INF:
        if b is INF:
            raise EvalError("inf monus inf is undefined")
        return INF
    if b is INF:
        return Fraction(0)
    return a - b if a > b else Fraction(0)


def ext_pow(a, k: int):
    if a is INF:
        return Fraction(1) if k == 0 else INF
    return a**k


def format_ext(v) -> str:
    return "inf" if v is INF else str(v)


def parse_ext(s):
    return INF if s == "inf" else Fraction(s)


# ---------------------------------------------------------------- syntax


class Expectation:
    __slots__ = ()

    def __call__(self, state: State):
        return eval_expectation(self, state)

    def __add__(self, other):
        return add(self, lift(other))

    def __radd__(self, other):
        return add(lift(other), self)

    def __mul__(self, other):
        return Mul(self, lift(other))

    def __rmul__(self, other):
        return Mul(lift(other), self)


@dataclass(frozen=True, eq=True)
class Const(Expectation):
    value: object  # Fraction >= 0 or INF

    def __post_init__(self):
        if self.value is not INF and self.value < 0:
            raise ValueError(f"negative constant {self.value}")


@dataclass(frozen=True, eq=True)
class Leaf(Expectation):
    """Arithmetic subterm; must evaluate to a nonnegative rational."""

    expr: ArithExpr


@dataclass(frozen=True, eq=True)
class Iverson(Expectation):
    guard: Guard


@dataclass(frozen=True, eq=True)
class Add(Expectation):
    left: Expectation
    right: Expectation


@dataclass(frozen=True, eq=True)
class Mul(Expectation):
    left: Expectation
    right: Expectation


@dataclass(frozen=True, eq=True)
class Pow(Expectation):
    base: Expectation
    exp: int

    def __post_init__(self):
        if self.exp < 0:
            raise ValueError("expectation powers must be nonnegative")


@dataclass(frozen=True, eq=True)
class Min(Expectation):
    left: Expectation
    right: Expectation


@dataclass(frozen=True, eq=True)
class Max(Expectation):
    left: Expectation
    right: Expectation


@dataclass(frozen=True, eq=True)
class Monus(Expectation):
    left: Expectation
    right: Expectation


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
INFINITY = Const(INF)


def lift(x) -> Expectation:
    if isinstance(x, Expectation):
        return x
    if isinstance(x, ArithExpr):
        if isinstance(x, Num):
            return const(x.value)
        return Leaf(x)
    if isinstance(x, Guard):
        return Iverson(x)
    return const(x)


def const(v) -> Const:
    return Const(ext(v))


def add(f: Expectation, g: Expectation) -> Expectation:
    return Add(f, g)


def scale(q, f: Expectation) -> Expectation:
    q = to_fraction(q)
    if q < 0:
        raise ValueError(f"cannot scale an expectation by negative {q}")
    return Mul(Const(q), f)


def mul_iverson(g: Guard, f: Expectation) -> Expectation:
    return Mul(Iverson(g), f)


def var(name: str) -> Expectation:
    return Leaf(Var(name))


# ---------------------------------------------------------------- evaluation


def eval_expectation(f: Expectation, state: State):
    t = type(f)
    if t is Const:
        return f.value
    if t is Leaf:
        v = eval_arith(f.expr, state)
        if v < 0:
            raise NegativeExpectation(f"expectation term evaluates to {v}", state)
        return v
    if t is Iverson:
        return Fraction(1) if eval_guard(f.guard, state) else Fraction(0)
    if t is Add:
        return eval_expectation(f.left, state) + eval_expectation(f.right, state)
    if t is Mul:
        a = eval_expectation(f.left, state)
        if a == 0:
            return Fraction(0)
        b = eval_expectation(f.right, state)
        if b == 0:
            return Fraction(0)
        return a * b
    if t is Pow:
        return ext_pow(eval_expectation(f.base, state), f.exp)
    if t is Min:
        return min(eval_expectation(f.left, state), eval_expectation(f.right, state))
    if t is Max:
        return max(eval_expectation(f.left, state), eval_expectation(f.right, state))
    if t is Monus:
        a, b = eval_expectation(f.left, state), eval_expectation(f.right, state)
        try:
            return ext_sub(a, b)
        except EvalError as e:
            raise EvalError(str(e), state) from None
    if isinstance(f, Table):
        return f(state)
    raise TypeError(f"not an expectation: {f!r}")


def evaluate(h, state: State):
    """Evaluate any evaluable expectation (tree, table or callable)."""
    if isinstance(h, Expectation):
        return eval_expectation(h, state)
    return h(state)


# ---------------------------------------------------------------- substitution


def subst_many(f: Expectation, mapping: Mapping[str, ArithExpr]) -> Expectation:
    if not mapping:
        return f
    t = type(f)
    if t is Const:
        return f
    if t is Leaf:
        return Leaf(subst_arith(f.expr, mapping))
    if t is Iverson:
        return Iverson(subst_guard(f.guard, mapping))
    if t is Pow:
        return Pow(subst_many(f.base, mapping), f.exp)
    if t in (Add, Mul, Min, Max, Monus):
        return t(subst_many(f.left, mapping), subst_many(f.right, mapping))
    raise TypeError(f"cannot substitute into {f!r}")


def subst(f: Expectation, x: str, e: ArithExpr) -> Expectation:
    return subst_many(f, {x: e})


def expectation_vars(f: Expectation) -> set[str]:
    from .syntax import arith_vars, guard_vars

    t = type(f)
    if t is Leaf:
        return arith_vars(f.expr)
    if t is Iverson:
        return guard_vars(f.guard)
    if t is Pow:
        return expectation_vars(f.base)
    if t in (Add, Mul, Min, Max, Monus):
        return expectation_vars(f.left) | expectation_vars(f.right)
    return set()


# ---------------------------------------------------------------- tables


class Table:
    """Tabulated expectation; states outside the table read as `default`."""

    __slots__ = ("_values", "default", "truncated")

    def __init__(self, values, default=None, truncated=False):
        self._values = {s: ext(v) for s, v in dict(values).items()}
        self.default = default
        self.truncated = truncated

    def __call__(self, state):
        try:
            return self._values[state]
        except KeyError:
            if self.default is None:
                raise EvalError("state outside tabulated expectation", state) from None
            return self.default

    def __contains__(self, state):
        return state in self._values

    def __len__(self):
        return len(self._values)

    def items(self):
        return sorted(self._values.items(), key=lambda kv: kv[0].sort_key())

    def states(self):
        return [s for s, _ in self.items()]

    def __eq__(self, other):
        return isinstance(other, Table) and self._values == other._values

    def to_json(self) -> dict:
        from .numfmt import decimal_str

        return {
            s.to_text(): {"exact": format_ext(v), "decimal": decimal_str(v)}
            for s, v in self.items()
        }

    @classmethod
    def from_json(cls, data: dict, default=None) -> "Table":
        return cls(
            {State.from_text(k): parse_ext(v["exact"]) for k, v in data.items()},
            default=default,
        )


# ---------------------------------------------------------------- ordering


class Order(enum.Enum):
    EQ = "EQ"
    LEQ = "LEQ"
    GEQ = "GEQ"
    INCOMPARABLE = "INCOMPARABLE"


@dataclass(frozen=True)
class Comparison:
    order: Order
    not_leq: State | None  # witness of f(s) > g(s)
    not_geq: State | None  # witness of f(s) < g(s)


def compare_pointwise(f, g, domain) -> Comparison:
    domain = list(domain)
    if not domain:
        raise ValueError("domain must be nonempty")
    not_leq = not_geq = None
    for s in domain:
        try:
            a, b = evaluate(f, s), evaluate(g, s)
        except EvalError as e:
            if e.state is None:
                raise EvalError(str(e), s) from None
            raise
        if a > b and not_leq is None:
            not_leq = s
        if a < b and not_geq is None:
            not_geq = s
        if not_leq is not None and not_geq is not None:
            break
    if not_leq is None and not_geq is None:
        order = Order.EQ
    elif not_leq is None:
        order = Order.LEQ
    elif not_geq is None:
        order = Order.GEQ
    else:
        order = Order.INCOMPARABLE
    return Comparison(order, not_leq, not_geq)


def leq_on(f, g, domain) -> bool:
    return compare_pointwise(f, g, domain).order in (Order.EQ, Order.LEQ)
