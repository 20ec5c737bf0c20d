"""Interval bounds for expectations, used to prove global boundedness."""

from __future__ import annotations

from fractions import Fraction

from . import expectation as E
from .syntax import And, ArithExpr, BinOp, BoolConst, Cmp, Guard, Num, UnOp, Var

INF = float("inf")
TOP = (-INF, INF)
_POW_CAP = 4096


def _mul(a, b):
    if a == 0 or b == 0:
        return Fraction(0)
    return a * b


def _imul(x, y):
    ps = [_mul(a, b) for a in x for b in y]
    return (min(ps), max(ps))


def _ipow_int(x, k: int):
    if k == 0:
        return (Fraction(1), Fraction(1))
    lo, hi = x
    a, b = lo**k, hi**k
    if k % 2 == 0 and lo <= 0 <= hi:
        return (Fraction(0), max(a, b))
    return (min(a, b), max(a, b))


def _point(x):
    return x[0] == x[1] and x[0] not in (INF, -INF)


def arith_interval(e: ArithExpr, env: dict):
    if isinstance(e, Num):
        return (e.value, e.value)
    if isinstance(e, Var):
        return env.get(e.name, TOP)
    if isinstance(e, UnOp):
        lo, hi = arith_interval(e.arg, env)
        if e.op == "neg":
            return (-hi, -lo)
        if e.op == "abs":
            if lo >= 0:
                return (lo, hi)
            if hi <= 0:
                return (-hi, -lo)
            return (Fraction(0), max(-lo, hi))
        if e.op == "floor":
            return (lo - 1 if lo != -INF else lo, hi)
    if isinstance(e, BinOp):
        x = arith_interval(e.left, env)
        y = arith_interval(e.right, env)
        if e.op == "+":
            return (x[0] + y[0], x[1] + y[1])
        if e.op == "-":
            return (x[0] - y[1], x[1] - y[0])
        if e.op == "*":
            return _imul(x, y)
        if e.op == "/":
            if y[0] > 0 or y[1] < 0:
                inv = (Fraction(1) / y[1] if y[1] not in (INF, -INF) else Fraction(0),
                       Fraction(1) / y[0] if y[0] not in (INF, -INF) else Fraction(0))
                inv = (min(inv), max(inv))
                return _imul(x, inv)
            return TOP
        if e.op == "min":
            return (min(x[0], y[0]), min(x[1], y[1]))
        if e.op == "max":
            return (max(x[0], y[0]), max(x[1], y[1]))
        if e.op == "^":
            if _point(y) and y[0].denominator == 1 and y[0] >= 0:
                if any(abs(v) == INF for v in x):
                    return TOP if y[0] else (Fraction(1), Fraction(1))
                return _ipow_int(x, int(y[0]))
            if _point(x) and x[0] > 0:
                c = x[0]
                if c == 1:
                    return (Fraction(1), Fraction(1))

                def cp(t):
                    if t in (INF, -INF) or abs(t) > _POW_CAP:
                        big = (c > 1) == (t > 0)
                        return INF if big else Fraction(0)
                    return c ** int(t) if t == int(t) else (INF if (c > 1) == (t > 0) else Fraction(0))

                a, b = cp(y[0]), cp(y[1])
                return (min(a, b), max(a, b))
            return TOP
    return TOP


def refine(g: Guard, env: dict):
    """Narrow variable intervals using top-level conjuncts `var op const`. None if infeasible."""
    env = dict(env)
    stack = [g]
    while stack:
        h = stack.pop()
        if isinstance(h, And):
            stack += [h.left, h.right]
            continue
        if isinstance(h, BoolConst):
            if not h.value:
                return None
            continue
        if not isinstance(h, Cmp):
            continue
        op, left, right = h.op, h.left, h.right
        if isinstance(right, Var) and isinstance(left, Num):
            left, right = right, left
            op = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}[op]
        if not (isinstance(left, Var) and isinstance(right, Num)):
            continue
        c = right.value
        lo, hi = env.get(left.name, TOP)
        if op in ("<", "<="):
            hi = min(hi, c)
        elif op in (">", ">="):
            lo = max(lo, c)
        elif op == "=":
            lo, hi = max(lo, c), min(hi, c)
        if lo > hi:
            return None
        env[left.name] = (lo, hi)
    return env


def expectation_interval(f, env: dict | None = None):
    env = env or {}
    if isinstance(f, E.Const):
        return (INF, INF) if f.value is E.INF else (f.value, f.value)
    if isinstance(f, E.Leaf):
        lo, hi = arith_interval(f.expr, env)
        return (max(lo, Fraction(0)), max(hi, Fraction(0)))
    if isinstance(f, E.Iverson):
        return (Fraction(0), Fraction(0)) if refine(f.guard, env) is None else (Fraction(0), Fraction(1))
    if isinstance(f, E.Add):
        x, y = expectation_interval(f.left, env), expectation_interval(f.right, env)
        return (x[0] + y[0], x[1] + y[1])
    if isinstance(f, E.Mul):
        for a, b in ((f.left, f.right), (f.right, f.left)):
            if isinstance(a, E.Iverson):
                sub = refine(a.guard, env)
                if sub is None:
                    return (Fraction(0), Fraction(0))
                y = expectation_interval(b, sub)
                return (Fraction(0), y[1])
        return _imul(expectation_interval(f.left, env), expectation_interval(f.right, env))
    if isinstance(f, E.Pow):
        return _ipow_int(expectation_interval(f.base, env), f.exp)
    if isinstance(f, E.Min):
        x, y = expectation_interval(f.left, env), expectation_interval(f.right, env)
        return (min(x[0], y[0]), min(x[1], y[1]))
    if isinstance(f, E.Max):
        x, y = expectation_interval(f.left, env), expectation_interval(f.right, env)
        return (max(x[0], y[0]), max(x[1], y[1]))
    if isinstance(f, E.Monus):
        x, y = expectation_interval(f.left, env), expectation_interval(f.right, env)
        lo = x[0] - y[1] if y[1] != INF else Fraction(0)
        hi = x[1] - y[0] if x[1] != INF else INF
        return (max(lo, Fraction(0)), max(hi, Fraction(0)))
    return (Fraction(0), INF)


def global_upper_bound(f):
    """A finite upper bound valid on every state, or None."""
    if isinstance(f, E.Table):
        vals = [v for _, v in f.items()]
        if any(v is E.INF for v in vals):
            return None
        bound = max(vals, default=Fraction(0))
        if f.default is not None:
            bound = max(bound, f.default)
        return bound
    if not isinstance(f, E.Expectation):
        return None
    hi = expectation_interval(f)[1]
    return None if hi == INF else hi
