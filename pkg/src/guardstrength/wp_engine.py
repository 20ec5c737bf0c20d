"""Weakest preexpectations: symbolic for loop-free code, numeric via one-step distributions."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import NamedTuple

from . import expectation as E
from .errors import ContinuousNotSupported, WhileNotSupported
from .syntax import (
    Assign,
    DiscreteDist,
    Guard,
    If,
    Num,
    ProbChoice,
    Program,
    RandomAssign,
    Seq,
    Skip,
    State,
    UniformChoice,
    UniformDist,
    While,
    BinOp,
    eval_arith,
    eval_guard,
    eval_prob,
    negate,
)

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass(frozen=True)
class Budget:
    max_states: int = 10**6
    max_depth: int = 8


DEFAULT_BUDGET = Budget()


# ---------------------------------------------------------------- symbolic


def _prob_weight(p) -> E.Expectation:
    if isinstance(p, Num):
        return E.Const(p.value)
    return E.Leaf(p)


def _complement(p) -> E.Expectation:
    if isinstance(p, Num):
        return E.Const(1 - p.value)
    return E.Leaf(BinOp("-", Num(ONE), p))


def wp_symbolic(c: Program, f: E.Expectation) -> E.Expectation:
    if isinstance(c, Skip):
        return f
    if isinstance(c, Assign):
        return E.subst(f, c.var, c.expr)
    if isinstance(c, RandomAssign):
        if isinstance(c.dist, UniformDist):
            raise ContinuousNotSupported("continuous sampling has no exact wp here")
        terms = [E.Mul(E.Const(w), E.subst(f, c.var, e)) for w, e in c.dist.items]
        acc = terms[0]
        for t in terms[1:]:
            acc = E.Add(acc, t)
        return acc
    if isinstance(c, Seq):
        return wp_symbolic(c.first, wp_symbolic(c.second, f))
    if isinstance(c, ProbChoice):
        return E.Add(
            E.Mul(_prob_weight(c.prob), wp_symbolic(c.left, f)),
            E.Mul(_complement(c.prob), wp_symbolic(c.right, f)),
        )
    if isinstance(c, UniformChoice):
        return wp_symbolic(c.desugar(), f)
    if isinstance(c, If):
        return E.Add(
            E.Mul(E.Iverson(c.guard), wp_symbolic(c.then, f)),
            E.Mul(E.Iverson(negate(c.guard)), wp_symbolic(c.orelse, f)),
        )
    if isinstance(c, While):
        raise WhileNotSupported("wp_symbolic handles loop-free programs only")
    raise TypeError(c)


# ---------------------------------------------------------------- distributions


@dataclass(frozen=True)
class FiniteSubDistribution:
    weights: MappingProxyType
    truncated_mass: Fraction = ZERO

    @property
    def total_mass(self) -> Fraction:
        return sum(self.weights.values(), ZERO)

    @property
    def divergence_mass(self) -> Fraction:
        return 1 - self.total_mass - self.truncated_mass

    @property
    def truncated(self) -> bool:
        return self.truncated_mass > 0

    def items(self):
        return sorted(self.weights.items(), key=lambda kv: kv[0].sort_key())

    def __len__(self):
        return len(self.weights)

    def expect(self, h):
        """Sum of h over the distribution; a lower bound when mass is missing."""
        acc = ZERO
        for s, p in self.weights.items():
            acc = acc + p * E.evaluate(h, s)
        return acc


def dirac(state: State) -> FiniteSubDistribution:
    return FiniteSubDistribution(MappingProxyType({state: ONE}))


def _acc(d: dict, s: State, p: Fraction):
    d[s] = d.get(s, ZERO) + p


def _run(c: Program, s: State, budget: Budget, depth: int):
    if isinstance(c, Skip):
        return {s: ONE}, ZERO
    if isinstance(c, Assign):
        return {s.set(c.var, eval_arith(c.expr, s)): ONE}, ZERO
    if isinstance(c, RandomAssign):
        if not isinstance(c.dist, DiscreteDist):
            raise ContinuousNotSupported("continuous sampling is oracle-only")
        out = {}
        for w, e in c.dist.items:
            _acc(out, s.set(c.var, eval_arith(e, s)), w)
        return out, ZERO
    if isinstance(c, Seq):
        d1, t = _run(c.first, s, budget, depth)
        out = {}
        for s1, p1 in d1.items():
            d2, t2 = _run(c.second, s1, budget, depth)
            t += p1 * t2
            for s2, p2 in d2.items():
                _acc(out, s2, p1 * p2)
        return out, t
    if isinstance(c, ProbChoice):
        p = eval_prob(c.prob, s)
        return _mix([(p, c.left), (1 - p, c.right)], s, budget, depth)
    if isinstance(c, UniformChoice):
        k = len(c.branches)
        return _mix([(Fraction(1, k), b) for b in c.branches], s, budget, depth)
    if isinstance(c, If):
        return _run(c.then if eval_guard(c.guard, s) else c.orelse, s, budget, depth)
    if isinstance(c, While):
        if depth >= budget.max_depth:
            return {}, ONE
        from .chain import loop_exit_distribution

        d = loop_exit_distribution(c, s, budget, depth + 1)
        return dict(d.weights), d.truncated_mass
    raise TypeError(c)


def _mix(parts, s, budget, depth):
    out, t = {}, ZERO
    for p, branch in parts:
        if p == 0:
            continue
        d, tb = _run(branch, s, budget, depth)
        t += p * tb
        for s1, q in d.items():
            _acc(out, s1, p * q)
    return out, t


def step_distribution(c: Program, state: State, budget: Budget = DEFAULT_BUDGET, depth: int = 0):
    out, t = _run(c, state, budget, depth)
    return FiniteSubDistribution(MappingProxyType({k: v for k, v in out.items() if v}), t)


# ---------------------------------------------------------------- characteristic function


@dataclass(frozen=True)
class CharFn:
    guard: Guard
    body: Program
    post: object  # evaluable expectation

    @classmethod
    def of(cls, loop: While, post) -> "CharFn":
        return cls(loop.guard, loop.body, post)


class CharFnValue(NamedTuple):
    value: object
    truncated: bool


def char_fn_apply(phi: CharFn, h, state: State, budget: Budget = DEFAULT_BUDGET) -> CharFnValue:
    if not eval_guard(phi.guard, state):
        return CharFnValue(E.evaluate(phi.post, state), False)
    d = step_distribution(phi.body, state, budget)
    return CharFnValue(d.expect(h), d.truncated)


def kleene_iterates(phi: CharFn, domain, budget: Budget = DEFAULT_BUDGET):
    """Yield Φ^0(0), Φ^1(0), ... tabulated on the domain.

    Successors outside the domain read as 0, which keeps each table a lower bound."""
    domain = sorted(set(domain), key=State.sort_key)
    index = {s: i for i, s in enumerate(domain)}
    rows, base, truncated = [], [], False
    for s in domain:
        if not eval_guard(phi.guard, s):
            rows.append(())
            base.append(E.evaluate(phi.post, s))
            continue
        d = step_distribution(phi.body, s, budget)
        row = []
        for t, p in d.items():
            j = index.get(t)
            if j is None:
                truncated = True
            else:
                row.append((j, p))
        truncated = truncated or d.truncated
        rows.append(tuple(row))
        base.append(ZERO)
    v = [ZERO] * len(domain)
    while True:
        yield E.Table(dict(zip(domain, v)), default=ZERO, truncated=truncated)
        v = [base[i] + sum((p * v[j] for j, p in rows[i]), ZERO) for i in range(len(domain))]


def kleene_iterate(phi: CharFn, domain, n_iters: int, budget: Budget = DEFAULT_BUDGET) -> E.Table:
    it = kleene_iterates(phi, domain, budget)
    table = next(it)
    for _ in range(n_iters):
        table = next(it)
    return table
