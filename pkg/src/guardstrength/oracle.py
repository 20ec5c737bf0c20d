"""Seeded Monte Carlo execution of programs, as an independent cross-check.

Randomness comes from numpy's Philox4x64 counter-based generator. Trial ``t``
under seed ``s`` uses the key ``s * 2**64 + t``, so every trial owns an
independent stream and results do not depend on how trials are scheduled.
A draw is a double ``u`` in [0, 1), which is a dyadic rational; probabilistic
branches compare ``Fraction(u) < p`` exactly. Continuous uniforms are computed
in double precision and then read back as the exact dyadic ``Fraction``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from . import expectation as E
from .errors import DivisionByZero, EvalError, InfiniteReward, UnboundVariable
from .syntax import (
    And,
    Assign,
    BinOp,
    BoolConst,
    Cmp,
    If,
    Not,
    Num,
    Or,
    ProbChoice,
    RandomAssign,
    Seq,
    Skip,
    State,
    UniformChoice,
    UniformDist,
    UnOp,
    Var,
    While,
    _pow,
    eval_arith,
    to_fraction,
)

Z99 = 2.5758293035489  # two-sided 99% normal quantile
TERMINATED = "TERMINATED"
CUTOFF = "CUTOFF"


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=(seed << 64) + trial))


@dataclass(frozen=True)
class SimOutcome:
    status: str
    final: State | None
    steps: int  # loop iterations
    trace_len: int  # atomic statements executed


class _Cutoff(Exception):
    pass


@functools.lru_cache(maxsize=4096)
def _threshold(p: Fraction) -> float:
    """Smallest double t >= p, so that for a double u: u < p exactly iff u < t."""
    t = float(p)
    if Fraction(t) < p:
        t = math.nextafter(t, math.inf)
    return t


class _Env(dict):
    """Mutable variable store used while a single run executes."""

    def __missing__(self, name):
        raise UnboundVariable(f"unbound variable {name!r}", State(self))


_ARITH_OPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "min": min,
    "max": max,
}
_CMP_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def _arith(e):
    """Compile an arithmetic expression to a function of the environment."""
    t = type(e)
    if t is Num:
        v = e.value
        return lambda s: v
    if t is Var:
        name = e.name
        return lambda s: s[name]
    if t is BinOp:
        f, g = _arith(e.left), _arith(e.right)
        if e.op in _ARITH_OPS:
            op = _ARITH_OPS[e.op]
            return lambda s: op(f(s), g(s))
        if e.op == "/":
            def div(s):
                a, b = f(s), g(s)
                if b == 0:
                    raise DivisionByZero("division by zero", State(s))
                return a / b
            return div
        if e.op == "^":
            return lambda s: _pow(f(s), g(s), State(s))
        raise EvalError(f"unknown operator {e.op}")
    if t is UnOp:
        f = _arith(e.arg)
        if e.op == "neg":
            return lambda s: -f(s)
        if e.op == "abs":
            return lambda s: abs(f(s))
        if e.op == "floor":
            return lambda s: Fraction(math.floor(f(s)))
        raise EvalError(f"unknown operator {e.op}")
    raise TypeError(f"not an arithmetic expression: {e!r}")


def _guard(g):
    t = type(g)
    if t is Cmp:
        op, f, h = _CMP_OPS[g.op], _arith(g.left), _arith(g.right)
        return lambda s: op(f(s), h(s))
    if t is And:
        f, h = _guard(g.left), _guard(g.right)
        return lambda s: f(s) and h(s)
    if t is Or:
        f, h = _guard(g.left), _guard(g.right)
        return lambda s: f(s) or h(s)
    if t is Not:
        f = _guard(g.arg)
        return lambda s: not f(s)
    if t is BoolConst:
        v = g.value
        return lambda s: v
    raise TypeError(f"not a guard: {g!r}")


class _Machine:
    def __init__(self, gen, max_steps):
        self.gen = gen
        self.max_steps = max_steps
        self.steps = 0
        self.trace = 0

    def draw(self) -> float:
        return float(self.gen.random())


def _prob(p):
    f = _arith(p)

    def prob(s):
        v = f(s)
        if not 0 <= v <= 1:
            raise EvalError(f"choice probability {v} outside [0, 1]", State(s))
        return v
    return prob


@functools.lru_cache(maxsize=64)
def _compile(c):
    """Compile a program to ``run(machine, env)``, which updates env in place."""
    if isinstance(c, Skip):
        def run(m, s):
            m.trace += 1
    elif isinstance(c, Assign):
        var, f = c.var, _arith(c.expr)

        def run(m, s):
            m.trace += 1
            s[var] = f(s)
    elif isinstance(c, RandomAssign):
        var, d = c.var, c.dist
        if isinstance(d, UniformDist):
            lo, hi = to_fraction(d.lo), to_fraction(d.hi)
            flo, fhi = float(lo), float(hi)
            width = fhi - flo
            exact = Fraction(flo) == lo and Fraction(fhi) == hi

            def run(m, s):
                m.trace += 1
                x = flo + width * m.draw()
                if exact:
                    s[var] = Fraction(min(max(x, flo), fhi))
                else:
                    s[var] = min(max(Fraction(x), lo), hi)
        else:
            acc, cuts = Fraction(0), []
            for w, e in d.items:
                acc += w
                cuts.append((_threshold(acc), _arith(e)))
            last = _arith(d.items[-1][1])

            def run(m, s):
                m.trace += 1
                u = m.draw()
                for t, f in cuts:
                    if u < t:
                        s[var] = f(s)
                        return
                s[var] = last(s)
    elif isinstance(c, Seq):
        a, b = _compile(c.first), _compile(c.second)

        def run(m, s):
            a(m, s)
            b(m, s)
    elif isinstance(c, ProbChoice):
        a, b = _compile(c.left), _compile(c.right)
        if isinstance(c.prob, Num):
            t = _threshold(_prob(c.prob)({}))

            def run(m, s):
                (a if m.draw() < t else b)(m, s)
        else:
            p = _prob(c.prob)

            def run(m, s):
                # float < Fraction compares exactly
                (a if m.draw() < p(s) else b)(m, s)
    elif isinstance(c, UniformChoice):
        bs = [_compile(x) for x in c.branches]
        k = len(bs)

        def run(m, s):
            bs[min(int(Fraction(m.draw()) * k), k - 1)](m, s)
    elif isinstance(c, If):
        g, a, b = _guard(c.guard), _compile(c.then), _compile(c.orelse)

        def run(m, s):
            (a if g(s) else b)(m, s)
    elif isinstance(c, While):
        g, body = _guard(c.guard), _compile(c.body)

        def run(m, s):
            while g(s):
                if m.steps >= m.max_steps:
                    raise _Cutoff
                m.steps += 1
                body(m, s)
    else:
        raise TypeError(f"not a program: {c!r}")
    return run


def simulate(c, state: State, max_steps: int, seed: int, trial: int = 0) -> SimOutcome:
    m = _Machine(trial_generator(seed, trial), max_steps)
    env = _Env(state.items())
    try:
        _compile(c)(m, env)
    except _Cutoff:
        return SimOutcome(CUTOFF, None, m.steps, m.trace)
    return SimOutcome(TERMINATED, State(env), m.steps, m.trace)


@dataclass(frozen=True)
class Estimate:
    mean: float
    trials: int
    cutoff_fraction: float
    half_width: float  # 99% normal-approximation half-width
    seed: int

    def to_json(self) -> dict:
        return asdict(self)

    def consistent_with(self, value, k: float = 4.0) -> bool:
        return abs(self.mean - float(value)) <= k * self.half_width

    def lower_consistent(self, bound, k: float = 4.0) -> bool:
        """True unless the estimate sits clearly below ``bound``."""
        return self.mean >= float(bound) - k * self.half_width


def _summarise(values: np.ndarray, cutoffs: int, seed: int) -> Estimate:
    n = len(values)
    mean = math.fsum(values.tolist()) / n
    if n > 1:
        var = math.fsum(((values - mean) ** 2).tolist()) / (n - 1)
    else:
        var = 0.0
    return Estimate(mean, n, cutoffs / n, Z99 * math.sqrt(var / n), seed)


def signed_value(f, state: State):
    """Evaluate sums and products of brackets and arithmetic terms without the sign check."""
    if isinstance(f, E.Leaf):
        return eval_arith(f.expr, state)
    if isinstance(f, E.Add):
        return signed_value(f.left, state) + signed_value(f.right, state)
    if isinstance(f, E.Mul):
        a = signed_value(f.left, state)
        return a if a == 0 else a * signed_value(f.right, state)
    return E.evaluate(f, state)


def estimate_wp(c, f, state: State, trials: int, max_steps: int, seed: int,
                signed: bool = False) -> Estimate:
    """Mean of f over final states; cutoff runs contribute 0.

    ``signed`` lets arithmetic terms go negative (a post such as ``[n<=0]*b``
    whose sign depends on the run); the lower-bias argument then no longer holds.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    vals = np.zeros(trials)
    cutoffs = 0
    for t in range(trials):
        out = simulate(c, state, max_steps, seed, t)
        if out.status == CUTOFF:
            cutoffs += 1
            continue
        v = signed_value(f, out.final) if signed else E.evaluate(f, out.final)
        if v is E.INF:
            raise InfiniteReward(f"postexpectation is infinite at {out.final.to_text()}")
        vals[t] = float(v)
    return _summarise(vals, cutoffs, seed)


def simulate_chain(chain, post, state: State, trials: int, max_steps: int, seed: int) -> Estimate:
    """Vectorised walk on an explored chain.

    All trials advance together; step k of every trial reads row k of a
    Philox stream keyed by ``seed``. Branch thresholds are doubles here, so
    this is a statistical check only.
    """
    n = chain.n_states
    ptr = np.zeros(n + 1, dtype=np.int64)
    dst, cum = [], []
    for i in range(n):
        acc = Fraction(0)
        for j, p in sorted(chain.rows.get(i, {}).items()):
            acc += p
            dst.append(j)
            cum.append(float(acc))
        ptr[i + 1] = len(dst)
    dst = np.asarray(dst, dtype=np.int64)
    cum = np.asarray(cum)
    width = int(np.max(ptr[1:] - ptr[:-1])) if n else 0
    reward = np.zeros(n + 1)
    for a in chain.absorbing:
        v = E.evaluate(post, chain.states[a])
        if v is E.INF:
            raise InfiniteReward("postexpectation is infinite on an absorbing state")
        reward[a] = float(v)
    transient = np.zeros(n + 1, dtype=bool)
    transient[list(chain.rows)] = True
    sink = n  # divergence, truncation or rounding overflow
    gen = np.random.Generator(np.random.Philox(key=seed << 64))
    pos = np.full(trials, chain.index[state], dtype=np.int64)
    for _ in range(max_steps):
        active = np.nonzero(transient[pos])[0]
        if active.size == 0:
            break
        u = gen.random(trials)[active]
        cur = pos[active]
        lo, hi = ptr[cur], ptr[cur + 1]
        chosen = np.full(active.size, -1, dtype=np.int64)
        for k in range(width):
            idx = lo + k
            ok = (idx < hi) & (chosen < 0)
            hit = ok & (u < cum[np.minimum(idx, len(cum) - 1)])
            chosen[hit] = dst[idx[hit]]
        chosen[chosen < 0] = sink
        pos[active] = chosen
    still = transient[pos]
    cutoffs = int(np.count_nonzero(still) + np.count_nonzero(pos == sink))
    vals = np.where(still, 0.0, reward[pos])
    return _summarise(vals, cutoffs, seed)
