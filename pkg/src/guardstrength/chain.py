"""Absorbing Markov chains compiled from loops, solved exactly or iteratively."""

from __future__ import annotations

import functools
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType

from . import expectation as E
from .errors import InfiniteReward
from .linsolve import solve_sparse
from .numfmt import decimal_str
from .syntax import (
    And,
    Assign,
    Cmp,
    Guard,
    If,
    Not,
    Num,
    Program,
    Skip,
    State,
    Var,
    While,
    eval_guard,
    seq,
)
from .wp_engine import DEFAULT_BUDGET, Budget, FiniteSubDistribution, step_distribution

ZERO = Fraction(0)
ONE = Fraction(1)
TRUNCATED = "TRUNCATED"


@dataclass
class MarkovChain:
    loop: While
    states: list  # explored states in discovery order
    index: dict
    transient: list  # indices where the guard holds
    absorbing: list
    rows: dict  # transient index -> {successor index: probability}
    divergence: dict  # transient index -> body divergence mass
    truncation: dict  # transient index -> mass lost to the budget
    init: list
    truncated: bool = False
    reward: dict | None = None  # absorbing index -> ExtRat

    @property
    def n_states(self) -> int:
        return len(self.states)

    def sink_mass(self, i: int) -> Fraction:
        return self.divergence.get(i, ZERO) + self.truncation.get(i, ZERO)

    def is_transient(self, i: int) -> bool:
        return i in self.rows

    def with_reward(self, post) -> "MarkovChain":
        r = {a: E.evaluate(post, self.states[a]) for a in self.absorbing}
        return MarkovChain(
            self.loop, self.states, self.index, self.transient, self.absorbing, self.rows,
            self.divergence, self.truncation, self.init, self.truncated, r,
        )


def explore(loop: While, init, budget: Budget = DEFAULT_BUDGET, post=None, depth: int = 0) -> MarkovChain:
    states, index = [], {}
    queue = deque()

    def add(s):
        index[s] = len(states)
        states.append(s)
        queue.append(index[s])

    init_idx = []
    for s in sorted(set(init), key=State.sort_key):
        if s not in index:
            add(s)
        init_idx.append(index[s])
    transient, absorbing = [], []
    rows, divergence, truncation = {}, {}, {}
    truncated = False
    while queue:
        i = queue.popleft()
        s = states[i]
        if not eval_guard(loop.guard, s):
            absorbing.append(i)
            continue
        transient.append(i)
        d = step_distribution(loop.body, s, budget, depth)
        row, lost = {}, d.truncated_mass
        for t, p in d.items():
            j = index.get(t)
            if j is None:
                if len(states) >= budget.max_states:
                    lost += p
                    continue
                add(t)
                j = index[t]
            row[j] = row.get(j, ZERO) + p
        rows[i] = row
        dv = d.divergence_mass
        if dv:
            divergence[i] = dv
        if lost:
            truncation[i] = lost
            truncated = True
    chain = MarkovChain(loop, states, index, transient, absorbing, rows, divergence, truncation,
                        init_idx, truncated)
    return chain.with_reward(post) if post is not None else chain


# ---------------------------------------------------------------- graph helpers


def _reverse_edges(chain: MarkovChain) -> dict:
    rev = {}
    for i, row in chain.rows.items():
        for j in row:
            rev.setdefault(j, []).append(i)
    return rev


def _backward_closure(chain: MarkovChain, targets) -> set:
    rev = _reverse_edges(chain)
    seen = set(targets)
    queue = deque(targets)
    while queue:
        j = queue.popleft()
        for i in rev.get(j, ()):
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def forward_reachable(chain: MarkovChain, sources) -> set:
    seen = set(sources)
    queue = deque(sources)
    while queue:
        i = queue.popleft()
        for j in chain.rows.get(i, ()):
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return seen


# ---------------------------------------------------------------- solving


@dataclass
class SolveResult:
    values: dict  # State -> ExtRat, for every explored state
    init: list
    method: str  # LINEAR_EXACT | VALUE_ITER
    truncated: bool
    iterations: int | None = None
    residual: Fraction | None = None
    n_states: int = 0
    status: str = "OK"

    def value(self, state: State):
        return self.values[state]

    def init_values(self) -> list:
        return [(s, self.values[s]) for s in self.init]

    def to_json(self) -> list:
        return [
            {
                "state": s.to_text(),
                "exact": E.format_ext(v),
                "decimal": decimal_str(v),
                "method": self.method,
                "truncated": self.truncated,
            }
            for s, v in self.init_values()
        ]


def _rewards(chain: MarkovChain, post):
    if post is not None:
        return {a: E.evaluate(post, chain.states[a]) for a in chain.absorbing}
    if chain.reward is None:
        raise ValueError("chain has no reward; pass a postexpectation")
    return chain.reward


def solve_exact(chain: MarkovChain, post=None, backend: str = "auto") -> SolveResult:
    r = _rewards(chain, post)
    if any(v is E.INF for v in r.values()):
        raise InfiniteReward("infinite reward on an absorbing state; use value_iterate")
    positive = [a for a, v in r.items() if v > 0]
    live = _backward_closure(chain, positive)
    unknowns = [i for i in chain.transient if i in live]
    pos = {i: k for k, i in enumerate(unknowns)}
    A, b = [], []
    for i in unknowns:
        row = {pos[i]: ONE}
        rhs = ZERO
        for j, p in chain.rows[i].items():
            if j in pos:
                row[pos[j]] = row.get(pos[j], ZERO) - p
            elif j in r:
                rhs += p * r[j]
        A.append(row)
        b.append(rhs)
    x = solve_sparse(A, b, backend)
    values = {}
    for i, s in enumerate(chain.states):
        if i in r:
            values[s] = r[i]
        elif i in pos:
            values[s] = x[pos[i]]
        else:
            values[s] = ZERO
    return SolveResult(values, [chain.states[i] for i in chain.init], "LINEAR_EXACT",
                       chain.truncated, n_states=chain.n_states)


def value_iterate(chain: MarkovChain, max_iters: int, epsilon=Fraction(0), post=None,
                  unbounded_threshold=Fraction(10) ** 30) -> SolveResult:
    r = _rewards(chain, post)
    epsilon = Fraction(epsilon)
    v = {i: ZERO for i in range(chain.n_states)}
    residual, it, status = None, 0, "OK"
    for it in range(1, max_iters + 1):
        nv = {}
        for i in range(chain.n_states):
            if i in r:
                nv[i] = r[i]
            elif i in chain.rows:
                acc = ZERO
                for j, p in chain.rows[i].items():
                    acc = acc + p * v[j]
                nv[i] = acc
            else:
                nv[i] = ZERO
        diffs = [nv[i] - v[i] for i in nv if nv[i] is not E.INF and v[i] is not E.INF]
        grew_inf = any(nv[i] is E.INF and v[i] is not E.INF for i in nv)
        residual = max(diffs, default=ZERO)
        v = nv
        if any(x is E.INF or x > unbounded_threshold for x in v.values()):
            status = "LOWER_BOUND_UNBOUNDED"
        if not grew_inf and residual < epsilon:
            break
    else:
        it = max_iters
    if max_iters == 0:
        it = 0
    values = {s: v[i] for i, s in enumerate(chain.states)}
    return SolveResult(values, [chain.states[i] for i in chain.init], "VALUE_ITER", chain.truncated,
                       iterations=it, residual=residual, n_states=chain.n_states, status=status)


def expected_looping_time(chain: MarkovChain) -> dict:
    """Exact expected number of iterations per state; inf where absorption is not certain."""
    absorbing = set(chain.absorbing)
    live = _backward_closure(chain, list(absorbing))
    doomed = {i for i in chain.transient if i not in live or chain.sink_mass(i) > 0}
    bad = _backward_closure(chain, list(doomed)) if doomed else set()
    unknowns = [i for i in chain.transient if i not in bad]
    pos = {i: k for k, i in enumerate(unknowns)}
    A, b = [], []
    for i in unknowns:
        row = {pos[i]: ONE}
        for j, p in chain.rows[i].items():
            if j in pos:
                row[pos[j]] = row.get(pos[j], ZERO) - p
        A.append(row)
        b.append(ONE)
    x = solve_sparse(A, b)
    out = {}
    for i, s in enumerate(chain.states):
        if i in absorbing:
            out[s] = ZERO
        elif i in pos:
            out[s] = x[pos[i]]
        else:
            out[s] = E.INF
    return out


# ---------------------------------------------------------------- looping time


@dataclass
class LoopingTimeProfile:
    N: int
    tails: dict  # State -> [P(T > 0), ..., P(T > N)]

    def tail(self, state: State, k: int | None = None) -> Fraction:
        return self.tails[state][self.N if k is None else k]


def looping_time_profile(chain: MarkovChain, N: int) -> LoopingTimeProfile:
    """Exact P(T > k); divergence and truncation mass count as still looping."""
    cur = {i: (ONE if i in chain.rows else ZERO) for i in range(chain.n_states)}
    hist = {i: [cur[i]] for i in cur}
    for _ in range(N):
        nxt = {}
        for i in cur:
            if i in chain.rows:
                acc = chain.sink_mass(i)
                for j, p in chain.rows[i].items():
                    acc += p * cur[j]
                nxt[i] = acc
            else:
                nxt[i] = ZERO
        cur = nxt
        for i in cur:
            hist[i].append(cur[i])
    return LoopingTimeProfile(N, {chain.states[i]: h for i, h in hist.items()})


def tail_probability(loop: While, state: State, N: int, budget: Budget = DEFAULT_BUDGET):
    """P(T > N) from one state by N-step unrolling, plus the reachable body-divergence flag."""
    dist = {state: ONE}
    tail = ONE if eval_guard(loop.guard, state) else ZERO
    diverge_seen = False
    stuck = ZERO
    for _ in range(N):
        nxt = {}
        for s, p in dist.items():
            if not eval_guard(loop.guard, s):
                continue
            d = step_distribution(loop.body, s, budget)
            if d.divergence_mass or d.truncated_mass:
                diverge_seen = True
                stuck += p * (d.divergence_mass + d.truncated_mass)
            for t, q in d.weights.items():
                nxt[t] = nxt.get(t, ZERO) + p * q
        dist = nxt
        tail = stuck + sum((p for s, p in dist.items() if eval_guard(loop.guard, s)), ZERO)
    return tail, diverge_seen


# ---------------------------------------------------------------- nested loops


@functools.lru_cache(maxsize=200_000)
def loop_exit_distribution(loop: While, state: State, budget: Budget = DEFAULT_BUDGET,
                           depth: int = 0) -> FiniteSubDistribution:
    """Exact final-state distribution of a loop from one state."""
    if not eval_guard(loop.guard, state):
        return FiniteSubDistribution(MappingProxyType({state: ONE}))
    chain = explore(loop, [state], budget, depth=depth)
    trunc_src = [i for i in chain.transient if chain.truncation.get(i)]
    live = _backward_closure(chain, list(chain.absorbing) + trunc_src)
    src = chain.index[state]
    if src not in live:
        return FiniteSubDistribution(MappingProxyType({}), ZERO)
    unknowns = [i for i in chain.transient if i in live]
    pos = {i: k for k, i in enumerate(unknowns)}
    # expected visits y solve (I - T)^t y = e_src
    cols = {k: {k: ONE} for k in range(len(unknowns))}
    for i in unknowns:
        for j, p in chain.rows[i].items():
            if j in pos:
                r = cols[pos[j]]
                r[pos[i]] = r.get(pos[i], ZERO) - p
    b = [ZERO] * len(unknowns)
    b[pos[src]] = ONE
    y = solve_sparse([cols[k] for k in range(len(unknowns))], b)
    absorbing = set(chain.absorbing)
    out, trunc = {}, ZERO
    for i in unknowns:
        yi = y[pos[i]]
        if not yi:
            continue
        trunc += yi * chain.truncation.get(i, ZERO)
        for j, p in chain.rows[i].items():
            if j in absorbing:
                s = chain.states[j]
                out[s] = out.get(s, ZERO) + yi * p
    return FiniteSubDistribution(MappingProxyType(out), trunc)


# ---------------------------------------------------------------- wp difference


@dataclass
class DiffRecord:
    state: State
    i: object  # wp[while(G)](f)
    ii: object  # wp[while(G')](f)
    iii: object  # wp[while(G & G')]([!G & G'] f)
    iv: object  # wp[while(G & G')]([G & !G'] f)
    A: object
    B: object
    truncated: bool

    @property
    def lhs(self):
        return self.i + self.iv + self.B

    @property
    def rhs(self):
        return self.ii + self.iii + self.A

    @property
    def difference(self):
        """(i) - (ii) and (iii) + A - (iv) - B, when all terms are finite."""
        terms = (self.i, self.ii, self.iii, self.iv, self.A, self.B)
        if any(t is E.INF for t in terms):
            return None
        return self.i - self.ii, self.iii + self.A - self.iv - self.B

    @property
    def holds(self) -> bool | None:
        if self.truncated:
            return None
        return self.lhs == self.rhs

    def to_json(self) -> dict:
        d = {"state": self.state.to_text()}
        for k in ("i", "ii", "iii", "iv", "A", "B"):
            d[k] = E.format_ext(getattr(self, k))
        d["identity"] = self.holds
        d["truncated"] = self.truncated
        return d


FLAG = "flag__"


def _instrumented(G: Guard, Gp: Guard, body: Program) -> While:
    mark = If(And(G, Not(Gp)), Assign(FLAG, Num(ONE)), Skip())
    return While(G, seq(body, mark))


def diff_decomposition(G: Guard, Gp: Guard, body: Program, f, init, budget: Budget = DEFAULT_BUDGET):
    init = sorted(set(init), key=State.sort_key)
    both = And(G, Gp)

    def solve(loop, post, states):
        ch = explore(loop, states, budget)
        return solve_exact(ch, post), ch.truncated

    r1, t1 = solve(While(G, body), f, init)
    r2, t2 = solve(While(Gp, body), f, init)
    r3, t3 = solve(While(both, body), E.Mul(E.Iverson(And(Not(G), Gp)), f), init)
    r4, t4 = solve(While(both, body), E.Mul(E.Iverson(And(G, Not(Gp))), f), init)
    flagged = E.Mul(E.Iverson(Cmp("=", Var(FLAG), Num(ONE))), f)
    init_a = [s.set(FLAG, 1 if eval_guard(And(G, Not(Gp)), s) else 0) for s in init]
    init_b = [s.set(FLAG, 1 if eval_guard(And(Gp, Not(G)), s) else 0) for s in init]
    ra, ta = solve(_instrumented(G, Gp, body), flagged, init_a)
    rb, tb = solve(_instrumented(Gp, G, body), flagged, init_b)
    trunc = any((t1, t2, t3, t4, ta, tb))
    return [
        DiffRecord(s, r1.value(s), r2.value(s), r3.value(s), r4.value(s), ra.value(sa), rb.value(sb), trunc)
        for s, sa, sb in zip(init, init_a, init_b)
    ]


# ---------------------------------------------------------------- export


def dump_chain(chain: MarkovChain, post=None) -> str:
    """Line-oriented explicit-state export; see docs/chain-format.md."""
    r = _rewards(chain, post) if (post is not None or chain.reward is not None) else {}
    n = chain.n_states
    lines = ["guardstrength-chain 1", f"states {n + 1}"]
    for i, s in enumerate(chain.states):
        kind = "T" if i in chain.rows else "A"
        lines.append(f"{i} {kind} {s.to_text()}")
    lines.append(f"{n} S {TRUNCATED}")
    trans = []
    for i in chain.transient:
        for j, p in sorted(chain.rows[i].items()):
            trans.append(f"{i} {j} {p}")
        sink = chain.sink_mass(i)
        if sink:
            trans.append(f"{i} {n} {sink}")
    lines.append(f"transitions {len(trans)}")
    lines.extend(trans)
    lines.append(f"rewards {len(r) + 1}")
    lines.extend(f"{a} {E.format_ext(v)}" for a, v in sorted(r.items()))
    lines.append(f"{n} 0")
    lines.append("init " + " ".join(str(i) for i in chain.init))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepRow:
    M: object
    result: SolveResult | None
    millis: float
    error: str | None = None


@dataclass
class SweepResult:
    rows: list
    monotone: bool
    violations: list = field(default_factory=list)


def _sweep_one(args):
    loop, spec, f, init, budget = args
    from .strengthen import apply_strengthening, restricted_post

    t0 = time.perf_counter()
    try:
        strengthened = apply_strengthening(loop, spec)
        chain = explore(strengthened, init, budget)
        res = solve_exact(chain, restricted_post(loop.guard, f))
        return res, (time.perf_counter() - t0) * 1000, None
    except Exception as e:  # recorded per M, sweep continues
        return None, (time.perf_counter() - t0) * 1000, f"{type(e).__name__}: {e}"


def sweep(loop: While, family, f, init, budget: Budget = DEFAULT_BUDGET, jobs: int = 1) -> SweepResult:
    init = sorted(set(init), key=State.sort_key)
    params = list(family.values)
    tasks = [(loop, family.spec(loop.guard, M), f, init, budget) for M in params]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_sweep_one, tasks))
    else:
        outs = [_sweep_one(t) for t in tasks]
    rows = [SweepRow(M, res, ms, err) for M, (res, ms, err) in zip(params, outs)]
    violations = []
    prev = None
    for row in rows:
        if row.result is None:
            continue
        if prev is not None:
            for s in init:
                if row.result.value(s) < prev.result.value(s):
                    violations.append((prev.M, row.M, s))
        prev = row
    monotone = not violations if family.nested else None
    return SweepResult(rows, monotone, violations)
