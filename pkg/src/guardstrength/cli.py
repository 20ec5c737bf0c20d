"""Command-line interface: parse, solve, sweep, certify, diff and simulate.

Exit codes: 0 success, 1 error or failed check, 2 result truncated by a budget.
"""

from __future__ import annotations

import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import expectation as E
from .chain import diff_decomposition, dump_chain, explore, solve_exact, sweep, value_iterate
from .errors import GuardStrengthError
from .numfmt import decimal_str
from .oracle import estimate_wp, simulate_chain
from .parser import parse_expectation, parse_guard, parse_program, pretty_print, print_guard
from .rules import certify_lower_bound, reachable_domain, replay
from .strengthen import (
    StrengthenSpec,
    SweepFamily,
    apply_strengthening,
    restricted_post,
    sweep_values,
)
from .syntax import State, While, grid, join_loop, split_loop, to_fraction
from .wp_engine import Budget, step_distribution

EXIT_OK, EXIT_FAIL, EXIT_TRUNCATED = 0, 1, 2
CSV_HEADER = ["M", "state", "value_exact", "value_decimal", "states", "millis"]


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_FAIL)


def _entry(name):
    try:
        return corpus_mod.load(name)
    except KeyError as e:
        _fail(e.args[0])


def _pairs(items) -> dict:
    out = {}
    for it in items:
        if "=" not in it:
            raise click.BadParameter(f"expected NAME=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = to_fraction(v.strip())
    return out


def _region(items) -> list[State]:
    """``n=-2..12`` style ranges (integer steps) or single values; product of all."""
    ranges = {}
    for it in items:
        k, v = it.split("=", 1)
        if ".." in v:
            lo, hi = v.split("..", 1)
            ranges[k.strip()] = range(int(lo), int(hi) + 1)
        else:
            ranges[k.strip()] = [to_fraction(v)]
    return grid(**ranges) if ranges else []


@dataclass
class Setup:
    """Everything a subcommand needs, resolved from a corpus entry and/or flags."""

    entry: object
    constants: dict
    prefix: object
    loop: While
    post: object
    init: list
    budget: Budget
    strengthen: list = field(default_factory=list)
    raw_guard: str | None = None
    use_corpus_spec: bool = True
    signed: bool = False

    @property
    def M(self):
        return self.constants.get("M")

    def spec(self, M=None) -> StrengthenSpec | None:
        consts = dict(self.constants)
        if M is not None:
            consts["M"] = M
        if self.raw_guard:
            return StrengthenSpec(self.loop.guard, (), parse_guard(self.raw_guard, consts))
        if self.strengthen:
            return StrengthenSpec(self.loop.guard, tuple(parse_guard(t, consts) for t in self.strengthen))
        if self.entry is not None and self.use_corpus_spec and "strengthen" in self.entry.meta:
            if M is None:
                _fail("the corpus strengthening needs a parameter value: pass --param M=<value>")
            return self.entry.spec(M)
        return None

    def family(self, values) -> SweepFamily:
        if self.raw_guard or self.strengthen:
            extra = tuple(self.strengthen) + ((self.raw_guard,) if self.raw_guard else ())
            return _TextFamily("M", tuple(values), (), True, extra, self.constants)
        if self.entry is None:
            _fail("sweep needs a strengthening (--strengthen) or a corpus entry")
        return self.entry.family(values)

    def loop_for(self, M=None) -> While:
        spec = self.spec(M)
        return self.loop if spec is None else apply_strengthening(self.loop, spec)

    def entry_states(self):
        """Loop-entry distribution for each initial state: [(state, [(s', p)], lost)]."""
        out = []
        for s in self.init:
            if self.prefix is None:
                out.append((s, [(s, Fraction(1))], Fraction(0)))
            else:
                d = step_distribution(self.prefix, s, self.budget)
                out.append((s, list(d.items()), 1 - d.total_mass))
        return out


@dataclass(frozen=True)
class _TextFamily(SweepFamily):
    constants: dict = field(default_factory=dict, hash=False, compare=False)

    def spec(self, G, M):
        consts = dict(self.constants)
        consts[self.param] = M
        return StrengthenSpec(G, tuple(parse_guard(t, consts) for t in self.extra))


def _setup(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
           max_states, max_depth, checker=False) -> Setup:
    entry = _entry(corpus) if corpus else None
    constants = dict(entry.constants) if entry else {}
    if entry and "certify" in entry.meta and "M" in entry.meta["certify"]:
        constants.setdefault("M", entry.meta["certify"]["M"])
    constants.update(_pairs(params))
    if program:
        text = Path(program).read_text(encoding="utf-8")
        prog_consts = {k: v for k, v in constants.items() if k != "M"}
        prefix, loop = split_loop(parse_program(text, prog_consts))
    elif entry:
        prefix, loop = entry.parts()
        if checker:
            loop = entry.checker_loop
    else:
        _fail("give --corpus NAME or --program FILE")
    post_text = post if post is not None else (entry.meta.get("post", "1") if entry else "1")
    f = parse_expectation(post_text, constants)
    states = [State.from_text(t) for t in init] + _region(region)
    if not states and entry:
        states = entry.init_states()
    if not states:
        _fail("no initial states: pass --init or --region")
    return Setup(entry, constants, prefix, loop, f, states, Budget(max_states, max_depth),
                 list(strengthen), raw_guard, not no_strengthen,
                 bool(entry and entry.meta.get("signed_post")))


def common(fn):
    opts = [
        click.option("--corpus", "corpus", help="Bundled example name (see `guardstrength list`)."),
        click.option("--program", type=click.Path(exists=True, dir_okay=False), help="pGCL source file."),
        click.option("--param", "-p", "params", multiple=True, help="Constant NAME=VALUE (e.g. M=10)."),
        click.option("--post", help="Postexpectation f."),
        click.option("--init", multiple=True, help="Initial state, e.g. 'n=1,b=0'."),
        click.option("--region", multiple=True, help="Initial range NAME=LO..HI (product over flags)."),
        click.option("--strengthen", multiple=True, help="Conjunct added to the guard (may mention M)."),
        click.option("--raw-guard", help="Replacement guard; implication is then checked on the domain."),
        click.option("--no-strengthen", is_flag=True, help="Ignore the corpus strengthening."),
        click.option("--max-states", default=10**6, show_default=True),
        click.option("--max-depth", default=8, show_default=True),
        click.option("--emit", type=click.Choice(["human", "json", "csv"]), default="human", show_default=True),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _emit_json(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _emit_csv(rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    click.echo(buf.getvalue(), nl=False)


@click.group()
def main():
    """Exact lower bounds for probabilistic loops by guard strengthening."""
    if hasattr(sys, "set_int_max_str_digits"):
        sys.set_int_max_str_digits(0)  # exact values may have very long numerators


@main.command("list")
def list_cmd():
    """List bundled corpus entries."""
    for n in corpus_mod.names():
        click.echo(n)


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--corpus", "corpus")
@click.option("--param", "-p", "params", multiple=True)
@click.option("--emit", type=click.Choice(["human", "json"]), default="human")
def parse(path, corpus, params, emit):
    """Parse a program and pretty-print it (round-trips through the parser)."""
    if corpus:
        entry = _entry(corpus)
        text, consts = entry.text, entry.constants
    elif path:
        text, consts = Path(path).read_text(encoding="utf-8"), {}
    else:
        _fail("give PATH or --corpus")
    consts.update(_pairs(params))
    try:
        prog = parse_program(text, consts)
    except GuardStrengthError as e:
        _fail(str(e))
    out = pretty_print(prog)
    again = parse_program(out, consts)
    if emit == "json":
        _emit_json({"program": out, "round_trip": again == prog})
    else:
        click.echo(out)
    sys.exit(EXIT_OK if again == prog else EXIT_FAIL)


def _solve(setup: Setup, M, method="exact", iters=1000, dump=None):
    loop = setup.loop_for(M)
    post = restricted_post(setup.loop.guard, setup.post)
    entries = setup.entry_states()
    starts = sorted({s for _, d, _ in entries for s, _ in d}, key=State.sort_key)
    t0 = time.perf_counter()
    chain = explore(loop, starts, setup.budget)
    if method == "exact":
        res = solve_exact(chain, post)
    else:
        res = value_iterate(chain, iters, post=post)
    ms = (time.perf_counter() - t0) * 1000
    if dump:
        Path(dump).write_text(dump_chain(chain, post), encoding="utf-8")
    rows = []
    for s, d, lost in entries:
        v = sum((p * res.value(t) for t, p in d), Fraction(0)) if all(res.value(t) is not E.INF for t, _ in d) \
            else E.INF
        rows.append((s, v, bool(lost) or chain.truncated))
    return rows, chain, res, ms


@main.command()
@common
@click.option("--method", type=click.Choice(["exact", "iterate"]), default="exact", show_default=True)
@click.option("--iters", default=1000, show_default=True, help="Value-iteration rounds.")
@click.option("--dump-chain", "dump", type=click.Path(dir_okay=False), help="Write the explored chain here.")
def solve(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
          max_states, max_depth, emit, method, iters, dump):
    """Exact wp of the (strengthened) loop against [not G]*f."""
    try:
        st = _setup(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
                    max_states, max_depth)
        rows, chain, res, ms = _solve(st, st.M, method, iters, dump)
    except GuardStrengthError as e:
        _fail(str(e))
    truncated = any(t for _, _, t in rows)
    if emit == "json":
        _emit_json({
            "guard": print_guard(st.loop_for(st.M).guard),
            "method": res.method,
            "chain_states": chain.n_states,
            "truncated": truncated,
            "results": [{"state": s.to_text(), "exact": E.format_ext(v), "decimal": decimal_str(v),
                         "truncated": t} for s, v, t in rows],
        })
    elif emit == "csv":
        _emit_csv([[st.M if st.M is not None else "", s.to_text(), E.format_ext(v), decimal_str(v),
                    chain.n_states, f"{ms:.1f}"] for s, v, _ in rows])
    else:
        click.echo(f"guard: {print_guard(st.loop_for(st.M).guard)}")
        click.echo(f"chain: {chain.n_states} states, method {res.method}, truncated={'yes' if truncated else 'no'}")
        for s, v, _ in rows:
            click.echo(f"{s.to_text()}: {E.format_ext(v)} ~ {decimal_str(v)}")
    sys.exit(EXIT_TRUNCATED if truncated else EXIT_OK)


def _values(spec_text: str | None, entry):
    if spec_text:
        if ".." in spec_text:
            a, b = spec_text.split("..", 1)
            return sweep_values(int(a), int(b))
        return tuple(to_fraction(v) if "/" in v else int(v) for v in spec_text.split(","))
    if entry is None:
        _fail("give --values")
    fam = entry.family()
    return fam.values


@main.command("sweep")
@common
@click.option("--values", "values", help="Parameter values: '5,10,20' or '2..8'.")
@click.option("--jobs", default=1, show_default=True, help="Worker processes.")
def sweep_cmd(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
              max_states, max_depth, emit, values, jobs):
    """Solve a nested family of strengthenings G'_M; the bound column must not decrease."""
    try:
        st = _setup(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
                    max_states, max_depth)
        vals = _values(values, st.entry)
        fam = st.family(vals)
        entries = st.entry_states()
        starts = sorted({s for _, d, _ in entries for s, _ in d}, key=State.sort_key)
        res = sweep(st.loop, fam, st.post, starts, st.budget, jobs)
    except GuardStrengthError as e:
        _fail(str(e))
    out, errors, truncated = [], [], False
    for row in res.rows:
        if row.result is None:
            errors.append(f"M={row.M}: {row.error}")
            continue
        truncated |= row.result.truncated
        for s, d, lost in entries:
            v = sum((p * row.result.value(t) for t, p in d), Fraction(0))
            truncated |= bool(lost)
            out.append((row.M, s, v, row.result.n_states, row.millis))
    if emit == "json":
        _emit_json({
            "monotone": res.monotone,
            "violations": [{"from": str(a), "to": str(b), "state": s.to_text()} for a, b, s in res.violations],
            "rows": [{"M": str(M), "state": s.to_text(), "exact": E.format_ext(v), "decimal": decimal_str(v),
                      "states": n, "millis": round(ms, 1)} for M, s, v, n, ms in out],
            "errors": errors,
        })
    elif emit == "csv":
        _emit_csv([[M, s.to_text(), E.format_ext(v), decimal_str(v), n, f"{ms:.1f}"] for M, s, v, n, ms in out])
    else:
        for M, s, v, n, ms in out:
            click.echo(f"M={M} {s.to_text()}: {E.format_ext(v)} ~ {decimal_str(v)} ({n} states, {ms:.0f} ms)")
        click.echo(f"monotone: {res.monotone}")
    for e in errors:
        click.echo(f"error: {e}", err=True)
    if res.violations:
        for a, b, s in res.violations:
            click.echo(f"error: bound decreased from M={a} to M={b} at {s.to_text()}", err=True)
    if errors or res.violations:
        sys.exit(EXIT_FAIL)
    sys.exit(EXIT_TRUNCATED if truncated else EXIT_OK)


@main.command()
@common
@click.option("--bound", "bound_text", help="Candidate lower bound l (may mention M).")
@click.option("--inner", type=click.Choice(["HARK", "MM", "EXACT_SOLVE"], case_sensitive=False))
@click.option("--domain", "domain", multiple=True, help="Verdict domain range NAME=LO..HI.")
@click.option("--reach", is_flag=True, default=None, help="Close the domain under reachability.")
@click.option("--N", "N", type=int, help="Horizon for the AST witness.")
@click.option("--mm-variant", type=click.Choice(["a", "b", "c"]), default="c", show_default=True)
@click.option("--mm-guard", help="Predicate for McIver-Morgan variant (b).")
@click.option("--mm-epsilon", help="Epsilon for McIver-Morgan variant (c).")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the certificate JSON here.")
@click.option("--replay", "replay_path", type=click.Path(exists=True, dir_okay=False),
              help="Re-check a saved certificate instead.")
def certify(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
            max_states, max_depth, emit, bound_text, inner, domain, reach, N, mm_variant, mm_guard,
            mm_epsilon, out, replay_path):
    """Certify l <= wp[loop](f) via a strengthened loop and an inner rule."""
    if replay_path:
        data = json.loads(Path(replay_path).read_text(encoding="utf-8"))
        ok = replay(data) and data["verdict"] == "CERTIFIED"
        click.echo(f"replay: {'identical' if ok else 'MISMATCH or not certified'}")
        sys.exit(EXIT_OK if ok else EXIT_FAIL)
    try:
        st = _setup(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
                    max_states, max_depth, checker=True)
        meta = st.entry.meta.get("certify", {}) if st.entry else {}
        M = st.M
        inner = (inner or meta.get("inner") or "HARK").upper()
        reach = meta.get("reach", False) if reach is None else reach
        spec = st.spec(M)
        if spec is None:
            spec = StrengthenSpec(st.loop.guard, ())
        strengthened = apply_strengthening(st.loop, spec)
        if domain:
            dom = _region(domain)
        elif st.entry is not None and st.entry.meta.get("domain"):
            dom = st.entry.domain(M)
        else:
            dom = sorted({s for _, d, _ in st.entry_states() for s, _ in d}, key=State.sort_key)
        if reach:
            dom = reachable_domain(strengthened, dom, st.budget)
        consts = dict(st.constants)
        if bound_text:
            l = parse_expectation(bound_text, consts)
        elif st.entry is not None and st.entry.bound_text(M) is not None:
            l = st.entry.bound(M)
        else:
            chain = explore(strengthened, dom, st.budget)
            res = solve_exact(chain, restricted_post(st.loop.guard, st.post))
            l = E.Table({s: res.value(s) for s in dom})
        cert = certify_lower_bound(
            st.loop, st.post, l, spec, inner, dom, st.budget, N, mm_variant,
            parse_guard(mm_guard, consts) if mm_guard else None,
            Fraction(mm_epsilon) if mm_epsilon else None,
        )
    except GuardStrengthError as e:
        _fail(str(e))
    if out:
        Path(out).write_text(cert.dumps() + "\n", encoding="utf-8")
    if emit == "json":
        click.echo(cert.dumps())
    else:
        click.echo(f"rule: {cert.rule} / {cert.inner_rule}   domain: {len(cert.domain)} states")
        for c in cert.side_conditions:
            ev = ", ".join(f"{k}={v}" for k, v in c.to_json()["evidence"].items())
            click.echo(f"  {c.kind:<24} {c.status.value:<20} {ev}" + (f"  [{c.note}]" if c.note else ""))
        click.echo(f"verdict: {cert.verdict}")
    sys.exit(EXIT_OK if cert.certified else EXIT_FAIL)


@main.command()
@common
@click.option("--body", help="Loop body text (defaults to the corpus program or the loop's body).")
@click.option("--guard", "g1", help="Guard G.")
@click.option("--guard2", "g2", help="Guard G'.")
def diff(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
         max_states, max_depth, emit, body, g1, g2):
    """Per-state terms of the wp-difference identity for guards G and G'."""
    entry = _entry(corpus) if corpus else None
    consts = dict(entry.constants) if entry else {}
    consts.update(_pairs(params))
    meta = entry.meta if entry else {}
    try:
        if body:
            b = parse_program(body, consts)
        elif program:
            b = parse_program(Path(program).read_text(encoding="utf-8"), consts)
        elif entry:
            b = entry.program()
        else:
            _fail("give --body, --program or --corpus")
        if isinstance(b, While) and not g1:
            g1, b = print_guard(b.guard), b.body
        G = parse_guard(g1 or meta.get("guard"), consts)
        Gp = parse_guard(g2 or meta.get("guard2"), consts)
        f = parse_expectation(post or meta.get("post", "1"), consts)
        states = [State.from_text(t) for t in init] + _region(region)
        if not states and entry and meta.get("domain"):
            states = entry.domain(consts.get("M"))
        if not states:
            _fail("no states: pass --init or --region")
        recs = diff_decomposition(G, Gp, b, f, states, Budget(max_states, max_depth))
    except GuardStrengthError as e:
        _fail(str(e))
    if emit == "json":
        _emit_json({"records": [r.to_json() for r in recs],
                    "identity": all(r.holds for r in recs)})
    else:
        click.echo("state       (i)        (ii)       (iii)      (iv)       A          B          identity")
        for r in recs:
            cells = [E.format_ext(getattr(r, k)) for k in ("i", "ii", "iii", "iv", "A", "B")]
            click.echo(f"{r.state.to_text():<11} " + " ".join(f"{c:<10}" for c in cells) + f" {r.holds}")
    if any(r.truncated for r in recs):
        sys.exit(EXIT_TRUNCATED)
    sys.exit(EXIT_OK if all(r.holds for r in recs) else EXIT_FAIL)


@main.command()
@common
@click.option("--trials", default=10**4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-steps", default=10**4, show_default=True)
@click.option("--chain", "on_chain", is_flag=True, help="Walk the explored strengthened chain (vectorised).")
@click.option("--signed", is_flag=True, default=None, help="Allow negative arithmetic terms in f.")
def simulate(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
             max_states, max_depth, emit, trials, seed, max_steps, on_chain, signed):
    """Monte Carlo estimate of wp against [not G]*f (cutoff runs count as 0)."""
    try:
        st = _setup(corpus, program, params, post, init, region, strengthen, raw_guard, no_strengthen,
                    max_states, max_depth)
        loop = st.loop_for(st.M)
        f = restricted_post(st.loop.guard, st.post)
        signed = st.signed if signed is None else signed
        results = []
        for s in st.init:
            if on_chain:
                if st.prefix is not None:
                    _fail("--chain needs a program without a prefix")
                chain = explore(loop, [s], st.budget)
                est = simulate_chain(chain, f, s, trials, max_steps, seed)
            else:
                prog = loop if st.prefix is None else join_loop(st.prefix, loop)
                est = estimate_wp(prog, f, s, trials, max_steps, seed, signed=signed)
            results.append((s, est))
    except GuardStrengthError as e:
        _fail(str(e))
    if emit == "json":
        _emit_json([{"state": s.to_text(), **e.to_json()} for s, e in results])
    else:
        for s, e in results:
            click.echo(f"{s.to_text()}: mean={e.mean:.6f} ± {e.half_width:.6f} (99%), "
                       f"CUTOFF FRACTION={e.cutoff_fraction:.4f}, trials={e.trials}, seed={e.seed}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":  # pragma: no cover
    main()
