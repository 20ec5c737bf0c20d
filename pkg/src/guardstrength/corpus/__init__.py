"""Bundled example programs with their run metadata.

Each ``<name>.json`` names a ``.pgcl`` file and optionally: ``constants``,
``post``, ``init`` (a state or list of states), ``strengthen`` (``bounds``
and/or ``extra`` guard texts mentioning the sweep parameter), ``sweep``,
``bound`` (candidate lower bound text mentioning the parameter),
``domain`` (variable -> [lo, hi] expression texts) and ``certify``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

from ..parser import parse_arith, parse_expectation, parse_guard, parse_program
from ..strengthen import SweepFamily, make_box_strengthening, sweep_values
from ..syntax import State, eval_arith, grid, split_loop


def names() -> list[str]:
    root = resources.files(__name__)
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def read_text(filename: str) -> str:
    return resources.files(__name__).joinpath(filename).read_text(encoding="utf-8")


def petersburg_bound(M: int) -> str:
    """Candidate l_M for the lottery loop; a sum over the dyadic bands of b."""
    M = Fraction(M)
    terms = ["[a != 1] * b"]
    k = math.ceil(math.log2(M)) if M > 1 else 0
    while Fraction(2) ** k < M:  # guard against float rounding
        k += 1
    while k > 0 and Fraction(2) ** (k - 1) >= M:
        k -= 1
    for i in range(1, k + 1):
        lo, hi = M / 2**i, M / 2 ** (i - 1)
        terms.append(f"[a = 1 && {lo} <= b && b < {hi}] * ({i} * b / 2)")
    return " + ".join(terms)


EXPANDERS = {"petersburg": petersburg_bound}


@dataclass
class Entry:
    name: str
    meta: dict

    @property
    def constants(self) -> dict:
        return dict(self.meta.get("constants", {}))

    @property
    def text(self) -> str:
        return read_text(self.meta["program"])

    def program(self):
        return parse_program(self.text, self.constants)

    def parts(self):
        """(prefix or None, loop)."""
        return split_loop(self.program())

    @property
    def loop(self):
        return self.parts()[1]

    @property
    def checker_loop(self):
        name = self.meta.get("checker_program")
        if name is None:
            return self.loop
        return split_loop(parse_program(read_text(name), self.constants))[1]

    @property
    def oracle_only(self) -> bool:
        return bool(self.meta.get("oracle_only"))

    def post(self):
        return parse_expectation(self.meta.get("post", "1"), self.constants)

    def init_states(self) -> list[State]:
        raw = self.meta.get("init", [])
        if isinstance(raw, dict):
            raw = [raw]
        return [State(r) for r in raw]

    def family(self, values=None) -> SweepFamily:
        st = self.meta.get("strengthen", {})
        sw = self.meta.get("sweep", {})
        if values is None:
            values = sw.get("values") or sweep_values(sw.get("from", 2), sw.get("to", 8), sw.get("step", 1))
        bounds = tuple((b["var"], b["op"], str(b["c"])) for b in st.get("bounds", ()))
        return SweepFamily(sw.get("param", "M"), tuple(values), bounds, True, tuple(st.get("extra", ())))

    def _consts(self, M) -> dict:
        c = self.constants
        if M is not None:
            c[self.meta.get("sweep", {}).get("param", "M")] = M
        return c

    def spec(self, M):
        fam = self.family((M,))
        s = fam.spec(self.loop.guard, M)
        return s

    def naive_spec(self):
        st = self.meta["naive"]
        bounds = [(b["var"], b["op"], str(b["c"])) for b in st.get("bounds", ())]
        return make_box_strengthening(self.loop.guard, bounds, self.constants)

    def bound_text(self, M) -> str | None:
        if "bound_expander" in self.meta:
            return EXPANDERS[self.meta["bound_expander"]](M)
        return self.meta.get("bound")

    def bound(self, M):
        text = self.bound_text(M)
        return None if text is None else parse_expectation(text, self._consts(M))

    def domain(self, M) -> list[State]:
        consts = self._consts(M)
        ranges = {}
        for v, (lo, hi) in self.meta.get("domain", {}).items():
            a = eval_arith(parse_arith(lo, consts), State())
            b = eval_arith(parse_arith(hi, consts), State())
            ranges[v] = range(math.ceil(a), math.floor(b) + 1)
        return grid(**ranges)

    def guard(self, key="guard"):
        return parse_guard(self.meta[key], self.constants)


def load(name: str) -> Entry:
    try:
        meta = json.loads(read_text(f"{name}.json"))
    except FileNotFoundError:
        raise KeyError(f"no corpus entry {name!r}; known: {', '.join(names())}") from None
    return Entry(name, meta)
