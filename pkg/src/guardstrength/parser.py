"""Recursive-descent parser and pretty printer for pGCL and expectations."""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Mapping

from . import expectation as E
from .errors import ParseError
from .syntax import (
    And,
    ArithExpr,
    Assign,
    BinOp,
    BoolConst,
    Cmp,
    DIVERGE,
    DiscreteDist,
    Guard,
    If,
    Not,
    Num,
    Or,
    ProbChoice,
    Program,
    RandomAssign,
    Seq,
    Skip,
    UniformChoice,
    UniformDist,
    UnOp,
    Var,
    While,
    arith_vars,
    eval_arith,
    flatten_seq,
    to_fraction,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*|\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>:=|:~|\(\+\)|<=|>=|==|!=|&&|\|\||[⊕≤≥≠¬∧∨∞]|[-+*/^()\[\]{};,:<>=!&|])
    """,
    re.VERBOSE,
)

_ALIASES = {
    "⊕": "(+)",
    "≤": "<=",
    "≥": ">=",
    "≠": "!=",
    "==": "=",
    "¬": "!",
    "not": "!",
    "∧": "&&",
    "&": "&&",
    "and": "&&",
    "∨": "||",
    "|": "||",
    "or": "||",
    "∞": "inf",
}

KEYWORDS = {
    "skip", "diverge", "while", "if", "else", "true", "false", "dist", "uniform",
    "min", "max", "abs", "floor", "inf", "monus",
}
_CMP_OPS = {"<", "<=", "=", "!=", ">=", ">"}
_ARITH_OPS = {"+", "-", "*", "/", "^"}


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r})"


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            if kind == "ident" and s in ("not", "and", "or"):
                kind = "op"
            if kind == "op":
                s = _ALIASES.get(s, s)
                if s == "inf":
                    kind = "ident"
            out.append(Token(kind, s, line, col))
        nl = s.count("\n") if kind == "ws" else 0
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(m.group())
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


# ---------------------------------------------------------------- folding


def fold(e: ArithExpr) -> ArithExpr:
    """Collapse variable-free subterms to a literal when evaluation succeeds."""
    if isinstance(e, (Num, Var)):
        return e
    if not arith_vars(e):
        try:
            return Num(eval_arith(e, None))
        except Exception:
            return e
    return e


def _mk_bin(op, a, b):
    return fold(BinOp(op, a, b))


def _mk_un(op, a):
    return fold(UnOp(op, a))


# ---------------------------------------------------------------- parser


class Parser:
    def __init__(self, text: str, constants: Mapping | None = None):
        self.toks = tokenize(text)
        self.i = 0
        self.constants = {k: to_fraction(v) for k, v in (constants or {}).items()}
        self.expect_mode = False

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text in texts

    def error(self, msg, expected=()):
        t = self.tok
        found = t.text or "end of input"
        raise ParseError(f"{msg}, found {found!r}", t.line, t.col, expected)

    def eat(self, text) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}", [text])
        t = self.tok
        self.i += 1
        return t

    def accept(self, text) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def finish(self):
        if self.tok.kind != "eof":
            self.error("unexpected trailing input", ["end of input"])

    # ------------------------------------------------------------ programs

    def program(self) -> Program:
        stmts = flatten_seq(self.stmt())
        while self.accept(";"):
            if self.at("}") or self.tok.kind == "eof":
                break
            stmts.extend(flatten_seq(self.stmt()))
        acc = stmts[-1]
        for s in reversed(stmts[:-1]):
            acc = Seq(s, acc)
        return acc

    def block(self) -> Program:
        self.eat("{")
        if self.at("}"):
            self.error("empty block", ["statement"])
        p = self.program()
        self.eat("}")
        return p

    def stmt(self) -> Program:
        first = self.primary_stmt()
        if not self.at("(+)"):
            return first
        branches = [first]
        while self.accept("(+)"):
            branches.append(self.primary_stmt())
        return UniformChoice(tuple(branches))

    def primary_stmt(self) -> Program:
        t = self.tok
        if self.accept("skip"):
            return Skip()
        if self.accept("diverge"):
            return DIVERGE
        if self.accept("while"):
            self.eat("(")
            g = self.guard()
            self.eat(")")
            return While(g, self.block())
        if self.accept("if"):
            self.eat("(")
            g = self.guard()
            self.eat(")")
            then = self.block()
            orelse = Skip()
            if self.accept("else"):
                orelse = self.stmt() if self.at("if") else self.block()
            return If(g, then, orelse)
        if self.at("{"):
            first = self.block()
            if self.accept("["):
                p = self.expr()
                self.eat("]")
                p = fold(p)
                if isinstance(p, Num) and not 0 <= p.value <= 1:
                    raise ParseError(f"probability {p.value} outside [0, 1]", t.line, t.col)
                return ProbChoice(first, p, self.block())
            return first
        if t.kind == "ident" and t.text not in KEYWORDS:
            name = t.text
            if name in self.constants:
                self.error(f"cannot assign to constant {name!r}")
            self.i += 1
            if self.accept(":="):
                return Assign(name, self.expr())
            if self.accept(":~"):
                return RandomAssign(name, self.dist())
            self.error("expected assignment", [":=", ":~"])
        self.error("expected statement", ["skip", "diverge", "while", "if", "{", "identifier"])

    def rational(self) -> Fraction:
        e = fold(self.expr())
        if not isinstance(e, Num):
            self.error("expected a rational literal")
        return e.value

    def dist(self):
        t = self.tok
        if self.accept("uniform"):
            self.eat("(")
            lo = self.rational()
            self.eat(",")
            hi = self.rational()
            self.eat(")")
            if not lo < hi:
                raise ParseError("uniform bounds must satisfy lo < hi", t.line, t.col)
            return UniformDist(lo, hi)
        if self.accept("dist"):
            self.eat("{")
            items = []
            while True:
                w = self.rational()
                self.eat(":")
                items.append((w, self.expr()))
                if not self.accept(","):
                    break
            self.eat("}")
            if any(w <= 0 for w, _ in items):
                raise ParseError("distribution weights must be positive", t.line, t.col)
            if sum(w for w, _ in items) != 1:
                raise ParseError("distribution weights do not sum to 1", t.line, t.col)
            return DiscreteDist(tuple(items))
        self.error("expected distribution", ["dist", "uniform"])

    # ------------------------------------------------------------ guards

    def guard(self) -> Guard:
        g = self.guard_and()
        while self.accept("||"):
            g = Or(g, self.guard_and())
        return g

    def guard_and(self) -> Guard:
        g = self.guard_not()
        while self.accept("&&"):
            g = And(g, self.guard_not())
        return g

    def guard_not(self) -> Guard:
        if self.accept("!"):
            return Not(self.guard_not())
        return self.guard_atom()

    def guard_atom(self) -> Guard:
        if self.at("true", "false") and not (self.peek().text in _CMP_OPS):
            v = self.tok.text == "true"
            self.i += 1
            return BoolConst(v)
        if self.at("("):
            save = self.i
            try:
                self.i += 1
                g = self.guard()
                self.eat(")")
                nxt = self.tok.text if self.tok.kind == "op" else None
                if nxt not in _CMP_OPS and nxt not in _ARITH_OPS:
                    return g
            except ParseError:
                pass
            self.i = save
        return self.comparison()

    def comparison(self) -> Guard:
        left = self.expr()
        if not (self.tok.kind == "op" and self.tok.text in _CMP_OPS):
            self.error("expected comparison operator", sorted(_CMP_OPS))
        parts = []
        while self.tok.kind == "op" and self.tok.text in _CMP_OPS:
            op = self.tok.text
            self.i += 1
            right = self.expr()
            parts.append(Cmp(op, left, right))
            left = right
        g = parts[0]
        for p in parts[1:]:
            g = And(g, p)
        return g

    # ------------------------------------------------------------ arithmetic / expectations

    def expr(self):
        a = self.sum_()
        while self.expect_mode and self.accept("monus"):
            a = _combine("monus", a, self.sum_(), self)
        return a

    def sum_(self):
        a = self.term()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            a = _combine(op, a, self.term(), self)
        return a

    def _starts_atom(self) -> bool:
        t = self.tok
        if t.kind == "num":
            return True
        if t.kind == "ident":
            return t.text not in KEYWORDS or t.text in ("inf", "min", "max", "abs", "floor", "monus")
        return t.kind == "op" and t.text in ("(", "[")

    def term(self):
        a = self.unary()
        while True:
            if self.at("*", "/"):
                op = self.tok.text
                self.i += 1
                a = _combine(op, a, self.unary(), self)
            elif self.expect_mode and self._starts_atom() and not self.at("monus"):
                a = _combine("*", a, self.unary(), self)
            else:
                return a

    def unary(self):
        if self.accept("-"):
            a = self.unary()
            if not isinstance(a, ArithExpr):
                self.error("negation of an expectation")
            return _mk_un("neg", a)
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            exp = self.unary()
            return _combine("^", base, exp, self)
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(Fraction(t.text))
        if self.accept("("):
            e = self.expr()
            self.eat(")")
            return e
        if self.expect_mode and self.accept("["):
            g = self.guard()
            self.eat("]")
            return E.Iverson(g)
        if t.kind == "ident":
            name = t.text
            if name == "inf":
                if not self.expect_mode:
                    self.error("'inf' is only allowed in expectations")
                self.i += 1
                return E.INFINITY
            if name in ("min", "max", "monus"):
                if name == "monus" and not self.expect_mode:
                    self.error("'monus' is only allowed in expectations")
                self.i += 1
                self.eat("(")
                a = self.expr()
                self.eat(",")
                b = self.expr()
                self.eat(")")
                return _combine(name, a, b, self)
            if name in ("abs", "floor"):
                self.i += 1
                self.eat("(")
                a = self.expr()
                self.eat(")")
                if not isinstance(a, ArithExpr):
                    self.error(f"{name} of an expectation")
                return _mk_un(name, a)
            if name in KEYWORDS:
                self.error("unexpected keyword")
            self.i += 1
            if name in self.constants:
                return Num(self.constants[name])
            return Var(name)
        self.error("expected expression", ["number", "identifier", "("])


def _to_exp(x, parser) -> E.Expectation:
    if isinstance(x, E.Expectation):
        return x
    if isinstance(x, Num):
        if x.value < 0:
            parser.error(f"negative constant {x.value} in expectation")
        return E.Const(x.value)
    return E.Leaf(x)


def _combine(op, a, b, parser):
    if isinstance(a, ArithExpr) and isinstance(b, ArithExpr) and op != "monus":
        return _mk_bin(op, a, b)
    if op == "+":
        return E.Add(_to_exp(a, parser), _to_exp(b, parser))
    if op == "*":
        return E.Mul(_to_exp(a, parser), _to_exp(b, parser))
    if op == "/":
        if not isinstance(b, ArithExpr):
            parser.error("division by an expectation")
        return E.Mul(_to_exp(a, parser), _to_exp(_mk_bin("/", Num(Fraction(1)), b), parser))
    if op == "^":
        b = fold(b) if isinstance(b, ArithExpr) else b
        if not (isinstance(b, Num) and b.value.denominator == 1 and b.value >= 0):
            parser.error("expectation powers need a nonnegative integer exponent")
        return E.Pow(_to_exp(a, parser), int(b.value))
    if op == "min":
        return E.Min(_to_exp(a, parser), _to_exp(b, parser))
    if op == "max":
        return E.Max(_to_exp(a, parser), _to_exp(b, parser))
    if op == "monus":
        return E.Monus(_to_exp(a, parser), _to_exp(b, parser))
    parser.error("subtraction between expectations (use monus)")


# ---------------------------------------------------------------- entry points


def parse_program(text: str, constants: Mapping | None = None) -> Program:
    p = Parser(text, constants)
    prog = p.program()
    p.finish()
    return prog


def parse_guard(text: str, constants: Mapping | None = None) -> Guard:
    p = Parser(text, constants)
    g = p.guard()
    p.finish()
    return g


def parse_arith(text: str, constants: Mapping | None = None) -> ArithExpr:
    p = Parser(text, constants)
    e = p.expr()
    p.finish()
    return e


def parse_expectation(text: str, constants: Mapping | None = None) -> E.Expectation:
    p = Parser(text, constants)
    p.expect_mode = True
    e = p.expr()
    p.finish()
    return _to_exp(e, p)


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _num_text(q: Fraction) -> tuple[str, int]:
    if q < 0:
        s, _ = _num_text(-q)
        return "-" + s, 3
    if q.denominator == 1:
        return str(q.numerator), 5
    return f"{q.numerator}/{q.denominator}", 2


def _arith(e: ArithExpr) -> tuple[str, int]:
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Var):
        return e.name, 5
    if isinstance(e, UnOp):
        if e.op == "neg":
            s, p = _arith(e.arg)
            return "-" + (s if p >= 4 else f"({s})"), 3
        return f"{e.op}({_arith(e.arg)[0]})", 5
    if isinstance(e, BinOp):
        if e.op in ("min", "max"):
            return f"{e.op}({_arith(e.left)[0]}, {_arith(e.right)[0]})", 5
        prec = _PREC[e.op]
        ls, lp = _arith(e.left)
        rs, rp = _arith(e.right)
        if e.op == "^":
            ls = ls if lp >= 5 else f"({ls})"
            rs = rs if rp >= 3 else f"({rs})"
            return f"{ls}^{rs}", 4
        ls = ls if lp >= prec else f"({ls})"
        rs = rs if rp > prec else f"({rs})"
        return f"{ls} {e.op} {rs}", prec
    raise TypeError(e)


def print_arith(e: ArithExpr) -> str:
    return _arith(e)[0]


def _guard(g: Guard) -> tuple[str, int]:
    if isinstance(g, BoolConst):
        return ("true" if g.value else "false"), 4
    if isinstance(g, Cmp):
        return f"{print_arith(g.left)} {g.op} {print_arith(g.right)}", 4
    if isinstance(g, Not):
        s, p = _guard(g.arg)
        return "!" + (s if p >= 3 else f"({s})"), 3
    if isinstance(g, (And, Or)):
        prec, sym = (2, "&&") if isinstance(g, And) else (1, "||")
        ls, lp = _guard(g.left)
        rs, rp = _guard(g.right)
        ls = ls if lp >= prec else f"({ls})"
        rs = rs if rp > prec else f"({rs})"
        return f"{ls} {sym} {rs}", prec
    raise TypeError(g)


def print_guard(g: Guard) -> str:
    return _guard(g)[0]


def _exp(f) -> tuple[str, int]:
    if isinstance(f, E.Const):
        if f.value is E.INF:
            return "inf", 5
        return _num_text(f.value)
    if isinstance(f, E.Leaf):
        return _arith(f.expr)
    if isinstance(f, E.Iverson):
        return f"[{print_guard(f.guard)}]", 5
    if isinstance(f, E.Add):
        ls, lp = _exp(f.left)
        rs, rp = _exp(f.right)
        return f"{ls if lp >= 1 else f'({ls})'} + {rs if rp > 1 else f'({rs})'}", 1
    if isinstance(f, E.Mul):
        ls, lp = _exp(f.left)
        rs, rp = _exp(f.right)
        return f"{ls if lp >= 2 else f'({ls})'} * {rs if rp > 2 else f'({rs})'}", 2
    if isinstance(f, E.Pow):
        s, p = _exp(f.base)
        return f"{s if p >= 5 else f'({s})'}^{f.exp}", 4
    if isinstance(f, (E.Min, E.Max, E.Monus)):
        name = type(f).__name__.lower()
        return f"{name}({_exp(f.left)[0]}, {_exp(f.right)[0]})", 5
    raise TypeError(f)


def print_expectation(f) -> str:
    return _exp(f)[0]


def _dist(d) -> str:
    if isinstance(d, UniformDist):
        return f"uniform({_num_text(d.lo)[0]}, {_num_text(d.hi)[0]})"
    return "dist { " + ", ".join(f"{_num_text(w)[0]} : {print_arith(v)}" for w, v in d.items) + " }"


def _inline(p: Program) -> str:
    return "; ".join(_stmt(s, 0, inline=True) for s in flatten_seq(p))


def _stmt(p: Program, ind: int, inline=False) -> str:
    pad = "" if inline else "  " * ind
    if isinstance(p, Skip):
        return pad + "skip"
    if p == DIVERGE:
        return pad + "diverge"
    if isinstance(p, Assign):
        return f"{pad}{p.var} := {print_arith(p.expr)}"
    if isinstance(p, RandomAssign):
        return f"{pad}{p.var} :~ {_dist(p.dist)}"
    if isinstance(p, ProbChoice):
        return f"{pad}{{{_inline(p.left)}}} [{print_arith(p.prob)}] {{{_inline(p.right)}}}"
    if isinstance(p, UniformChoice):
        return pad + " (+) ".join(f"{{{_inline(b)}}}" for b in p.branches)
    if isinstance(p, (If, While)):
        if inline:
            if isinstance(p, While):
                return f"while ({print_guard(p.guard)}) {{ {_inline(p.body)} }}"
            s = f"if ({print_guard(p.guard)}) {{ {_inline(p.then)} }}"
            return s + f" else {{ {_inline(p.orelse)} }}"
        if isinstance(p, While):
            return f"{pad}while ({print_guard(p.guard)}) {{\n{_block(p.body, ind + 1)}\n{pad}}}"
        s = f"{pad}if ({print_guard(p.guard)}) {{\n{_block(p.then, ind + 1)}\n{pad}}}"
        return s + f" else {{\n{_block(p.orelse, ind + 1)}\n{pad}}}"
    if isinstance(p, Seq):
        return _block(p, ind)
    raise TypeError(p)


def _block(p: Program, ind: int) -> str:
    return ";\n".join(_stmt(s, ind) for s in flatten_seq(p))


def pretty_print(p: Program) -> str:
    return _block(p, 0)
