"""PCTL formula syntax tree, concrete-syntax parser and printer.

Grammar (whitespace-insensitive)::

    state   := implies
    implies := or ( '=>' implies )?
    or      := and ( '|' and )*
    and     := unary ( '&' unary )*
    unary   := '!' unary | 'AG' unary | atom
    atom    := 'true' | 'false' | IDENT | '(' state ')'
             | 'P' bound '[' path ']' | 'S' bound '[' state ']'
    bound   := ( '>=' | '>' | '<=' | '<' ) NUMBER | '=?'
    path    := 'X' state | 'F' 'G' state | 'F' state | 'G' state
             | state 'U' ( '<=' INT )? state

``false``, ``|`` and ``=>`` are sugar: they are rewritten with ``!`` and
``&`` while parsing, so the tree only holds the core connectives.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union


class ParseError(ValueError):
    def __init__(self, message: str, position: int, expected=()):
        detail = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at position {position}{detail}")
        self.position = position
        self.expected = tuple(expected)


COMPARISONS = (">=", ">", "<=", "<")
QUERY = "=?"


# -- state formulas ---------------------------------------------------------

@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Atom:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("atom names must be nonempty")


@dataclass(frozen=True)
class Not:
    arg: "StateFormula"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Bound:
    """A comparison ``op`` against ``p``, or the query ``=?`` when op is ``'=?'``."""

    op: str
    p: float | None = None

    def __post_init__(self):
        if self.op == QUERY:
            if self.p is not None:
                raise ValueError("a query bound carries no probability")
        elif self.op in COMPARISONS:
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError(f"probability bound {self.p!r} outside [0, 1]")
        else:
            raise ValueError(f"unknown comparison {self.op!r}")

    @property
    def is_query(self) -> bool:
        return self.op == QUERY


@dataclass(frozen=True)
class ProbOp:
    bound: Bound
    path: "PathFormula"


@dataclass(frozen=True)
class SteadyOp:
    bound: Bound
    arg: "StateFormula"


@dataclass(frozen=True)
class ForAllGlobally:
    arg: "StateFormula"


StateFormula = Union[TrueF, Atom, Not, And, ProbOp, SteadyOp, ForAllGlobally]


# -- path formulas ----------------------------------------------------------

@dataclass(frozen=True)
class Next:
    arg: StateFormula


@dataclass(frozen=True)
class Until:
    left: StateFormula
    right: StateFormula


@dataclass(frozen=True)
class BoundedUntil:
    left: StateFormula
    right: StateFormula
    steps: int

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("step bound must be nonnegative")


@dataclass(frozen=True)
class Eventually:
    arg: StateFormula


@dataclass(frozen=True)
class Globally:
    arg: StateFormula


@dataclass(frozen=True)
class EventuallyGlobally:
    arg: StateFormula


PathFormula = Union[Next, Until, BoundedUntil, Eventually, Globally, EventuallyGlobally]


def or_(a: StateFormula, b: StateFormula) -> StateFormula:
    return Not(And(Not(a), Not(b)))


def implies(a: StateFormula, b: StateFormula) -> StateFormula:
    return Not(And(a, Not(b)))


# -- printing ---------------------------------------------------------------

def _num(p: float) -> str:
    return repr(float(p))


def _bound(b: Bound) -> str:
    return QUERY if b.is_query else f"{b.op}{_num(b.p)}"


def to_text(f) -> str:
    """Concrete syntax that parses back to an identical tree."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + to_text(f.arg)
    if isinstance(f, And):
        return f"({to_text(f.left)} & {to_text(f.right)})"
    if isinstance(f, ForAllGlobally):
        return "AG " + to_text(f.arg)
    if isinstance(f, ProbOp):
        return f"P{_bound(f.bound)} [ {to_text(f.path)} ]"
    if isinstance(f, SteadyOp):
        return f"S{_bound(f.bound)} [ {to_text(f.arg)} ]"
    if isinstance(f, Next):
        return "X " + to_text(f.arg)
    if isinstance(f, Until):
        return f"{to_text(f.left)} U {to_text(f.right)}"
    if isinstance(f, BoundedUntil):
        return f"{to_text(f.left)} U<={f.steps} {to_text(f.right)}"
    if isinstance(f, Eventually):
        return "F " + to_text(f.arg)
    if isinstance(f, Globally):
        return "G " + to_text(f.arg)
    if isinstance(f, EventuallyGlobally):
        return "F G " + to_text(f.arg)
    raise TypeError(f"not a formula: {f!r}")


# -- parsing ----------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)
  | (?P<op>=>|>=|<=|=\?|[!&|()\[\]<>])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)

_KEYWORDS = {"true", "false", "P", "S", "X", "F", "G", "U", "AG"}


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num', 'op', 'ident', 'kw', 'end'
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            word = m.group()
            if kind == "ident" and word in _KEYWORDS:
                kind = "kw"
            out.append(_Tok(kind, word, pos))
        pos = m.end()
    out.append(_Tok("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.pos, expected)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "kw"):
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            self.fail([repr(text)])

    def state(self) -> StateFormula:
        left = self.disj()
        if self.accept("=>"):
            return implies(left, self.state())
        return left

    def disj(self) -> StateFormula:
        f = self.conj()
        while self.accept("|"):
            f = or_(f, self.conj())
        return f

    def conj(self) -> StateFormula:
        f = self.unary()
        while self.accept("&"):
            f = And(f, self.unary())
        return f

    def unary(self) -> StateFormula:
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("AG"):
            return ForAllGlobally(self.unary())
        return self.atom()

    def atom(self) -> StateFormula:
        t = self.tok
        if self.accept("true"):
            return TrueF()
        if self.accept("false"):
            return Not(TrueF())
        if t.kind == "ident":
            self.i += 1
            return Atom(t.text)
        if self.accept("("):
            f = self.state()
            self.expect(")")
            return f
        if self.accept("P"):
            b = self.bound()
            self.expect("[")
            path = self.path()
            self.expect("]")
            return ProbOp(b, path)
        if self.accept("S"):
            b = self.bound()
            self.expect("[")
            f = self.state()
            self.expect("]")
            return SteadyOp(b, f)
        self.fail(["'true'", "'false'", "label", "'('", "'!'", "'AG'", "'P'", "'S'"])

    def bound(self) -> Bound:
        if self.accept(QUERY):
            return Bound(QUERY)
        for op in COMPARISONS:
            if self.accept(op):
                t = self.tok
                if t.kind != "num":
                    self.fail(["probability"])
                self.i += 1
                p = float(t.text)
                if not 0.0 <= p <= 1.0:
                    raise ParseError(f"probability bound {t.text} outside [0, 1]", t.pos)
                return Bound(op, p)
        self.fail(["'>='", "'>'", "'<='", "'<'", "'=?'"])

    def path(self) -> PathFormula:
        if self.accept("X"):
            return Next(self.state())
        if self.accept("F"):
            if self.accept("G"):
                return EventuallyGlobally(self.state())
            return Eventually(self.state())
        if self.accept("G"):
            return Globally(self.state())
        left = self.state()
        if not self.accept("U"):
            self.fail(["'U'"])
        if self.accept("<="):
            t = self.tok
            if t.kind != "num" or not t.text.isdigit():
                self.fail(["step bound"])
            self.i += 1
            return BoundedUntil(left, self.state(), int(t.text))
        return Until(left, self.state())


def parse_formula(text: str) -> StateFormula:
    p = _Parser(text)
    f = p.state()
    if p.tok.kind != "end":
        p.fail(["end of input"])
    return f


def parse_properties(text: str) -> list[tuple[int, str, StateFormula]]:
    """Parse a properties file: one formula per line, ``#`` starts a comment."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append((lineno, line, parse_formula(line)))
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}", exc.position, exc.expected) from None
    return out
