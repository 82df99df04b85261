"""LTL over finite traces: syntax tree, parser, normal forms and semantics.

Letters of a trace are single proposition names (the labelling partitions
the state space), so at every position exactly one atom holds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

__all__ = [
    "Formula",
    "FormulaSyntaxError",
    "TRUE",
    "FALSE",
    "LAST",
    "Atom",
    "Not",
    "And",
    "Or",
    "Next",
    "Eventually",
    "Always",
    "Until",
    "Implies",
    "parse_formula",
    "to_nnf",
    "is_safe",
    "evaluate",
    "atoms",
    "size",
]

_BINARY = ("and", "or", "until")
_UNARY = ("not", "next", "eventually", "always")


@dataclass(frozen=True)
class Formula:
    """Immutable LTL_f syntax tree node.

    ``op`` is one of ``true``, ``false``, ``atom``, ``not``, ``and``, ``or``,
    ``next``, ``eventually``, ``always``, ``until``.  Structural equality and
    hashing come from the dataclass, so normalised formulas can serve as
    automaton state keys.
    """

    op: str
    args: tuple["Formula", ...] = ()
    name: str | None = None
    _hash: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.op, self.args, self.name)))

    def __hash__(self):
        return self._hash

    def __str__(self):
        return _show(self)

    def __repr__(self):
        return f"Formula({_show(self)!r})"

    # operator sugar for building formulas in code
    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


TRUE = Formula("true")
FALSE = Formula("false")


def Atom(name: str) -> Formula:
    return Formula("atom", name=name)


def Not(f: Formula) -> Formula:
    return Formula("not", (f,))


def And(a: Formula, b: Formula) -> Formula:
    return Formula("and", (a, b))


def Or(a: Formula, b: Formula) -> Formula:
    return Formula("or", (a, b))


def Next(f: Formula) -> Formula:
    return Formula("next", (f,))


def Eventually(f: Formula) -> Formula:
    return Formula("eventually", (f,))


def Always(f: Formula) -> Formula:
    return Formula("always", (f,))


def Until(a: Formula, b: Formula) -> Formula:
    return Formula("until", (a, b))


def Implies(a: Formula, b: Formula) -> Formula:
    return Or(Not(a), b)


# Holds exactly at the last position of a trace (the dual of strong next).
LAST = Not(Next(TRUE))


def atoms(f: Formula) -> frozenset[str]:
    if f.op == "atom":
        return frozenset([f.name])
    out: frozenset[str] = frozenset()
    for a in f.args:
        out |= atoms(a)
    return out


def size(f: Formula) -> int:
    """Number of nodes in the syntax tree."""
    return 1 + sum(size(a) for a in f.args)


# --------------------------------------------------------------------------
# printing

_PREC = {"or": 2, "and": 3, "until": 4}
_UNARY_TOKEN = {"not": "!", "next": "X ", "eventually": "F ", "always": "G "}


def _show(f: Formula) -> str:
    if f.op in ("true", "false"):
        return f.op
    if f.op == "atom":
        return f.name
    if f.op in _UNARY_TOKEN:
        inner = _show(f.args[0])
        if f.args[0].op in _BINARY:
            inner = f"({inner})"
        return _UNARY_TOKEN[f.op] + inner
    prec = _PREC[f.op]
    parts = []
    for i, a in enumerate(f.args):
        s = _show(a)
        ap = _PREC.get(a.op)
        # until is right associative, and/or are left associative
        needs = ap is not None and (
            ap < prec or (ap == prec and (i == 0 if f.op == "until" else i == 1))
        )
        parts.append(f"({s})" if needs else s)
    sym = {"or": " | ", "and": " & ", "until": " U "}[f.op]
    return sym.join(parts)


# --------------------------------------------------------------------------
# parsing


class FormulaSyntaxError(ValueError):
    """Raised for malformed formula text.

    ``position`` is the 1-based column where the problem was detected.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


_TOKEN_RE = re.compile(r"\s*(?:(->)|([!&|()])|([A-Za-z_][A-Za-z0-9_]*))")
_KEYWORDS = {"X", "F", "G", "U", "true", "false"}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1
            while col <= len(text) and text[col - 1].isspace():
                col += 1
            raise FormulaSyntaxError(f"unexpected character {text[col - 1]!r}", col)
        tok = m.group(1) or m.group(2) or m.group(3)
        start = m.start(1) if m.group(1) else m.start(2) if m.group(2) else m.start(3)
        tokens.append((tok, start + 1))
        pos = m.end()
    tokens.append(("<end>", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, props: frozenset[str]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.props = props

    def peek(self) -> str:
        return self.tokens[self.i][0]

    def pos(self) -> int:
        return self.tokens[self.i][1]

    def take(self) -> str:
        tok = self.tokens[self.i][0]
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        if self.peek() != tok:
            raise FormulaSyntaxError(f"expected {tok!r}", self.pos())
        self.take()

    def parse(self) -> Formula:
        f = self.implication()
        if self.peek() != "<end>":
            raise FormulaSyntaxError(f"unexpected token {self.peek()!r}", self.pos())
        return f

    def implication(self) -> Formula:
        lhs = self.disjunction()
        if self.peek() == "->":
            self.take()
            return Implies(lhs, self.implication())
        return lhs

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.until()
        while self.peek() == "&":
            self.take()
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        lhs = self.unary()
        if self.peek() == "U":
            self.take()
            return Until(lhs, self.until())
        return lhs

    def unary(self) -> Formula:
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok in ("X", "F", "G"):
            self.take()
            inner = self.unary()
            return {"X": Next, "F": Eventually, "G": Always}[tok](inner)
        return self.primary()

    def primary(self) -> Formula:
        tok, pos = self.tokens[self.i]
        if tok == "(":
            self.take()
            f = self.implication()
            self.expect(")")
            return f
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        if tok == "<end>":
            raise FormulaSyntaxError("unexpected end of formula", pos)
        if tok in _KEYWORDS or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            raise FormulaSyntaxError(f"unexpected token {tok!r}", pos)
        if tok not in self.props:
            raise FormulaSyntaxError(f"undeclared proposition {tok!r}", pos)
        self.take()
        return Atom(tok)


def parse_formula(text: str, props: Iterable[str]) -> Formula:
    """Parse ``text`` into a :class:`Formula` over the declared ``props``.

    Operators, loosest first: ``->``, ``|``, ``&``, ``U``, then the prefix
    operators ``!``, ``X``, ``F``, ``G``.
    """
    props = frozenset(props)
    if not props:
        raise ValueError("at least one proposition must be declared")
    return _Parser(text, props).parse()


# --------------------------------------------------------------------------
# negation normal form


def to_nnf(f: Formula) -> Formula:
    """Push negations down to atoms.

    Strong next has no positive dual among the available operators, so
    ``!X a`` becomes ``LAST | X !a`` where ``LAST = !X true`` is kept as the
    one negated non-atomic leaf.
    """
    return _nnf(f, False)


@lru_cache(maxsize=65536)
def _nnf(f: Formula, neg: bool) -> Formula:
    op = f.op
    if op == "true":
        return FALSE if neg else TRUE
    if op == "false":
        return TRUE if neg else FALSE
    if op == "atom":
        return Not(f) if neg else f
    if op == "not":
        return _nnf(f.args[0], not neg)
    if op == "and":
        a, b = (_nnf(x, neg) for x in f.args)
        return Or(a, b) if neg else And(a, b)
    if op == "or":
        a, b = (_nnf(x, neg) for x in f.args)
        return And(a, b) if neg else Or(a, b)
    if op == "next":
        if not neg:
            return Next(_nnf(f.args[0], False))
        if f.args[0] == TRUE:
            return LAST
        return Or(LAST, Next(_nnf(f.args[0], True)))
    if op == "eventually":
        inner = _nnf(f.args[0], neg)
        return Always(inner) if neg else Eventually(inner)
    if op == "always":
        inner = _nnf(f.args[0], neg)
        return Eventually(inner) if neg else Always(inner)
    if op == "until":
        a, b = f.args
        if not neg:
            return Until(_nnf(a, False), _nnf(b, False))
        na, nb = _nnf(a, True), _nnf(b, True)
        # !(a U b) == G !b | (!b U (!a & !b))
        return Or(Always(nb), Until(nb, And(na, nb)))
    raise ValueError(f"unknown operator {op!r}")


_SAFE_OPS = {"true", "false", "atom", "and", "or", "next", "always"}


def is_safe(f: Formula) -> bool:
    """True iff the negation normal form only uses next and always."""
    return _safe(to_nnf(f))


def _safe(f: Formula) -> bool:
    if f.op == "not":
        return f.args[0].op == "atom" or f == LAST
    if f.op not in _SAFE_OPS:
        return False
    return all(_safe(a) for a in f.args)


# --------------------------------------------------------------------------
# semantics


def evaluate(f: Formula, trace: Sequence[str]) -> bool:
    """Return whether the non-empty ``trace`` satisfies ``f`` at position 0."""
    trace = tuple(trace)
    if not trace:
        raise ValueError("traces must be non-empty")
    return _truth(f, trace, {})[0]


def _truth(f: Formula, trace: tuple, memo: dict) -> list[bool]:
    got = memo.get(f)
    if got is not None:
        return got
    n = len(trace)
    op = f.op
    if op == "true":
        out = [True] * n
    elif op == "false":
        out = [False] * n
    elif op == "atom":
        out = [s == f.name for s in trace]
    elif op == "not":
        out = [not v for v in _truth(f.args[0], trace, memo)]
    elif op == "and":
        a, b = (_truth(x, trace, memo) for x in f.args)
        out = [x and y for x, y in zip(a, b)]
    elif op == "or":
        a, b = (_truth(x, trace, memo) for x in f.args)
        out = [x or y for x, y in zip(a, b)]
    elif op == "next":
        a = _truth(f.args[0], trace, memo)
        out = a[1:] + [False]
    elif op in ("eventually", "always", "until"):
        if op == "until":
            a, b = (_truth(x, trace, memo) for x in f.args)
        elif op == "eventually":
            a, b = [True] * n, _truth(f.args[0], trace, memo)
        else:
            a, b = _truth(f.args[0], trace, memo), None
        out = [False] * n
        if op == "always":
            acc = True
            for i in range(n - 1, -1, -1):
                acc = acc and a[i]
                out[i] = acc
        else:
            acc = False
            for i in range(n - 1, -1, -1):
                acc = b[i] or (a[i] and acc)
                out[i] = acc
    else:
        raise ValueError(f"unknown operator {op!r}")
    memo[f] = out
    return out
