"""Deterministic finite automata for LTL_f formulas.

Formulas are translated by progression: a state is a canonical residual
formula, reading a letter progresses it, and a state accepts when its
residual holds on the empty suffix.
"""

from __future__ import annotations

import json
from collections import deque
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from barrierltl.formula import (
    FALSE,
    TRUE,
    Always,
    And,
    Eventually,
    Formula,
    Next,
    Not,
    Or,
    Until,
    atoms,
    to_nnf,
)

__all__ = [
    "Dfa",
    "DfaError",
    "StateCapExceeded",
    "progress",
    "empty_accepts",
    "canonical",
    "translate",
    "minimize",
    "export_dot",
]

DEFAULT_STATE_CAP = 10_000

EVENTUALLY_TRUE = Eventually(TRUE)


class DfaError(ValueError):
    pass


class StateCapExceeded(RuntimeError):
    pass


class Dfa:
    """Total deterministic automaton over an alphabet of proposition names.

    ``delta`` maps ``(state, letter)`` to the successor state.  Several
    initial states are allowed; a word is accepted if the run from any of
    them ends in an accepting state.
    """

    def __init__(
        self,
        states: Sequence[str],
        initial: Iterable[str],
        alphabet: Sequence[str],
        delta: Mapping[tuple[str, str], str],
        accepting: Iterable[str],
        annotations: Mapping[str, Formula] | None = None,
    ):
        self.states = tuple(states)
        self.initial = tuple(initial)
        self.alphabet = tuple(alphabet)
        self.delta = dict(delta)
        self.accepting = frozenset(accepting)
        self.annotations = dict(annotations or {})
        self._check()

    def _check(self) -> None:
        known = set(self.states)
        if len(known) != len(self.states):
            raise DfaError("duplicate state names")
        if len(set(self.alphabet)) != len(self.alphabet) or not self.alphabet:
            raise DfaError("alphabet must be non-empty and duplicate free")
        if not self.initial:
            raise DfaError("at least one initial state required")
        for q in self.initial:
            if q not in known:
                raise DfaError(f"unknown initial state {q!r}")
        for q in self.accepting:
            if q not in known:
                raise DfaError(f"unknown accepting state {q!r}")
        for (q, p), r in self.delta.items():
            if q not in known or r not in known:
                raise DfaError(f"transition {q!r} -{p}-> {r!r} uses an unknown state")
            if p not in self.alphabet:
                raise DfaError(f"transition label {p!r} not in alphabet")
        for q in self.states:
            for p in self.alphabet:
                if (q, p) not in self.delta:
                    raise DfaError(f"missing transition from {q!r} on {p!r}")

    def __repr__(self):
        return (
            f"Dfa(states={len(self.states)}, initial={list(self.initial)}, "
            f"accepting={sorted(self.accepting)})"
        )

    def __len__(self):
        return len(self.states)

    def step(self, q: str, letter: str) -> str:
        return self.delta[(q, letter)]

    def run(self, q: str, word: Iterable[str]) -> str:
        for letter in word:
            q = self.delta[(q, letter)]
        return q

    def accepts(self, word: Sequence[str]) -> bool:
        return any(self.run(q, word) in self.accepting for q in self.initial)

    def edge_labels(self) -> dict[tuple[str, str], frozenset[str]]:
        """Letters enabling each transition, keyed by ``(source, target)``."""
        out: dict[tuple[str, str], set[str]] = {}
        for q in self.states:
            for p in self.alphabet:
                out.setdefault((q, self.delta[(q, p)]), set()).add(p)
        return {k: frozenset(v) for k, v in out.items()}

    def reachable(self) -> "Dfa":
        """Drop states not reachable from an initial state."""
        seen = list(dict.fromkeys(self.initial))
        marked = set(seen)
        i = 0
        while i < len(seen):
            q = seen[i]
            i += 1
            for p in self.alphabet:
                r = self.delta[(q, p)]
                if r not in marked:
                    marked.add(r)
                    seen.append(r)
        keep = [q for q in self.states if q in marked]
        return Dfa(
            keep,
            self.initial,
            self.alphabet,
            {k: v for k, v in self.delta.items() if k[0] in marked},
            self.accepting & marked,
            {q: f for q, f in self.annotations.items() if q in marked},
        )

    def to_json(self) -> dict:
        edges = [
            {"from": q, "to": r, "letters": sorted(ls, key=self.alphabet.index)}
            for (q, r), ls in sorted(
                self.edge_labels().items(),
                key=lambda kv: (self.states.index(kv[0][0]), self.states.index(kv[0][1])),
            )
        ]
        out = {
            "states": list(self.states),
            "initial": list(self.initial),
            "accepting": [q for q in self.states if q in self.accepting],
            "alphabet": list(self.alphabet),
            "edges": edges,
        }
        if self.annotations:
            out["annotations"] = {q: str(f) for q, f in self.annotations.items()}
        return out

    @classmethod
    def from_json(cls, data: Mapping | str, alphabet: Sequence[str] | None = None) -> "Dfa":
        if isinstance(data, str):
            data = json.loads(data)
        for key in ("states", "initial", "accepting", "edges"):
            if key not in data:
                raise DfaError(f"DFA JSON is missing {key!r}")
        if alphabet is None:
            alphabet = data.get("alphabet")
        if alphabet is None:
            seen: dict[str, None] = {}
            for e in data["edges"]:
                for p in e["letters"]:
                    seen.setdefault(p, None)
            alphabet = sorted(seen)
        delta = {}
        for e in data["edges"]:
            for p in e["letters"]:
                key = (e["from"], p)
                if key in delta and delta[key] != e["to"]:
                    raise DfaError(f"nondeterministic transition from {e['from']!r} on {p!r}")
                delta[key] = e["to"]
        return cls(data["states"], data["initial"], alphabet, delta, data["accepting"])

    def to_dot(self) -> str:
        return export_dot(self)


# --------------------------------------------------------------------------
# progression


def progress(f: Formula, letter: str) -> Formula:
    """Residual obligation on the rest of the trace after reading ``letter``."""
    return canonical(_prog(f, letter))


def _prog(f: Formula, p: str) -> Formula:
    op = f.op
    if op in ("true", "false"):
        return f
    if op == "atom":
        return TRUE if f.name == p else FALSE
    if op == "not":
        return Not(_prog(f.args[0], p))
    if op == "and":
        return And(_prog(f.args[0], p), _prog(f.args[1], p))
    if op == "or":
        return Or(_prog(f.args[0], p), _prog(f.args[1], p))
    if op == "next":
        return And(f.args[0], EVENTUALLY_TRUE)
    if op == "always":
        return And(_prog(f.args[0], p), f)
    if op == "eventually":
        return Or(_prog(f.args[0], p), f)
    if op == "until":
        a, b = f.args
        return Or(_prog(b, p), And(_prog(a, p), f))
    raise ValueError(f"unknown operator {op!r}")


def empty_accepts(f: Formula) -> bool:
    """Truth value of ``f`` on the empty suffix."""
    op = f.op
    if op == "true":
        return True
    if op in ("false", "atom", "next", "eventually", "until"):
        return False
    if op == "always":
        return True
    if op == "not":
        return not empty_accepts(f.args[0])
    if op == "and":
        return empty_accepts(f.args[0]) and empty_accepts(f.args[1])
    if op == "or":
        return empty_accepts(f.args[0]) or empty_accepts(f.args[1])
    raise ValueError(f"unknown operator {op!r}")


def canonical(f: Formula) -> Formula:
    """Negation normal form plus syntactic simplification.

    Boolean structure is put in disjunctive normal form over temporal and
    literal leaves, with complementary clauses dropped and subsumed clauses
    absorbed.  Progression only ever creates leaves from a finite closure, so
    this keeps the set of residuals finite.  Equivalent residuals may still
    differ syntactically; minimisation merges those.
    """
    return _simp(to_nnf(f))


@lru_cache(maxsize=65536)
def _simp(f: Formula) -> Formula:
    op = f.op
    if op in ("true", "false", "atom", "not"):
        return f
    if op in ("and", "or"):
        return _build(_dnf(f))
    if op == "next":
        a = _simp(f.args[0])
        return FALSE if a == FALSE else Next(a)
    if op == "always":
        a = _simp(f.args[0])
        if a == TRUE:
            return TRUE
        if a.op == "always":
            return a
        return Always(a)
    if op == "eventually":
        a = _simp(f.args[0])
        if a == FALSE:
            return FALSE
        if a.op == "eventually":
            return a
        return Eventually(a)
    if op == "until":
        a, b = (_simp(x) for x in f.args)
        if b == FALSE:
            return FALSE
        if a == TRUE:
            return _simp(Eventually(b))
        return Until(a, b)
    raise ValueError(f"unknown operator {op!r}")


def _dnf(f: Formula) -> frozenset:
    """Clauses (frozensets of leaves) whose disjunction is ``f``."""
    if f.op == "or":
        clauses = _dnf(f.args[0]) | _dnf(f.args[1])
    elif f.op == "and":
        left, right = _dnf(f.args[0]), _dnf(f.args[1])
        clauses = frozenset(a | b for a in left for b in right)
    else:
        g = _simp(f)
        if g == TRUE:
            return frozenset([frozenset()])
        if g == FALSE:
            return frozenset()
        if g.op in ("and", "or"):
            return _dnf(g)
        return frozenset([frozenset([g])])
    # drop contradictory clauses, then absorb supersets
    clauses = [c for c in clauses if not any(g.op == "not" and g.args[0] in c for g in c)]
    clauses.sort(key=len)
    kept: list[frozenset] = []
    for c in clauses:
        if not any(k <= c for k in kept):
            kept.append(c)
    return frozenset(kept)


def _chain(op: str, items: list[Formula]) -> Formula:
    out = items[-1]
    for g in reversed(items[:-1]):
        out = Formula(op, (g, out))
    return out


def _build(clauses: frozenset) -> Formula:
    if not clauses:
        return FALSE
    if frozenset() in clauses:
        return TRUE
    conj = [_chain("and", sorted(c, key=_sort_key)) for c in clauses]
    return _chain("or", sorted(conj, key=_sort_key))


def _sort_key(f: Formula):
    return (f.op, str(f))


_INIT = object()


def translate(
    f: Formula,
    props: Sequence[str] | None = None,
    max_states: int = DEFAULT_STATE_CAP,
) -> Dfa:
    """Build a DFA accepting exactly the non-empty words that satisfy ``f``.

    States are named ``q0, q1, ...`` in breadth-first discovery order and
    annotated with their residual formula.
    """
    alphabet = tuple(props) if props is not None else tuple(sorted(atoms(f)))
    if not alphabet:
        raise DfaError("empty alphabet; pass props explicitly")
    missing = atoms(f) - set(alphabet)
    if missing:
        raise DfaError(f"formula uses undeclared propositions {sorted(missing)}")
    start = canonical(f)
    # the initial state stands for "nothing read yet"; it is kept apart
    # from the residual of ``f`` so the empty word is never accepted
    names: dict = {_INIT: "q0"}
    order: list = [_INIT]
    delta = {}
    queue = deque([_INIT])
    while queue:
        g = queue.popleft()
        for p in alphabet:
            h = progress(start if g is _INIT else g, p)
            if h not in names:
                if len(names) >= max_states:
                    raise StateCapExceeded(
                        f"more than {max_states} residual formulas; formula too large"
                    )
                names[h] = f"q{len(names)}"
                order.append(h)
                queue.append(h)
            delta[(names[g], p)] = names[h]
    accepting = [names[g] for g in order if g is not _INIT and empty_accepts(g)]
    return Dfa(
        [names[g] for g in order],
        ["q0"],
        alphabet,
        delta,
        accepting,
        {names[g]: (start if g is _INIT else g) for g in order},
    )


def minimize(dfa: Dfa, rename: bool = True) -> Dfa:
    """Merge language-equivalent states by partition refinement.

    Unreachable states are pruned first.  With ``rename`` the states of the
    result are called ``q0, q1, ...`` in breadth-first order from the initial
    states; otherwise each block keeps the name of its first member.
    """
    dfa = dfa.reachable()
    block = {q: int(q in dfa.accepting) for q in dfa.states}
    n_blocks = len(set(block.values()))
    while True:
        sigs: dict[tuple, int] = {}
        new = {}
        for q in dfa.states:
            sig = (block[q],) + tuple(block[dfa.delta[(q, p)]] for p in dfa.alphabet)
            new[q] = sigs.setdefault(sig, len(sigs))
        block = new
        if len(sigs) == n_blocks:
            break
        n_blocks = len(sigs)

    rep: dict[int, str] = {}
    for q in dfa.states:
        rep.setdefault(block[q], q)
    # breadth-first renaming for stable, readable output
    names: dict[int, str] = {}
    queue = deque()
    for q in dfa.initial:
        b = block[q]
        if b not in names:
            names[b] = f"q{len(names)}"
            queue.append(b)
    while queue:
        b = queue.popleft()
        for p in dfa.alphabet:
            c = block[dfa.delta[(rep[b], p)]]
            if c not in names:
                names[c] = f"q{len(names)}"
                queue.append(c)
    if rename:
        states = sorted(names.values(), key=lambda s: int(s[1:]))
    else:
        names = {b: rep[b] for b in names}
        states = [q for q in dfa.states if q in set(names.values())]
    inv = {v: k for k, v in names.items()}
    delta = {
        (names[b], p): names[block[dfa.delta[(rep[b], p)]]]
        for b in names
        for p in dfa.alphabet
    }
    accepting = [s for s in states if rep[inv[s]] in dfa.accepting]
    initial = list(dict.fromkeys(names[block[q]] for q in dfa.initial))
    return Dfa(states, initial, dfa.alphabet, delta, accepting)


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(dfa: Dfa) -> str:
    """Graphviz rendering; accepting states are double circles, initial
    states bold."""
    lines = ["digraph dfa {", "  rankdir=LR;"]
    for q in dfa.states:
        attrs = [f"shape={'doublecircle' if q in dfa.accepting else 'circle'}"]
        if q in dfa.initial:
            attrs.append("style=bold")
        lines.append(f"  {_dot_id(q)} [{', '.join(attrs)}];")
    for (q, r), letters in dfa.edge_labels().items():
        label = ",".join(p for p in dfa.alphabet if p in letters)
        lines.append(f"  {_dot_id(q)} -> {_dot_id(r)} [label={_dot_id(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
