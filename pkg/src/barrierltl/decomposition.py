"""Split the accepting behaviour of a DFA into sequential reachability tasks.

An accepting run without self-loop steps, ``q0 -> q1 -> ... -> qn``, is cut
into overlapping triples ``(q_i, q_{i+1}, q_{i+2})``; each triple asks how
likely the system is to move from the region labelled by the first edge to
the region labelled by the second within a horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from barrierltl.automaton import Dfa

__all__ = [
    "AcceptingRun",
    "ReachTask",
    "self_loop_states",
    "graph_edges",
    "accepting_runs",
    "reach_tasks",
    "unique_tasks",
]


@dataclass(frozen=True)
class AcceptingRun:
    states: tuple[str, ...]
    # letters of each step: letters[i] moves states[i] to states[i + 1]
    letters: tuple[frozenset[str], ...]

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "letters": [sorted(ls) for ls in self.letters],
        }


@dataclass(frozen=True)
class ReachTask:
    """Reach-avoid triple ``(q, q', q'', T)``.

    ``source`` letters label the region the system starts in (edge q -> q'),
    ``target`` letters the region it must not reach (edge q' -> q'').
    """

    q: str
    q1: str
    q2: str
    horizon: int
    source: frozenset[str]
    target: frozenset[str]

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.q, self.q1, self.q2, self.horizon)

    def to_json(self) -> dict:
        return {
            "triple": [self.q, self.q1, self.q2],
            "horizon": self.horizon,
            "source": sorted(self.source),
            "target": sorted(self.target),
        }


def self_loop_states(dfa: Dfa) -> frozenset[str]:
    return frozenset(
        q for q in dfa.states if any(dfa.delta[(q, p)] == q for p in dfa.alphabet)
    )


def graph_edges(dfa: Dfa) -> dict[str, list[tuple[str, frozenset[str]]]]:
    """Successor lists of the automaton graph with self-loops removed."""
    labels = dfa.edge_labels()
    out: dict[str, list[tuple[str, frozenset[str]]]] = {q: [] for q in dfa.states}
    for (q, r), letters in labels.items():
        if q != r:
            out[q].append((r, letters))
    for q in out:
        out[q].sort(key=lambda e: dfa.states.index(e[0]))
    return out


def _walk(dfa: Dfa, max_len: int) -> Iterator[AcceptingRun]:
    succ = graph_edges(dfa)
    # explicit stack of (path, letters, next successor index); no visited
    # set, since runs may come back to a state after leaving it
    for q0 in dict.fromkeys(dfa.initial):
        path = [q0]
        letters: list[frozenset[str]] = []
        if q0 in dfa.accepting:
            yield AcceptingRun((q0,), ())
        stack = [0]
        while stack:
            i = stack[-1]
            edges = succ[path[-1]]
            if i >= len(edges) or len(path) >= max_len:
                stack.pop()
                path.pop()
                if letters:
                    letters.pop()
                continue
            stack[-1] = i + 1
            r, ls = edges[i]
            path.append(r)
            letters.append(ls)
            stack.append(0)
            if r in dfa.accepting:
                yield AcceptingRun(tuple(path), tuple(letters))


def accepting_runs(dfa: Dfa, n_steps: int) -> list[AcceptingRun]:
    """Accepting runs of at most ``n_steps + 1`` states with no two equal
    consecutive states, in depth-first order."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    return list(_walk(dfa, n_steps + 1))


def reach_tasks(run: AcceptingRun, dfa: Dfa, n_steps: int) -> list[ReachTask]:
    """Consecutive triples of ``run`` annotated with their horizon.

    The horizon is ``n_steps + 2 - len(run)`` when the middle state has a
    self-loop (the system may linger there), otherwise a single step.
    """
    loops = self_loop_states(dfa)
    q = run.states
    long_horizon = n_steps + 2 - len(q)
    tasks = []
    for i in range(len(q) - 2):
        horizon = long_horizon if q[i + 1] in loops else 1
        tasks.append(
            ReachTask(q[i], q[i + 1], q[i + 2], horizon, run.letters[i], run.letters[i + 1])
        )
    return tasks


def unique_tasks(task_lists: list[list[ReachTask]]) -> list[ReachTask]:
    """Distinct tasks across runs, in first-seen order."""
    seen: dict[tuple, ReachTask] = {}
    for tasks in task_lists:
        for t in tasks:
            seen.setdefault((t.key, t.source, t.target), t)
    return list(seen.values())
