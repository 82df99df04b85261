"""End-to-end verification: automaton, decomposition, certificates, bound."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from barrierltl.algebra import Labeling, Region, StochasticSystem
from barrierltl.automaton import Dfa, minimize, translate
from barrierltl.certificate import Certificate, SynthesisOptions, synthesize, trivial_certificate
from barrierltl.decomposition import AcceptingRun, ReachTask, accepting_runs, reach_tasks, unique_tasks
from barrierltl.formula import Formula, Not, is_safe

__all__ = [
    "CertificateCache",
    "EngineOptions",
    "RunResult",
    "TaskResult",
    "VerificationReport",
    "combine",
    "initial_claim",
    "verify",
]

JOBS_ENV = "BARRIERLTL_JOBS"


def combine(run_bounds: Sequence[Sequence[float]]) -> float:
    """Sum over runs of the product of their task bounds, clamped to [0, 1].

    A run without tasks (two states) is handled by excluding its initial
    letters from the claim, so it adds nothing here.
    """
    total = 0.0
    for bounds in run_bounds:
        if not bounds:
            continue
        prod = 1.0
        for b in bounds:
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"task bound {b} outside [0, 1]")
            prod *= b
        total += prod
    return min(1.0, max(0.0, total))


def _region_key(r: Region | None) -> str:
    if r is None:
        return "*"
    return "|".join(";".join(str(g) for g in p.inequalities) for p in r.parts)


class CertificateCache:
    """Certificates addressed by task plus system and option fingerprint.

    With ``directory`` set, entries are also stored as JSON files there.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory else None
        self._mem: dict[str, Certificate] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(task: ReachTask, context: str) -> str:
        raw = json.dumps(
            [list(task.key), sorted(task.source), sorted(task.target), context], sort_keys=True
        )
        return hashlib.sha256(raw.encode()).hexdigest()[:24]

    def get(self, key: str) -> Certificate | None:
        got = self._mem.get(key)
        if got is None and self.directory is not None:
            path = self.directory / f"{key}.json"
            if path.exists():
                got = Certificate.from_json(json.loads(path.read_text()))
                self._mem[key] = got
        if got is None:
            self.misses += 1
        else:
            self.hits += 1
        return got

    def put(self, key: str, cert: Certificate) -> None:
        with self._lock:
            self._mem[key] = cert
            if self.directory is not None:
                self.directory.mkdir(parents=True, exist_ok=True)
                (self.directory / f"{key}.json").write_text(cert.dumps())

    def __len__(self):
        return len(self._mem)


@dataclass
class EngineOptions:
    synthesis: SynthesisOptions = field(default_factory=SynthesisOptions)
    jobs: int | None = None
    max_states: int = 10_000
    cache: CertificateCache | None = None

    def n_jobs(self) -> int:
        if self.jobs is not None:
            return max(1, self.jobs)
        return max(1, int(os.environ.get(JOBS_ENV, "1")))


@dataclass
class TaskResult:
    task: ReachTask
    cache_key: str
    bound: float
    status: str
    certificate: Certificate | None
    note: str = ""
    seconds: float = 0.0

    def to_json(self, with_certificate: bool = True) -> dict:
        out = self.task.to_json()
        out.update(
            {"cache_key": self.cache_key, "bound": self.bound, "status": self.status,
             "note": self.note, "seconds": round(self.seconds, 3)}
        )
        if with_certificate and self.certificate is not None:
            out["certificate"] = self.certificate.to_json()
        return out


@dataclass
class RunResult:
    run: AcceptingRun
    task_keys: list[str]
    bounds: list[float]
    product: float | None  # None for runs that are excluded instead

    def to_json(self) -> dict:
        return {
            **self.run.to_json(),
            "tasks": self.task_keys,
            "bounds": self.bounds,
            "product": self.product,
        }


@dataclass
class VerificationReport:
    n_steps: int
    dfa: Dfa
    runs: list[RunResult]
    tasks: dict[str, TaskResult]
    upper: float
    lower: float
    claimed_initial: list[str]
    excluded_initial: list[str]
    caveats: list[str] = field(default_factory=list)
    seconds: float = 0.0
    reference: dict = field(default_factory=dict)
    monte_carlo: dict | None = None

    @property
    def vacuous(self) -> bool:
        return self.lower <= 0.0

    def to_json(self) -> dict:
        out = {
            "n_steps": self.n_steps,
            "lower_bound": self.lower,
            "upper_bound_violation": self.upper,
            "claimed_initial_labels": self.claimed_initial,
            "excluded_initial_labels": self.excluded_initial,
            "runs": [r.to_json() for r in self.runs],
            "tasks": {k: t.to_json() for k, t in self.tasks.items()},
            "automaton": self.dfa.to_json(),
            "caveats": self.caveats,
            "seconds": round(self.seconds, 3),
        }
        if self.reference:
            out["reference"] = self.reference
        if self.monte_carlo is not None:
            out["monte_carlo"] = self.monte_carlo
        return out

    def to_text(self) -> str:
        lines = [
            f"horizon N = {self.n_steps}",
            f"automaton: {len(self.dfa.states)} states, {len(self.runs)} accepting runs",
        ]
        for r in self.runs:
            path = " -> ".join(r.run.states)
            if r.product is None:
                lines.append(f"  run {path}: excluded (initial labels {sorted(r.run.letters[0]) if r.run.letters else []})")
            else:
                bs = ", ".join(f"{b:.6g}" for b in r.bounds)
                lines.append(f"  run {path}: tasks [{bs}] product {r.product:.6g}")
        lines.append("tasks:")
        for k, t in self.tasks.items():
            q = ",".join((t.task.q, t.task.q1, t.task.q2))
            lines.append(f"  ({q}, T={t.task.horizon}) bound {t.bound:.6g} [{t.status}] {t.note}".rstrip())
        lines.append(f"P(violation) <= {self.upper:.6g}")
        lines.append(f"P(satisfaction) >= {self.lower:.6g}")
        lines.append("claimed for initial labels: " + (", ".join(self.claimed_initial) or "none"))
        if self.excluded_initial:
            lines.append("excluded initial labels: " + ", ".join(self.excluded_initial))
        for k, v in self.reference.items():
            lines.append(f"reference {k}: {v}")
        if self.monte_carlo:
            mc = self.monte_carlo
            lines.append(
                f"Monte Carlo: {mc['successes']}/{mc['trials']} "
                f"interval [{mc['interval'][0]:.6g}, {mc['interval'][1]:.6g}] at {mc['confidence']}"
            )
        for c in self.caveats:
            lines.append(f"note: {c}")
        lines.append(f"time {self.seconds:.1f} s")
        return "\n".join(lines)


def initial_claim(dfa: Dfa, props: Sequence[str], n_steps: int) -> tuple[list[str], list[str], bool]:
    """Initial labels the bound speaks for, labels excluded because one
    step already violates, and whether the empty prefix is accepting."""
    excluded: set[str] = set()
    trivial = False
    for run in accepting_runs(dfa, n_steps):
        if len(run) == 1:
            trivial = True
        elif len(run) == 2:
            excluded |= set(run.letters[0])
    claimed = [] if trivial else [p for p in props if p in dfa.alphabet and p not in excluded]
    return claimed, [p for p in props if p in excluded], trivial


def _synth_job(args):
    sys, X0, X1, X, T, opts = args
    t0 = time.perf_counter()
    cert = synthesize(sys, X0, X1, X, T, None, opts)
    return cert, time.perf_counter() - t0


def _context(sys: StochasticSystem, labels: Labeling, domain: Region | None, opts: SynthesisOptions) -> str:
    regions = ";".join(f"{p}={_region_key(labels.regions[p])}" for p in labels.props)
    return "|".join(
        [
            sys.fingerprint(),
            regions,
            _region_key(domain),
            repr(opts.schedule()),
            opts.products,
            opts.strategy,
        ]
    )


def verify(
    sys: StochasticSystem,
    labels: Labeling,
    spec: Formula | Dfa,
    n_steps: int,
    opts: EngineOptions | None = None,
    domain: Region | None = None,
    reference: dict | None = None,
) -> VerificationReport:
    """Lower-bound the probability that length-``n_steps`` traces satisfy
    ``spec``; a :class:`Dfa` argument is taken as the automaton of the
    negated property."""
    opts = opts or EngineOptions()
    if n_steps < 1:
        raise ValueError("N must be at least 1")
    t0 = time.perf_counter()
    caveats = [
        "labelled regions are assumed pairwise disjoint up to boundaries; "
        "overlaps resolve to the first listed proposition",
    ]
    if domain is not None:
        caveats.append("certificates use a bounded domain; leaving it is counted as reaching the unsafe set")
    if isinstance(spec, Dfa):
        missing = set(spec.alphabet) - set(labels.props)
        if missing:
            raise ValueError(f"automaton letters without a region: {sorted(missing)}")
        dfa = spec
    else:
        if not is_safe(spec):
            caveats.append("formula is outside the safe fragment; the bound is still computed")
        dfa = translate(Not(spec), labels.props, opts.max_states)
    dfa = minimize(dfa, rename=not isinstance(spec, Dfa))
    runs = accepting_runs(dfa, n_steps)

    syn = opts.synthesis
    context = _context(sys, labels, domain, syn)
    cache = opts.cache if opts.cache is not None else CertificateCache()

    claimed, excluded, trivial_accept = initial_claim(dfa, labels.props, n_steps)
    per_run: list[tuple[AcceptingRun, list[ReachTask]]] = [
        (run, reach_tasks(run, dfa, n_steps) if len(run) >= 3 else []) for run in runs
    ]

    results: dict[str, TaskResult] = {}
    pending = []
    for task in unique_tasks([t for _, t in per_run]):
        key = CertificateCache.key(task, context)
        if key in results:
            continue
        X0 = labels.preimage(task.source)
        X1 = labels.preimage(task.target)
        if X0 is None or X1 is None or not X0.bounded or not X1.bounded:
            results[key] = TaskResult(task, key, 1.0, "skipped", None, "unbounded region; pessimistic bound 1")
            continue
        cert = cache.get(key)
        if cert is not None:
            results[key] = TaskResult(task, key, cert.bound if cert.status != "failed" else 1.0,
                                      cert.status, cert, "cached")
            continue
        pending.append((key, task, (sys, X0, X1, domain, task.horizon, syn)))

    jobs = opts.n_jobs()
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(pending))) as pool:
            outs = list(pool.map(_synth_job, [p[2] for p in pending]))
    else:
        outs = [_synth_job(p[2]) for p in pending]
    for (key, task, _), (cert, secs) in zip(pending, outs):
        cache.put(key, cert)
        bound = 1.0 if cert.status == "failed" else cert.bound
        note = "" if cert.status != "failed" else "no certificate; pessimistic bound 1"
        results[key] = TaskResult(task, key, bound, cert.status, cert, note, secs)

    run_results = []
    for run, tasks in per_run:
        if len(run) < 3:
            run_results.append(RunResult(run, [], [], None))
            continue
        keys = [CertificateCache.key(t, context) for t in tasks]
        bounds = [results[k].bound for k in keys]
        prod = 1.0
        for b in bounds:
            prod *= b
        run_results.append(RunResult(run, keys, bounds, prod))

    upper = combine([r.bounds for r in run_results if r.product is not None])
    if trivial_accept:
        caveats.append("an initial state is accepting: every trace violates the property")
    elif not claimed:
        caveats.append("every initial label leads to a violation in one step; nothing is claimed")
    if not claimed:
        upper = 1.0
    lower = max(0.0, 1.0 - upper)
    return VerificationReport(
        n_steps,
        dfa,
        run_results,
        results,
        upper,
        lower,
        claimed,
        excluded,
        caveats,
        time.perf_counter() - t0,
        dict(reference or {}),
    )
