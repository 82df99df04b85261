"""Monte Carlo estimates of satisfaction probabilities."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import beta

from barrierltl.algebra import Labeling, Region, StochasticSystem
from barrierltl.formula import Formula, evaluate

__all__ = ["SimConfig", "Estimate", "clopper_pearson", "simulate_trace", "simulate", "estimate", "dump_csv"]

RNG_ALGORITHM = "numpy.random.PCG64"


@dataclass
class SimConfig:
    n_steps: int
    trials: int = 10_000
    seed: int = 0
    initial: Region | np.ndarray | Sequence[float] | None = None
    confidence: float = 0.9999

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("N must be at least 1")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.initial is None:
            raise ValueError("an initial state or region is required")


@dataclass
class Estimate:
    successes: int
    trials: int
    interval: tuple[float, float]
    confidence: float
    seed: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    def to_json(self) -> dict:
        return {
            "successes": self.successes,
            "trials": self.trials,
            "rate": self.rate,
            "interval": list(self.interval),
            "confidence": self.confidence,
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "method": "Clopper-Pearson",
        }


def clopper_pearson(k: int, n: int, confidence: float) -> tuple[float, float]:
    """Exact two-sided binomial interval."""
    if n < 1 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n >= 1")
    a = 1.0 - confidence
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def simulate(sys: StochasticSystem, x0: np.ndarray, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """States of many trajectories at once: shape (runs, N, n)."""
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    out = np.empty((x.shape[0], n_steps, sys.n))
    out[:, 0] = x
    for k in range(1, n_steps):
        w = sys.noise.sample(rng, x.shape[0])
        x = sys.step(x, w)
        out[:, k] = x
    return out


def simulate_trace(sys: StochasticSystem, labels: Labeling, x0, n_steps: int, rng) -> tuple[np.ndarray, list[str]]:
    """One trajectory ``x(0..N-1)`` and its trace of labels."""
    states = simulate(sys, np.asarray(x0, dtype=float)[None, :], n_steps, rng)[0]
    idx = labels.label_indices(states)
    return states, [labels.props[i] for i in idx]


def _initial_states(cfg: SimConfig, n: int, rng) -> np.ndarray:
    if isinstance(cfg.initial, Region):
        return cfg.initial.sample(rng, cfg.trials)
    x0 = np.asarray(cfg.initial, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"initial state must have {n} coordinates")
    return np.tile(x0, (cfg.trials, 1))


def run_traces(sys: StochasticSystem, labels: Labeling, cfg: SimConfig):
    """States and label indices of ``cfg.trials`` traces."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    x0 = _initial_states(cfg, sys.n, rng)
    states = simulate(sys, x0, cfg.n_steps, rng)
    idx = labels.label_indices(states.reshape(-1, sys.n)).reshape(cfg.trials, cfg.n_steps)
    return states, idx


def estimate(sys: StochasticSystem, labels: Labeling, phi: Formula, cfg: SimConfig) -> Estimate:
    _, idx = run_traces(sys, labels, cfg)
    # many traces repeat, so evaluate each distinct word once
    words, inverse = np.unique(idx, axis=0, return_inverse=True)
    ok = np.array([evaluate(phi, [labels.props[i] for i in w]) for w in words])
    k = int(ok[np.asarray(inverse).ravel()].sum())
    return Estimate(k, cfg.trials, clopper_pearson(k, cfg.trials, cfg.confidence), cfg.confidence, cfg.seed)


def dump_csv(path, sys: StochasticSystem, labels: Labeling, cfg: SimConfig) -> None:
    states, idx = run_traces(sys, labels, cfg)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trace", "step", *sys.state_vars, "label"])
        for r in range(states.shape[0]):
            for k in range(states.shape[1]):
                w.writerow([r, k, *(f"{v:.10g}" for v in states[r, k]), labels.props[idx[r, k]]])
