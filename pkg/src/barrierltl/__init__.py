"""Probabilistic verification of safe LTL_f properties for stochastic
polynomial systems using sum-of-squares barrier certificates."""

from barrierltl.formula import Formula, parse_formula, to_nnf, is_safe, evaluate
from barrierltl.automaton import Dfa, translate, minimize, progress, empty_accepts
from barrierltl.decomposition import (
    AcceptingRun,
    ReachTask,
    accepting_runs,
    reach_tasks,
    self_loop_states,
)
from barrierltl.algebra import (
    BasicSet,
    NoiseModel,
    Polynomial,
    Region,
    StochasticSystem,
    parse_poly,
)
from barrierltl.certificate import Certificate, SynthesisOptions, synthesize, post_verify
from barrierltl.engine import EngineOptions, VerificationReport, combine, verify
from barrierltl.montecarlo import SimConfig, clopper_pearson, estimate
from barrierltl.config import ProblemConfig, bundled, load_config

__version__ = "0.1.0"

__all__ = [
    "EngineOptions",
    "ProblemConfig",
    "SimConfig",
    "SynthesisOptions",
    "bundled",
    "clopper_pearson",
    "estimate",
    "load_config",
    "AcceptingRun",
    "BasicSet",
    "Certificate",
    "Dfa",
    "Formula",
    "NoiseModel",
    "Polynomial",
    "ReachTask",
    "Region",
    "StochasticSystem",
    "VerificationReport",
    "accepting_runs",
    "combine",
    "empty_accepts",
    "evaluate",
    "is_safe",
    "minimize",
    "parse_formula",
    "parse_poly",
    "post_verify",
    "progress",
    "reach_tasks",
    "self_loop_states",
    "synthesize",
    "to_nnf",
    "translate",
    "verify",
]
