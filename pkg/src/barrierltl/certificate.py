"""Barrier certificates for single reach tasks.

For a task "starting in X0, reach X1 within T steps" we look for a
polynomial ``B`` with

    B >= 0 everywhere,  B <= gamma on X0,  B >= 1 on X1,
    E[B(f(x, w))] <= B(x) + c on the domain,

so that the reach probability is at most ``gamma + c*T``.  Set membership is
handled with SOS multipliers on the defining inequalities and the whole
problem is one SDP minimising ``gamma + c*T``.

When a bounded domain ``X`` is supplied the martingale condition is only
imposed on ``X`` and ``B >= 1`` is additionally required on the complement of
``X``; leaving the domain then counts as reaching ``X1``, which keeps the
bound sound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from barrierltl.algebra import (
    BasicSet,
    Polynomial,
    Region,
    StochasticSystem,
    _PowerCache,
    compose,
    eval_poly,
    expect_noise,
)
from barrierltl.sdp import SdpInstance, SolverOptions, SdpSolution, solve_sdp, write_sdpa
from barrierltl.sos import AffinePoly, CONST, InfeasibleProgram, SosBuilder, SosConstraint

__all__ = [
    "Certificate",
    "SosProgram",
    "SynthesisOptions",
    "assemble_sos",
    "compile_sdp",
    "synthesize",
    "post_verify",
    "check_conditions",
    "export_task_sdp",
    "trivial_certificate",
]

PRODUCT_MODES = ("none", "shared", "all")


def _even_ceil(d: int) -> int:
    return d + (d % 2)


@dataclass
class Certificate:
    vars: tuple[str, ...]
    B: Polynomial
    gamma: float
    c: float
    horizon: int
    status: str = "failed"
    degrees: tuple[int, int] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        v = self.gamma + self.c * self.horizon
        if not math.isfinite(v):
            return 1.0
        return min(1.0, max(0.0, v))

    def to_json(self) -> dict:
        return {
            "vars": list(self.vars),
            "B": self.B.to_json(),
            "gamma": self.gamma,
            "c": self.c,
            "horizon": self.horizon,
            "bound": self.bound,
            "status": self.status,
            "degrees": list(self.degrees) if self.degrees else None,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Certificate":
        vars = tuple(data["vars"])
        degrees = data.get("degrees")
        return cls(
            vars,
            Polynomial.from_json(vars, data["B"]),
            float(data["gamma"]),
            float(data["c"]),
            int(data["horizon"]),
            data.get("status", "failed"),
            tuple(degrees) if degrees else None,
            dict(data.get("diagnostics") or {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def trivial_certificate(vars: Sequence[str], horizon: int, reason: str) -> Certificate:
    """``B = 1``: always valid, proves nothing (bound 1)."""
    vars = tuple(vars)
    return Certificate(
        vars, Polynomial.constant(vars, 1.0), 1.0, 0.0, horizon, "failed", None, {"reason": reason}
    )


@dataclass
class SynthesisOptions:
    """Knobs for :func:`synthesize`.

    ``degrees`` overrides the escalation schedule (2,2), (4,4), (max,max).
    Escalation stops early once a verified bound is at most ``good_enough``.
    """

    max_degree: int = 4
    degrees: tuple[tuple[int, int], ...] | None = None
    products: str = "shared"
    strategy: str = "direct"  # or "bisection"
    bisection_steps: int = 14
    samples: int = 10_000
    tol: float = 1e-6
    seed: int = 0
    good_enough: float = 1e-3
    solver: SolverOptions = field(default_factory=SolverOptions)

    def schedule(self) -> list[tuple[int, int]]:
        if self.degrees:
            return [tuple(d) for d in self.degrees]
        top = self.max_degree - self.max_degree % 2
        out = []
        for d in (2, 4, top):
            if 2 <= d <= top and (d, d) not in out:
                out.append((d, d))
        return out or [(2, 2)]


# --------------------------------------------------------------------------
# change of variables


@dataclass
class _Scaling:
    """``x = center + scale * u`` so that the regions of interest sit in
    roughly [-1, 1]^n, which keeps the SDP well conditioned."""

    vars: tuple[str, ...]
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_boxes(cls, vars, boxes) -> "_Scaling":
        n = len(vars)
        boxes = [b for b in boxes if b is not None]
        if not boxes:
            return cls(tuple(vars), np.zeros(n), np.ones(n))
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        scale = (hi - lo) / 2
        scale[scale <= 1e-12] = 1.0
        return cls(tuple(vars), (hi + lo) / 2, scale)

    def _subs(self, space, forward: bool) -> list[Polynomial]:
        out = []
        for v in space:
            x = Polynomial.variable(space, v)
            if v in self.vars:
                i = self.vars.index(v)
                if forward:
                    x = x * self.scale[i] + self.center[i]
                else:
                    x = (x - self.center[i]) * (1.0 / self.scale[i])
            out.append(x)
        return out

    def forward(self, p: Polynomial) -> Polynomial:
        """``p(x)`` rewritten in the scaled variables."""
        return compose(p, self._subs(p.vars, True))

    def backward(self, p: Polynomial) -> Polynomial:
        return compose(p, self._subs(p.vars, False))

    def box(self, box):
        if box is None:
            return None
        lo = (np.asarray(box[0]) - self.center) / self.scale
        hi = (np.asarray(box[1]) - self.center) / self.scale
        return lo, hi

    def dynamics(self, sys: StochasticSystem) -> list[Polynomial]:
        subs = self._subs(sys.all_vars, True)
        out = []
        for i, f in enumerate(sys.dynamics):
            g = compose(f, subs)
            out.append((g - self.center[i]) * (1.0 / self.scale[i]))
        return out


def _normalise(g: Polynomial) -> Polynomial:
    m = max((abs(c) for c in g.terms.values()), default=0.0)
    return g * (1.0 / m) if m > 0 else g


# --------------------------------------------------------------------------
# SOS program


@dataclass
class _Check:
    kind: str  # init | unsafe | martingale | outside
    label: str
    constraint: SosConstraint
    box: tuple[np.ndarray, np.ndarray] | None  # scaled coordinates


@dataclass
class SosProgram:
    builder: SosBuilder
    B: AffinePoly
    gamma: int
    c: int
    horizon: int
    degrees: tuple[int, int]
    scaling: _Scaling
    checks: list[_Check]
    multiplier_degrees: dict[str, list[int]]

    @property
    def n_gram_blocks(self) -> int:
        return len(self.builder.blocks)

    @property
    def n_coefficients(self) -> int:
        return self.builder.n_ids


def _targets(part: BasicSet, products: str) -> list[Polynomial]:
    gs = list(part.inequalities)
    out = list(gs)
    if products != "none":
        for i in range(len(gs)):
            for j in range(i + 1, len(gs)):
                if products == "all" or gs[i].used_vars() & gs[j].used_vars():
                    out.append(gs[i] * gs[j])
    return out


def _expectation_images(sys: StochasticSystem, scaling: _Scaling, support) -> dict:
    fs = scaling.dynamics(sys)
    powers = _PowerCache(fs)
    return {e: expect_noise(powers.monomial(e), sys.noise, sys.state_vars) for e in support}


def assemble_sos(
    sys: StochasticSystem,
    X0: Region,
    X1: Region,
    X: Region | None,
    T: int,
    degrees: tuple[int, int] = (2, 2),
    products: str = "shared",
) -> SosProgram:
    """SOS program for one reach task; ``X=None`` means the whole space."""
    d_B, d_lam = degrees
    if d_B < 2 or d_B % 2:
        raise ValueError(f"degree of B must be even and at least 2 (got {d_B}; use {max(2, _even_ceil(d_B))})")
    if d_lam < 0 or d_lam % 2:
        raise ValueError(f"multiplier degree must be even (got {d_lam}; use {_even_ceil(max(d_lam, 0))})")
    if products not in PRODUCT_MODES:
        raise ValueError(f"products must be one of {PRODUCT_MODES}")
    if T < 0:
        raise ValueError("horizon must be non-negative")
    vars = sys.state_vars
    for name, reg in (("X0", X0), ("X1", X1), ("X", X)):
        if reg is not None and reg.vars != vars:
            raise ValueError(f"{name} is not over the state variables {vars}")
    if X is not None and len(X.parts) != 1:
        raise ValueError("the domain must be a single basic set")

    scaling = _Scaling.from_boxes(
        vars, [X0.box(), X1.box()] + ([X.box()] if X is not None else [])
    )
    sb = SosBuilder(vars)
    B = sb.sos_poly(d_B, "B")
    gamma = sb.scalar("gamma")
    c = sb.scalar("c")
    slack = sb.scalar("gamma_slack")
    sb.add_equality({gamma: 1.0, slack: 1.0}, 1.0, "gamma<=1")
    sb.minimize({gamma: 1.0, c: float(T)})

    # E[B(f(x, w))] in scaled coordinates, linear in B's unknowns
    images = _expectation_images(sys, scaling, B.terms)
    EB = B.substitute(images, vars)
    deg_E = EB.degree()

    checks: list[_Check] = []
    mult_deg: dict[str, list[int]] = {}

    def with_multipliers(expr: AffinePoly, part: BasicSet, label: str, D: int, sign: float):
        degs = []
        for k, g in enumerate(_targets(part, products)):
            g = _normalise(scaling.forward(g))
            dg = g.degree()
            dl = D - dg
            dl -= dl % 2
            if dl < 0:
                continue
            lam = sb.sos_poly(dl, f"{label}.lambda{k}")
            expr = expr + sign * (lam * g)
            degs.append(dl)
        mult_deg[label] = degs
        return expr

    D_set = _even_ceil(max(d_B, d_lam))
    for i, part in enumerate(X0.parts):
        label = f"init{i}"
        expr = AffinePoly.unknown(vars, gamma) - B
        expr = with_multipliers(expr, part, label, D_set, -1.0)
        checks.append(_Check("init", label, sb.add_sos(expr, label), scaling.box(part.box)))
    for i, part in enumerate(X1.parts):
        label = f"unsafe{i}"
        expr = B - 1.0
        expr = with_multipliers(expr, part, label, D_set, -1.0)
        checks.append(_Check("unsafe", label, sb.add_sos(expr, label), scaling.box(part.box)))

    D_mart = _even_ceil(max(d_B, deg_E, d_lam))
    mart = B - EB + AffinePoly.unknown(vars, c)
    if X is None:
        mult_deg["martingale"] = []
        checks.append(_Check("martingale", "martingale", sb.add_sos(mart, "martingale"), None))
    else:
        part = X.parts[0]
        expr = with_multipliers(mart, part, "martingale", D_mart, -1.0)
        checks.append(_Check("martingale", "martingale", sb.add_sos(expr, "martingale"), scaling.box(part.box)))
        # B >= 1 wherever some defining inequality of the domain fails
        for k, g in enumerate(part.inequalities):
            label = f"outside{k}"
            gs = _normalise(scaling.forward(g))
            dl = D_set - gs.degree()
            dl -= dl % 2
            expr = B - 1.0
            if dl >= 0:
                expr = expr + sb.sos_poly(dl, f"{label}.lambda") * gs
            mult_deg[label] = [dl] if dl >= 0 else []
            checks.append(_Check("outside", label, sb.add_sos(expr, label), None))

    return SosProgram(sb, B, gamma, c, T, (d_B, d_lam), scaling, checks, mult_deg)


def compile_sdp(prog: SosProgram) -> SdpInstance:
    inst, _ = prog.builder.compile()
    return inst


def export_task_sdp(path, sys, X0, X1, X, T, degrees=(2, 2), products="shared") -> SdpInstance:
    """Write the SDP of one task in SDPA sparse format."""
    inst = compile_sdp(assemble_sos(sys, X0, X1, X, T, degrees, products))
    write_sdpa(inst, path)
    return inst


# --------------------------------------------------------------------------
# extraction


def _abs_bound(r: Polynomial, box) -> float:
    """Upper bound of |r| on a box from its coefficients."""
    lo, hi = box
    M = np.maximum(np.abs(lo), np.abs(hi))
    total = 0.0
    for e, v in r.terms.items():
        total += abs(v) * float(np.prod(M ** np.array(e)))
    return total


def _projected_values(prog: SosProgram, inst: SdpInstance, col: np.ndarray, u: np.ndarray):
    """Unknown values with every Gram block pushed onto the PSD cone."""
    mats = inst.unpack(u)
    fixed = []
    for bl, M in zip(inst.blocks, mats):
        if bl.diagonal:
            fixed.append(np.maximum(np.diag(M), 0.0))
        else:
            w, V = np.linalg.eigh(M)
            fixed.append((V * np.maximum(w, 0.0)) @ V.T)
    return inst.pack([np.diag(F) if F.ndim == 1 else F for F in fixed])[col]


def _extract(prog: SosProgram, inst: SdpInstance, col, sol: SdpSolution) -> Certificate:
    v = _projected_values(prog, inst, col, sol.u)
    gamma = float(v[prog.gamma])
    c = float(v[prog.c])
    B = prog.B.value(v)
    margins = {"init": 0.0, "unsafe": 0.0, "martingale": 0.0, "outside": 0.0}
    unchecked = []
    worst_residual = 0.0
    for chk in prog.checks:
        r = chk.constraint.expr.value(v) - chk.constraint.gram.value(v)
        worst_residual = max(worst_residual, max((abs(x) for x in r.terms.values()), default=0.0))
        if chk.box is None:
            unchecked.append(chk.label)
            continue
        margins[chk.kind] = max(margins[chk.kind], _abs_bound(r, chk.box))
    d1 = margins["unsafe"]
    T = prog.horizon
    diag = {
        "solver_status": sol.status,
        "iterations": sol.iterations,
        "solver_residual": sol.residual,
        "min_gram_eigenvalue": sol.min_eigenvalue,
        "duality_gap": sol.gap,
        "raw_gamma": gamma,
        "raw_c": c,
        "coefficient_residual": worst_residual,
        "margins": margins,
        "sampled_only": unchecked,
        "gram_blocks": prog.n_gram_blocks,
        "coefficients": prog.n_coefficients,
        "multiplier_degrees": prog.multiplier_degrees,
    }
    if d1 >= 0.5:
        cert = trivial_certificate(prog.scaling.vars, T, "residuals too large to certify")
        cert.diagnostics.update(diag)
        return cert
    k = 1.0 / (1.0 - d1)
    B = prog.scaling.backward(B * k)
    return Certificate(
        prog.scaling.vars,
        B,
        (gamma + margins["init"]) * k,
        (c + margins["martingale"]) * k,
        T,
        "numerical",
        prog.degrees,
        diag,
    )


def _solve(prog: SosProgram, opts: SynthesisOptions) -> Certificate:
    try:
        inst, col = prog.builder.compile()
    except InfeasibleProgram as exc:
        return trivial_certificate(prog.scaling.vars, prog.horizon, f"infeasible: {exc}")
    if opts.strategy == "bisection":
        return _bisect(prog, inst, col, opts)
    sol = solve_sdp(inst, opts.solver)
    if not sol.ok:
        return trivial_certificate(
            prog.scaling.vars, prog.horizon, f"solver: {sol.status} ({sol.message})"
        )
    return _extract(prog, inst, col, sol)


def _bisect(prog: SosProgram, inst: SdpInstance, col, opts: SynthesisOptions) -> Certificate:
    """Feasibility-only variant: bisect on the target value of gamma + c*T."""
    sb = prog.builder
    extra = sb.scalar("target_slack")
    sb.add_equality({prog.gamma: 1.0, prog.c: float(prog.horizon), extra: 1.0}, 1.0, "target")
    try:
        inst, col = sb.compile()
    finally:
        sb.equalities.pop()
        sb.lp_ids.pop()
        sb.lp_labels.pop()
        sb.n_ids -= 1
    inst.c[:] = 0.0
    row = inst.row_labels.index("target")
    inst.b[row] = 1.0
    sol = solve_sdp(inst, opts.solver)
    if not sol.ok:
        return trivial_certificate(prog.scaling.vars, prog.horizon, "infeasible at target 1")
    best = _extract(prog, inst, col, sol)
    lo, hi = 0.0, 1.0
    for _ in range(opts.bisection_steps):
        mid = (lo + hi) / 2
        inst.b[row] = mid
        sol = solve_sdp(inst, opts.solver)
        if sol.ok:
            best = _extract(prog, inst, col, sol)
            hi = mid
        else:
            lo = mid
    return best


def synthesize(
    sys: StochasticSystem,
    X0: Region,
    X1: Region,
    X: Region | None,
    T: int,
    degrees: tuple[int, int] | None = None,
    opts: SynthesisOptions | None = None,
) -> Certificate:
    """Best certificate over the degree schedule, post-verified."""
    opts = opts or SynthesisOptions()
    schedule = [tuple(degrees)] if degrees else opts.schedule()
    best: Certificate | None = None
    tried = []
    for deg in schedule:
        prog = assemble_sos(sys, X0, X1, X, T, deg, opts.products)
        cert = _solve(prog, opts)
        if cert.degrees is not None:
            cert.status = post_verify(cert, sys, X0, X1, X, opts.samples, opts.tol, opts.seed)
        tried.append({"degrees": list(deg), "bound": cert.bound, "status": cert.status})
        if cert.status != "failed" and (best is None or best.status == "failed" or cert.bound < best.bound):
            best = cert
        if best is not None and best.status == "verified" and best.bound <= opts.good_enough:
            break
    if best is None:
        best = trivial_certificate(sys.state_vars, T, "no certificate at degrees " + str(schedule))
        best.diagnostics["hint"] = "raise the maximum degree or enlarge the gap between X0 and X1"
    best.diagnostics["schedule"] = tried
    return best


# --------------------------------------------------------------------------
# sampled verification


def _sample_space(X0: Region, X1: Region, X: Region | None, rng, n: int) -> np.ndarray:
    if X is not None and X.bounded:
        return X.sample(rng, n)
    boxes = [b for b in (X0.box(), X1.box()) if b is not None]
    if not boxes:
        raise ValueError("no bounded region to sample from")
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    mid, half = (lo + hi) / 2, np.maximum((hi - lo) / 2, 1e-9)
    # twice the extent of the regions of interest
    return rng.uniform(mid - 2 * half, mid + 2 * half, size=(n, len(lo)))


def check_conditions(
    cert: Certificate,
    sys: StochasticSystem,
    X0: Region,
    X1: Region,
    X: Region | None,
    samples: int = 10_000,
    seed: int = 0,
) -> dict[str, float]:
    """Largest violation of each certificate condition on fresh samples."""
    rng = np.random.default_rng(seed)
    B = cert.B
    if B.vars != sys.state_vars:
        B = B.restrict(sys.state_vars)
    out = {}
    xs = _sample_space(X0, X1, X, rng, samples)
    bx = eval_poly(B, xs)
    out["nonnegative"] = float(np.max(np.maximum(-bx, 0.0)))
    if X0.bounded:
        b0 = eval_poly(B, X0.sample(rng, samples))
        out["initial"] = float(np.max(np.maximum(b0 - cert.gamma, 0.0)))
    if X1.bounded:
        b1 = eval_poly(B, X1.sample(rng, samples))
        out["unsafe"] = float(np.max(np.maximum(1.0 - b1, 0.0)))
    EB = sys.expected_composition(B)
    drift = eval_poly(EB, xs) - bx - cert.c
    out["martingale"] = float(np.max(np.maximum(drift, 0.0) / (1.0 + np.abs(bx))))
    return out


def post_verify(
    cert: Certificate,
    sys: StochasticSystem,
    X0: Region,
    X1: Region,
    X: Region | None,
    samples: int = 10_000,
    tol: float = 1e-6,
    seed: int = 0,
) -> str:
    """``verified``, ``numerical`` (violations within 10*tol) or ``failed``."""
    viol = check_conditions(cert, sys, X0, X1, X, samples, seed)
    cert.diagnostics["violations"] = viol
    worst = max(viol.values(), default=0.0)
    if worst <= tol:
        return "verified"
    if worst <= 10 * tol:
        return "numerical"
    return "failed"
