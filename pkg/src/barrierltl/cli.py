"""Command line interface.

Exit status: 0 success, 1 verification finished but the bound is vacuous,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from barrierltl.algebra import PolynomialSyntaxError, Region
from barrierltl.automaton import Dfa, DfaError, StateCapExceeded, export_dot, minimize, translate
from barrierltl.certificate import Certificate, assemble_sos, compile_sdp, post_verify
from barrierltl.config import ConfigError, ProblemConfig, load_config, load_dfa
from barrierltl.decomposition import accepting_runs, reach_tasks, unique_tasks
from barrierltl.engine import JOBS_ENV, EngineOptions, initial_claim, verify
from barrierltl.formula import FormulaSyntaxError, Not, parse_formula
from barrierltl.montecarlo import RNG_ALGORITHM, SimConfig, dump_csv, estimate
from barrierltl.sdp import write_sdpa

EXIT_OK, EXIT_VACUOUS, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("barrierltl")

_KEYWORDS = {"X", "F", "G", "U", "true", "false"}


class InputError(Exception):
    pass


def _config(args) -> ProblemConfig:
    path = args.config or args.config_pos
    if not path:
        raise InputError("a problem file is required (positional or --config)")
    cfg = load_config(path)
    if args.dfa:
        cfg.dfa = load_dfa(args.dfa, None, cfg.props)
        cfg.formula = None
    if getattr(args, "max_degree", None):
        cfg.synthesis.max_degree = args.max_degree
        cfg.synthesis.degrees = None
    if getattr(args, "N", None):
        cfg.n_steps = args.N
    return cfg


def _negated_dfa(cfg: ProblemConfig) -> Dfa:
    if cfg.dfa is not None:
        return minimize(cfg.dfa, rename=False)
    return minimize(translate(Not(cfg.formula), cfg.props))


def _out_dir(args) -> Path | None:
    if not args.out_dir:
        return None
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, payload: dict, text: str | None = None, name: str = "result") -> None:
    out = _out_dir(args)
    body = json.dumps(payload, indent=2)
    if out is not None:
        (out / f"{name}.json").write_text(body + "\n")
        if text is not None:
            (out / f"{name}.txt").write_text(text + "\n")
    print(text if args.format == "text" and text is not None else body)


def _claimed(cfg: ProblemConfig) -> list[str]:
    dfa = cfg.dfa if cfg.dfa is not None else translate(Not(cfg.formula), cfg.props)
    return initial_claim(minimize(dfa, rename=False), cfg.props, cfg.n_steps)[0]


def _initial_region(cfg: ProblemConfig, claimed: list[str] | None) -> Region | list[float]:
    init = cfg.monte_carlo.get("initial", "claimed")
    if isinstance(init, list):
        return init
    if init == "claimed":
        props = claimed if claimed is not None else _claimed(cfg)
        regs = [cfg.labels.region(p) for p in props]
        if not regs or any(r is None for r in regs):
            raise InputError("Monte Carlo needs bounded initial regions; set monte_carlo.initial")
        return Region.union(regs, "initial")
    return cfg.regions[init]


def _monte_carlo(cfg: ProblemConfig, args, claimed=None) -> dict:
    if cfg.formula is None:
        raise InputError("Monte Carlo needs a formula, not only an automaton")
    mc = cfg.monte_carlo
    sc = SimConfig(
        cfg.n_steps,
        int(args.trials or mc.get("trials", 10_000)),
        int(args.seed if args.seed is not None else mc.get("seed", 0)),
        _initial_region(cfg, claimed),
        float(mc.get("confidence", 0.9999)),
    )
    est = estimate(cfg.system, cfg.labels, cfg.formula, sc)
    out = est.to_json()
    out["initial_distribution"] = "uniform over the claimed initial regions" if not isinstance(sc.initial, list) else "fixed point"
    if getattr(args, "csv", None):
        dump_csv(args.csv, cfg.system, cfg.labels, sc)
    return out


# commands ---------------------------------------------------------------


def cmd_verify(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg.synthesis.seed = args.seed
    opts = EngineOptions(cfg.synthesis, args.jobs)
    spec = cfg.dfa if cfg.dfa is not None else cfg.formula
    report = verify(cfg.system, cfg.labels, spec, cfg.n_steps, opts, cfg.domain, cfg.reference)
    if not args.no_mc and cfg.formula is not None and report.claimed_initial:
        try:
            report.monte_carlo = _monte_carlo(cfg, args, report.claimed_initial)
            report.caveats.append("Monte Carlo initial states are uniform over the claimed initial regions")
        except (InputError, ValueError) as exc:
            report.caveats.append(f"Monte Carlo skipped: {exc}")
    out = _out_dir(args)
    if out is not None:
        cdir = out / "certificates"
        cdir.mkdir(exist_ok=True)
        for key, t in report.tasks.items():
            if t.certificate is not None:
                data = t.certificate.to_json()
                data["task"] = t.task.to_json()
                (cdir / f"{key}.json").write_text(json.dumps(data, indent=2) + "\n")
    _emit(args, report.to_json(), report.to_text(), "report")
    return EXIT_VACUOUS if report.vacuous else EXIT_OK


def cmd_translate(args) -> int:
    if args.formula is not None:
        props = [p for p in (args.props or "").split(",") if p]
        if not props:
            words = re.findall(r"[A-Za-z_]\w*", args.formula)
            props = sorted(set(words) - _KEYWORDS) or ["p0"]
        phi = parse_formula(args.formula, props)
        dfa = minimize(translate(Not(phi) if args.negate else phi, props))
    else:
        cfg = _config(args)
        dfa = _negated_dfa(cfg)
    out = _out_dir(args)
    dot = export_dot(dfa)
    if out is not None:
        (out / "automaton.dot").write_text(dot)
        (out / "automaton.json").write_text(json.dumps(dfa.to_json(), indent=2) + "\n")
    print(json.dumps(dfa.to_json(), indent=2) if args.format == "json" else dot)
    return EXIT_OK


def cmd_decompose(args) -> int:
    if args.config or args.config_pos:
        cfg = _config(args)
        dfa, n = _negated_dfa(cfg), cfg.n_steps
    else:
        if not args.dfa or not args.N:
            raise InputError("decompose needs a problem file, or --dfa together with --N")
        dfa, n = minimize(load_dfa(args.dfa, None), rename=False), args.N
    runs = accepting_runs(dfa, n)
    per = [reach_tasks(r, dfa, n) if len(r) >= 3 else [] for r in runs]
    payload = {
        "N": n,
        "runs": [{**r.to_json(), "tasks": [t.to_json() for t in ts]} for r, ts in zip(runs, per)],
        "unique_tasks": [t.to_json() for t in unique_tasks(per)],
    }
    lines = [f"N = {n}, {len(runs)} accepting runs"]
    for r, ts in zip(runs, per):
        body = ", ".join(f"({t.q},{t.q1},{t.q2},{t.horizon})" for t in ts) or "no tasks"
        lines.append(f"  {' -> '.join(r.states)}: {body}")
    _emit(args, payload, "\n".join(lines), "decomposition")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    payload = _monte_carlo(cfg, args)
    payload["rng"] = RNG_ALGORITHM
    text = (
        f"{payload['successes']}/{payload['trials']} traces satisfy the property; "
        f"{payload['confidence']} interval [{payload['interval'][0]:.6g}, {payload['interval'][1]:.6g}]"
    )
    _emit(args, payload, text, "estimate")
    return EXIT_OK


def cmd_check_certificate(args) -> int:
    cfg = _config(args)
    data = json.loads(Path(args.certificate).read_text())
    cert = Certificate.from_json(data)
    task = data.get("task", {})
    source = args.source.split(",") if args.source else task.get("source")
    target = args.target.split(",") if args.target else task.get("target")
    if not source or not target:
        raise InputError("certificate has no task; pass --source and --target letters")
    X0, X1 = cfg.labels.preimage(source), cfg.labels.preimage(target)
    if X0 is None or X1 is None:
        raise InputError("source and target must be bounded labelled regions")
    status = post_verify(cert, cfg.system, X0, X1, cfg.domain, args.samples, args.tol,
                         args.seed if args.seed is not None else 0)
    payload = {"status": status, "bound": cert.bound, "violations": cert.diagnostics.get("violations")}
    _emit(args, payload, f"{status}: bound {cert.bound:.6g}", "check")
    return EXIT_OK if status == "verified" else (EXIT_NUMERICAL if status == "numerical" else EXIT_VACUOUS)


def cmd_export_sdp(args) -> int:
    cfg = _config(args)
    dfa = _negated_dfa(cfg)
    runs = accepting_runs(dfa, cfg.n_steps)
    tasks = unique_tasks([reach_tasks(r, dfa, cfg.n_steps) for r in runs if len(r) >= 3])
    out = _out_dir(args) or Path(".")
    degrees = cfg.synthesis.schedule()[-1]
    written = []
    for i, t in enumerate(tasks):
        X0, X1 = cfg.labels.preimage(t.source), cfg.labels.preimage(t.target)
        if X0 is None or X1 is None:
            continue
        inst = compile_sdp(assemble_sos(cfg.system, X0, X1, cfg.domain, t.horizon, degrees, cfg.synthesis.products))
        name = f"task{i}_{t.q}_{t.q1}_{t.q2}_T{t.horizon}.dat-s"
        write_sdpa(inst, out / name)
        written.append({"file": name, "task": t.to_json(), "constraints": inst.n_constraints,
                        "blocks": [b.size if not b.diagonal else -b.size for b in inst.blocks]})
    print(json.dumps({"degrees": list(degrees), "files": written}, indent=2))
    return EXIT_OK


# parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="barrierltl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt=("json", "text")):
        sp.add_argument("config_pos", nargs="?", metavar="CONFIG", help="problem file (JSON)")
        sp.add_argument("--config", help="problem file (alternative to the positional argument)")
        sp.add_argument("--dfa", help="automaton JSON for the negated property, replacing the formula")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--format", choices=fmt, default=fmt[0])
        sp.add_argument("--N", type=int, help="override the trace length")

    sp = sub.add_parser("verify", help="lower-bound the satisfaction probability")
    common(sp, ("text", "json"))
    sp.add_argument("--jobs", type=int, help=f"parallel synthesis jobs (default ${JOBS_ENV} or 1)")
    sp.add_argument("--max-degree", type=int)
    sp.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo cross-check")
    sp.add_argument("--trials", type=int)
    sp.set_defaults(func=cmd_verify, csv=None)

    sp = sub.add_parser("translate", help="automaton of the negated property")
    common(sp, ("dot", "json"))
    sp.add_argument("--formula", help="formula text instead of a problem file")
    sp.add_argument("--props", help="comma separated propositions for --formula")
    sp.add_argument("--negate", action="store_true", help="translate the negation of --formula")
    sp.set_defaults(func=cmd_translate)

    sp = sub.add_parser("decompose", help="accepting runs and reach tasks")
    common(sp)
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("simulate", help="Monte Carlo estimate with an exact interval")
    common(sp)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--csv", help="also write every trace to this CSV file")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check-certificate", help="re-check a certificate by sampling")
    common(sp)
    sp.add_argument("certificate")
    sp.add_argument("--source", help="comma separated letters of the initial set")
    sp.add_argument("--target", help="comma separated letters of the unsafe set")
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_check_certificate)

    sp = sub.add_parser("export-sdp", help="write each task's SDP in SDPA sparse format")
    common(sp, ("sdpa",))
    sp.add_argument("--max-degree", type=int)
    sp.set_defaults(func=cmd_export_sdp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormulaSyntaxError, PolynomialSyntaxError, DfaError, StateCapExceeded, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
