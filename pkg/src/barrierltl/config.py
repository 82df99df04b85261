"""Problem files: JSON schema, validation and conversion to model objects."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from barrierltl.algebra import (
    BasicSet,
    Labeling,
    MomentList,
    NoiseModel,
    Normal,
    PointMass,
    Polynomial,
    PolynomialSyntaxError,
    Region,
    StochasticSystem,
    Uniform,
    parse_poly,
)
from barrierltl.automaton import Dfa, DfaError
from barrierltl.certificate import SynthesisOptions
from barrierltl.formula import Formula, FormulaSyntaxError, parse_formula
from barrierltl.sdp import SolverOptions

__all__ = ["ConfigError", "ProblemConfig", "SCHEMA", "load_config", "parse_config", "bundled"]

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_BOX = {"type": "array", "items": _VEC, "minItems": 2, "maxItems": 2}
_INEQS = {"type": "array", "items": {"type": "string"}, "minItems": 1}
_PART = {
    "oneOf": [
        _INEQS,
        {
            "type": "object",
            "properties": {"inequalities": _INEQS, "box": _BOX},
            "required": ["inequalities"],
            "additionalProperties": False,
        },
    ]
}
_REGION = {
    "type": "object",
    "properties": {
        "parts": {"type": "array", "items": _PART, "minItems": 1},
        "box": _BOX,
        "bounded": {"type": "boolean"},
    },
    "oneOf": [{"required": ["parts"]}, {"required": ["box"]}],
    "additionalProperties": False,
}
_DIST = {
    "type": "object",
    "properties": {
        "type": {"enum": ["normal", "uniform", "point", "moments"]},
        "mean": _NUM,
        "std": {"type": "number", "minimum": 0},
        "low": _NUM,
        "high": _NUM,
        "value": _NUM,
        "moments": _VEC,
    },
    "required": ["type"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "state_vars": {"type": "array", "items": {"type": "string", "pattern": r"^[A-Za-z_]\w*$"}, "minItems": 1},
        "noise": {
            "type": "object",
            "properties": {
                "vars": {"type": "array", "items": {"type": "string", "pattern": r"^[A-Za-z_]\w*$"}},
                "distributions": {"type": "array", "items": _DIST},
            },
            "required": ["vars", "distributions"],
            "additionalProperties": False,
        },
        "constants": {"type": "object", "additionalProperties": _NUM},
        "dynamics": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "regions": {"type": "object", "additionalProperties": _REGION, "minProperties": 1},
        "labels": {"type": "object", "additionalProperties": {"type": "string"}, "minProperties": 1},
        "default_label": {"type": "string"},
        "formula": {"type": "string"},
        "dfa": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "N": {"type": "integer", "minimum": 1},
        "domain": _REGION,
        "synthesis": {
            "type": "object",
            "properties": {
                "max_degree": {"type": "integer", "minimum": 2},
                "degrees": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
                    "minItems": 1,
                },
                "products": {"enum": ["none", "shared", "all"]},
                "strategy": {"enum": ["direct", "bisection"]},
                "samples": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "good_enough": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "tol_gap": {"type": "number", "exclusiveMinimum": 0},
                "tol_psd": {"type": "number", "exclusiveMinimum": 0},
                "tol_eq": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "monte_carlo": {
            "type": "object",
            "properties": {
                "trials": {"type": "integer", "minimum": 1},
                "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "initial": {"oneOf": [{"type": "string"}, _VEC]},
            },
            "additionalProperties": False,
        },
        "reference": {"type": "object"},
    },
    "required": ["state_vars", "dynamics", "regions", "labels", "N"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid problem file; ``pointer`` is a JSON pointer to the culprit."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


@dataclass
class ProblemConfig:
    name: str
    system: StochasticSystem
    regions: dict[str, Region]
    labels: Labeling
    n_steps: int
    formula: Formula | None = None
    dfa: Dfa | None = None
    domain: Region | None = None
    synthesis: SynthesisOptions = field(default_factory=SynthesisOptions)
    monte_carlo: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    source: Path | None = None
    raw: dict = field(default_factory=dict)

    @property
    def props(self) -> tuple[str, ...]:
        return self.labels.props

    def region_for(self, prop: str) -> Region | None:
        return self.labels.region(prop)


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path)


_CMP = re.compile(r"(>=|<=|=>|=<)")


def _inequality(text: str, vars, ptr: str, consts: dict) -> Polynomial:
    text = _substitute(text, consts)
    pieces = _CMP.split(text)
    try:
        if len(pieces) == 1:
            return parse_poly(text, vars)
        if len(pieces) != 3:
            raise ConfigError("expected exactly one '>=' or '<=' comparison", ptr)
        lhs, op, rhs = pieces
        a, b = parse_poly(lhs, vars), parse_poly(rhs, vars)
    except PolynomialSyntaxError as exc:
        raise ConfigError(str(exc), ptr) from None
    return a - b if op in (">=", "=>") else b - a


def _substitute(text: str, consts: dict) -> str:
    if not consts:
        return text
    pat = re.compile(r"\b(" + "|".join(map(re.escape, sorted(consts, key=len, reverse=True))) + r")\b")
    return pat.sub(lambda m: f"({float(consts[m.group(1)])!r})", text)


def _region(data: dict, vars, ptr: str, consts: dict, name: str) -> Region:
    n = len(vars)
    if "box" in data:
        lo, hi = (np.asarray(v, dtype=float) for v in data["box"])
        if lo.shape != (n,) or hi.shape != (n,):
            raise ConfigError(f"box bounds need {n} entries each", ptr + "/box")
        if np.any(hi < lo):
            raise ConfigError("box has an upper bound below its lower bound", ptr + "/box")
        ineqs = []
        for i, v in enumerate(vars):
            x = Polynomial.variable(vars, v)
            ineqs += [x - lo[i], hi[i] - x]
        parts = [BasicSet(ineqs, (lo, hi), [f"box {name}"])]
    else:
        parts = []
        for k, part in enumerate(data["parts"]):
            pptr = f"{ptr}/parts/{k}"
            texts = part if isinstance(part, list) else part["inequalities"]
            gs = [_inequality(t, vars, f"{pptr}/{j}" if isinstance(part, list) else f"{pptr}/inequalities/{j}", consts)
                  for j, t in enumerate(texts)]
            box = None
            if isinstance(part, dict) and "box" in part:
                box = tuple(np.asarray(b, dtype=float) for b in part["box"])
                if any(b.shape != (n,) for b in box):
                    raise ConfigError(f"box bounds need {n} entries each", pptr + "/box")
            try:
                parts.append(BasicSet(gs, box, list(texts)))
            except ValueError as exc:
                raise ConfigError(str(exc), pptr) from None
    region = Region(parts, name)
    if data.get("bounded") and not region.bounded:
        raise ConfigError("region is declared bounded but no bounding box could be derived; add a 'box'", ptr)
    return region


def _distribution(d: dict, ptr: str):
    kind = d["type"]
    try:
        if kind == "normal":
            return Normal(float(d.get("mean", 0.0)), float(d.get("std", 1.0)))
        if kind == "uniform":
            return Uniform(float(d["low"]), float(d["high"]))
        if kind == "point":
            return PointMass(float(d.get("value", 0.0)))
        return MomentList(tuple(float(m) for m in d["moments"]))
    except KeyError as exc:
        raise ConfigError(f"missing field {exc.args[0]!r} for a {kind} distribution", ptr) from None
    except ValueError as exc:
        raise ConfigError(str(exc), ptr) from None


def parse_config(data: dict, base: Path | None = None) -> ProblemConfig:
    """Validate a decoded problem file and build the model objects."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.path), list(map(str, e.path))))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if e.validator == "required" and isinstance(e.instance, dict):
            # point at the missing member rather than its parent
            path += [k for k in e.validator_value if k not in e.instance][:1]
        raise ConfigError(e.message, _pointer(path))
    if "formula" in data and "dfa" in data:
        raise ConfigError("'formula' and 'dfa' are mutually exclusive", "/dfa")

    consts = dict(data.get("constants", {}))
    vars = tuple(data["state_vars"])
    noise_spec = data.get("noise", {"vars": [], "distributions": []})
    nvars = tuple(noise_spec["vars"])
    if len(nvars) != len(noise_spec["distributions"]):
        raise ConfigError("one distribution per noise variable is required", "/noise/distributions")
    clash = (set(vars) & set(nvars)) | (set(consts) & (set(vars) | set(nvars)))
    if clash:
        raise ConfigError(f"names used twice: {sorted(clash)}", "/noise/vars")
    noise = NoiseModel(
        nvars, tuple(_distribution(d, f"/noise/distributions/{i}") for i, d in enumerate(noise_spec["distributions"]))
    )
    if len(data["dynamics"]) != len(vars):
        raise ConfigError(f"{len(vars)} state variables but {len(data['dynamics'])} update maps", "/dynamics")
    allv = vars + nvars
    dyn = []
    for i, text in enumerate(data["dynamics"]):
        try:
            dyn.append(parse_poly(_substitute(text, consts), allv))
        except PolynomialSyntaxError as exc:
            raise ConfigError(str(exc), f"/dynamics/{i}") from None
    system = StochasticSystem(vars, dyn, noise)

    regions = {
        name: _region(spec, vars, f"/regions/{name}", consts, name) for name, spec in data["regions"].items()
    }
    label_map: dict[str, Region | None] = {}
    for rname, prop in data["labels"].items():
        if rname not in regions:
            raise ConfigError(f"unknown region {rname!r}", f"/labels/{rname}")
        if prop in label_map:
            raise ConfigError(f"proposition {prop!r} is labelled by more than one region", f"/labels/{rname}")
        label_map[prop] = regions[rname]
    default = data.get("default_label")
    if default is not None and default in label_map:
        raise ConfigError("the default label must not also name a region", "/default_label")
    labels = Labeling(label_map, default)

    formula = dfa = None
    if "formula" in data:
        try:
            formula = parse_formula(data["formula"], labels.props)
        except FormulaSyntaxError as exc:
            raise ConfigError(str(exc), "/formula") from None
    elif "dfa" in data:
        dfa = load_dfa(data["dfa"], base, labels.props, "/dfa")
    else:
        raise ConfigError("either 'formula' or 'dfa' is required", "/")

    domain = None
    if "domain" in data:
        domain = _region(data["domain"], vars, "/domain", consts, "domain")
        if len(domain.parts) != 1:
            raise ConfigError("the domain must be a single basic set", "/domain")

    syn = dict(data.get("synthesis", {}))
    if "degrees" in syn:
        syn["degrees"] = tuple(tuple(d) for d in syn["degrees"])
        for k, (a, b) in enumerate(syn["degrees"]):
            if a < 2 or a % 2 or b % 2:
                raise ConfigError("degrees must be even (and at least 2 for B)", f"/synthesis/degrees/{k}")
    synthesis = SynthesisOptions(**syn, solver=SolverOptions(**data.get("solver", {})))

    mc = dict(data.get("monte_carlo", {}))
    init = mc.get("initial")
    if isinstance(init, str) and init != "claimed" and init not in regions:
        raise ConfigError(f"unknown initial region {init!r}", "/monte_carlo/initial")
    if isinstance(init, list) and len(init) != len(vars):
        raise ConfigError(f"initial state needs {len(vars)} coordinates", "/monte_carlo/initial")

    return ProblemConfig(
        data.get("name", ""),
        system,
        regions,
        labels,
        int(data["N"]),
        formula,
        dfa,
        domain,
        synthesis,
        mc,
        dict(data.get("reference", {})),
        base,
        data,
    )


def load_dfa(spec, base: Path | None, alphabet=None, ptr: str = "/dfa") -> Dfa:
    try:
        if isinstance(spec, str):
            path = Path(spec)
            if not path.is_absolute() and base is not None:
                path = base / path
            path = _resolve(path)
            spec = json.loads(path.read_text())
        dfa = Dfa.from_json(spec)
    except (OSError, json.JSONDecodeError, DfaError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load automaton: {exc}", ptr) from None
    if alphabet is not None:
        missing = set(dfa.alphabet) - set(alphabet)
        if missing:
            raise ConfigError(f"automaton letters without a region: {sorted(missing)}", ptr)
    return dfa


def bundled(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(resources.files("barrierltl") / "data" / name))


def _resolve(path: Path) -> Path:
    if path.exists():
        return path
    alt = bundled(path.name)
    if alt.exists():
        return alt
    raise ConfigError(f"file not found: {path}", "/")


def load_config(path) -> ProblemConfig:
    """Read and validate a problem file (bundled names are found too)."""
    path = _resolve(Path(path))
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "/") from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", "/")
    return parse_config(data, path.parent)
