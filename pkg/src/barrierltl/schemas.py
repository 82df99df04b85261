"""JSON schemas of the artifacts written by the command line tool."""

from __future__ import annotations

import jsonschema

__all__ = ["SCHEMAS", "validate"]

_DRAFT = "https://json-schema.org/draft/2020-12/schema"
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_LETTERS = {"type": "array", "items": {"type": "string"}}
_TERMS = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["exponent", "coefficient"],
        "properties": {
            "exponent": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "coefficient": {"type": "number"},
        },
    },
}

CERTIFICATE = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["vars", "B", "gamma", "c", "horizon", "bound", "status"],
    "properties": {
        "vars": _LETTERS,
        "B": _TERMS,
        "gamma": {"type": "number"},
        "c": {"type": "number"},
        "horizon": {"type": "integer", "minimum": 0},
        "bound": _PROB,
        "status": {"enum": ["verified", "numerical", "failed"]},
        "degrees": {"type": ["array", "null"], "items": {"type": "integer"}},
        "diagnostics": {"type": "object"},
        "task": {"type": "object"},
    },
}

TASK = {
    "type": "object",
    "required": ["triple", "horizon", "source", "target"],
    "properties": {
        "triple": {"type": "array", "items": {"type": "string"}, "minItems": 3, "maxItems": 3},
        "horizon": {"type": "integer", "minimum": 1},
        "source": _LETTERS,
        "target": _LETTERS,
    },
}

RUN = {
    "type": "object",
    "required": ["states", "letters"],
    "properties": {
        "states": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "letters": {"type": "array", "items": _LETTERS},
    },
}

AUTOMATON = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["states", "initial", "accepting", "alphabet", "edges"],
    "properties": {
        "states": _LETTERS,
        "initial": _LETTERS,
        "accepting": _LETTERS,
        "alphabet": _LETTERS,
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "letters"],
                "properties": {"from": {"type": "string"}, "to": {"type": "string"}, "letters": _LETTERS},
            },
        },
    },
}

ESTIMATE = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["successes", "trials", "interval", "confidence", "seed", "rng", "method"],
    "properties": {
        "successes": {"type": "integer", "minimum": 0},
        "trials": {"type": "integer", "minimum": 1},
        "rate": _PROB,
        "interval": {"type": "array", "items": _PROB, "minItems": 2, "maxItems": 2},
        "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer"},
        "rng": {"type": "string"},
        "method": {"const": "Clopper-Pearson"},
        "initial_distribution": {"type": "string"},
    },
}

REPORT = {
    "$schema": _DRAFT,
    "type": "object",
    "required": [
        "n_steps",
        "lower_bound",
        "upper_bound_violation",
        "claimed_initial_labels",
        "excluded_initial_labels",
        "runs",
        "tasks",
        "automaton",
        "caveats",
    ],
    "properties": {
        "n_steps": {"type": "integer", "minimum": 1},
        "lower_bound": _PROB,
        "upper_bound_violation": _PROB,
        "claimed_initial_labels": _LETTERS,
        "excluded_initial_labels": _LETTERS,
        "runs": {
            "type": "array",
            "items": {
                "allOf": [RUN],
                "required": ["tasks", "bounds", "product"],
                "properties": {
                    "tasks": _LETTERS,
                    "bounds": {"type": "array", "items": _PROB},
                    "product": {"type": ["number", "null"]},
                },
            },
        },
        "tasks": {
            "type": "object",
            "additionalProperties": {
                "allOf": [TASK],
                "required": ["cache_key", "bound", "status"],
                "properties": {
                    "bound": _PROB,
                    "status": {"enum": ["verified", "numerical", "failed", "skipped"]},
                    "certificate": CERTIFICATE,
                },
            },
        },
        "automaton": AUTOMATON,
        "caveats": _LETTERS,
        "seconds": {"type": "number"},
        "reference": {"type": "object"},
        "monte_carlo": ESTIMATE,
    },
}

DECOMPOSITION = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["N", "runs", "unique_tasks"],
    "properties": {
        "N": {"type": "integer", "minimum": 1},
        "runs": {
            "type": "array",
            "items": {"allOf": [RUN], "required": ["tasks"], "properties": {"tasks": {"type": "array", "items": TASK}}},
        },
        "unique_tasks": {"type": "array", "items": TASK},
    },
}

CHECK = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["status", "bound", "violations"],
    "properties": {
        "status": {"enum": ["verified", "numerical", "failed"]},
        "bound": _PROB,
        "violations": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    },
}

EXPORT = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["degrees", "files"],
    "properties": {
        "degrees": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "files": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["file", "task", "constraints", "blocks"],
                "properties": {"task": TASK, "constraints": {"type": "integer"}},
            },
        },
    },
}

SCHEMAS = {
    "report": REPORT,
    "certificate": CERTIFICATE,
    "automaton": AUTOMATON,
    "decomposition": DECOMPOSITION,
    "estimate": ESTIMATE,
    "check": CHECK,
    "export": EXPORT,
}


def validate(kind: str, payload) -> None:
    """Raise ``jsonschema.ValidationError`` if ``payload`` does not match."""
    jsonschema.Draft202012Validator(SCHEMAS[kind]).validate(payload)
