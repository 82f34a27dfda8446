"""Experiment configuration: JSON schemas and validated dataclasses.

A config document names one command, a seed, and the command's parameters.
Validation failures raise ``QRLabError("config-error", ...)`` whose message
starts with the JSON-pointer path of the offending field, which the CLI
turns into exit code 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .errors import QRLabError

__all__ = ["ExperimentConfig", "load_config", "validate_config", "COMMANDS"]


_NUM_ARRAY = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_PROFILE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["power", "exponential", "times"]},
        "exponent": {"type": "number"},
        "base": {"type": "number"},
        "scale": {"type": "number"},
        "horizon": {"type": "integer", "minimum": 1},
        "times": _NUM_ARRAY,
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_RAY = {
    "type": "object",
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "kind": {"enum": ["main-flat", "flat", "crossing"]},
        "wall": {"type": "integer", "minimum": 0},
        "direction": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "profile": _PROFILE,
        "itinerary": {"type": "array", "items": {"type": "string"}},
        "length": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["name", "kind"],
    "additionalProperties": False,
}

_TEMPLATE = {
    "type": "object",
    "properties": {
        "widths": _NUM_ARRAY,
        "offsets": _NUM_ARRAY,
        "orientations": {"type": "array", "items": {"enum": [1, -1]}},
        "angles": _NUM_ARRAY,
    },
    "required": ["widths"],
    "additionalProperties": False,
}

_PRESENTATION = {
    "type": "object",
    "properties": {
        "generators": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "relators": {"type": "array", "items": {"type": "string"}},
        "peripherals": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}},
            "minItems": 1,
        },
        "radius": {"type": "integer", "minimum": 1},
    },
    "required": ["generators", "peripherals", "radius"],
    "additionalProperties": False,
}

_GRAPH = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "adjacency": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "string"}},
        },
    },
    "required": ["name", "adjacency"],
    "additionalProperties": False,
}

_PARAMS_BY_COMMAND = {
    "template": {
        "type": "object",
        "properties": {
            "template": _TEMPLATE,
            "sample_pairs": {"type": "integer", "minimum": 0},
        },
        "required": ["template"],
        "additionalProperties": False,
    },
    "spiral-suite": {
        "type": "object",
        "properties": {
            "n_templates": {"type": "integer", "minimum": 1},
            "strip_range": {
                "type": "array",
                "items": {"type": "integer", "minimum": 2},
                "minItems": 2,
                "maxItems": 2,
            },
            "q": {"type": "number", "exclusiveMinimum": 0},
            "Q": {"type": "number", "minimum": 0},
            "delta": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["n_templates"],
        "additionalProperties": False,
    },
    "redirect": {
        "type": "object",
        "properties": {
            "template": _TEMPLATE,
            "alpha": _RAY,
            "beta": _RAY,
            "radii": _NUM_ARRAY,
            "strategies": {"type": "array", "items": {"type": "string"}},
        },
        "required": ["template", "alpha", "beta"],
        "additionalProperties": False,
    },
    "certificate": {
        "type": "object",
        "properties": {
            "template": _TEMPLATE,
            "profile": _PROFILE,
            "q": {"type": "number", "exclusiveMinimum": 0},
            "Q": {"type": "number", "minimum": 0},
            "rho0": {"type": "number", "exclusiveMinimum": 0},
            "radii": _NUM_ARRAY,
        },
        "required": ["template", "profile", "q", "Q"],
        "additionalProperties": False,
    },
    "poset": {
        "type": "object",
        "properties": {
            "template": _TEMPLATE,
            "rays": {"type": "array", "items": _RAY, "minItems": 2},
            "radii": _NUM_ARRAY,
        },
        "required": ["template", "rays"],
        "additionalProperties": False,
    },
    "relhyp": {
        "type": "object",
        "properties": {
            "presentation": _PRESENTATION,
            "M": {"type": "number", "exclusiveMinimum": 0},
            "c": {"type": "number", "exclusiveMinimum": 0},
            "window": {"type": "integer", "minimum": 1},
            "n_random_paths": {"type": "integer", "minimum": 0},
            "path_length": {"type": "integer", "minimum": 2},
            "detours": {"type": "integer", "minimum": 0},
        },
        "required": ["presentation", "M", "c"],
        "additionalProperties": False,
    },
    "racg": {
        "type": "object",
        "properties": {
            "use_corpus": {"type": "boolean"},
            "graphs": {"type": "array", "items": _GRAPH},
        },
        "additionalProperties": False,
    },
}

COMMANDS = tuple(sorted(_PARAMS_BY_COMMAND))

_TOP_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "params": {"type": "object"},
    },
    "required": ["command", "params"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description."""

    command: str
    params: dict
    seed: int = 0
    out: Optional[str] = None

    def require(self, key: str, default=None):
        if key in self.params:
            return self.params[key]
        if default is not None:
            return default
        raise QRLabError("config-error", f"/params/{key}: missing required field")


def _pointer(error: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path)


def validate_config(document: dict) -> ExperimentConfig:
    """Validate a config document against the top and per-command schemas."""
    validator = jsonschema.Draft202012Validator(_TOP_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise QRLabError("config-error", f"{_pointer(e)}: {e.message}")
    command = document["command"]
    sub = jsonschema.Draft202012Validator(_PARAMS_BY_COMMAND[command])
    errors = sorted(sub.iter_errors(document["params"]), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise QRLabError("config-error", f"/params{_pointer(e)}: {e.message}")
    return ExperimentConfig(
        command=command,
        params=document["params"],
        seed=int(document.get("seed", 0)),
        out=document.get("out"),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            document = json.load(fh)
    except FileNotFoundError:
        raise QRLabError("config-error", f"/: config file not found: {path}")
    except json.JSONDecodeError as e:
        raise QRLabError("config-error", f"/: invalid JSON: {e}")
    if not isinstance(document, dict):
        raise QRLabError("config-error", "/: config document must be a JSON object")
    return validate_config(document)
