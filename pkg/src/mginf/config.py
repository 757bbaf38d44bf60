"""Experiment configuration: schema, defaults and canonical serialization."""
from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from .functions import TestFunction, from_config as function_from_config
from .laws import ServiceLaw, law_from_config
from .measure import PointMeasure

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

LAW_SCHEMA = {
    "type": "object",
    "oneOf": [
        {"properties": {"type": {"const": "exponential"}, "rate": _pos},
         "required": ["type", "rate"], "additionalProperties": False},
        {"properties": {"type": {"const": "uniform"}, "a": {"type": "number", "minimum": 0}, "b": _pos},
         "required": ["type", "a", "b"], "additionalProperties": False},
        {"properties": {"type": {"const": "deterministic"}, "d": _pos},
         "required": ["type", "d"], "additionalProperties": False},
        {"properties": {"type": {"const": "mixture"},
                        "components": {"type": "array", "minItems": 1, "items": {
                            "type": "object",
                            "properties": {"weight": {"type": "number", "minimum": 0},
                                           "law": {"$ref": "#/$defs/law"}},
                            "required": ["weight", "law"], "additionalProperties": False}}},
         "required": ["type", "components"], "additionalProperties": False},
    ],
}

PHI_SCHEMA = {
    "type": "object",
    "oneOf": [
        {"properties": {"type": {"const": "gaussian_bump"}, "center": _num, "width": _pos, "height": _num},
         "required": ["type"], "additionalProperties": False},
        {"properties": {"type": {"const": "sigmoid"}, "center": _num, "scale": _pos},
         "required": ["type"], "additionalProperties": False},
        {"properties": {"type": {"const": "hermite_weighted"},
                        "coeffs": {"type": "array", "items": _num, "minItems": 1}},
         "required": ["type", "coeffs"], "additionalProperties": False},
        {"properties": {"type": {"const": "constant"}, "value": _num},
         "required": ["type"], "additionalProperties": False},
        {"properties": {"type": {"const": "indicator"}, "lo": {"type": ["number", "null"]},
                        "hi": {"type": ["number", "null"]},
                        "closed": {"type": "array", "items": {"type": "boolean"}, "minItems": 2, "maxItems": 2}},
         "required": ["type"], "additionalProperties": False},
    ],
}

FUNCTIONAL_SCHEMA = {
    "oneOf": [
        {"enum": ["X", "S", "W", "N", "X_raw"]},
        {"type": "object", "properties": {"type": {"const": "pair"}, "phi": {"$ref": "#/$defs/phi"}},
         "required": ["type", "phi"], "additionalProperties": False},
        {"type": "object", "properties": {"type": {"const": "martingale"}, "phi": {"$ref": "#/$defs/phi"}},
         "required": ["type", "phi"], "additionalProperties": False},
        {"type": "object", "properties": {"type": {"const": "range"}, "lo": {"type": ["number", "null"]},
                                          "hi": {"type": ["number", "null"]}},
         "required": ["type"], "additionalProperties": False},
    ],
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"law": LAW_SCHEMA, "phi": PHI_SCHEMA, "functional": FUNCTIONAL_SCHEMA},
    "type": "object",
    "additionalProperties": False,
    "required": ["law", "lambda"],
    "properties": {
        "law": {"$ref": "#/$defs/law"},
        "lambda": _pos,
        "initial": {"type": "array", "items": {
            "type": "object", "properties": {"position": _num, "weight": _pos},
            "required": ["position", "weight"], "additionalProperties": False}},
        "n_values": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "R": {"type": "integer", "minimum": 2},
        "t_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "functionals": {"type": "array", "items": {"$ref": "#/$defs/functional"}, "minItems": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "diffusion": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1, "maximum": 128},
                "steps": {"type": "integer", "minimum": 1},
                "R": {"type": "integer", "minimum": 2},
                "functionals": {"type": "array", "minItems": 1,
                                "items": {"oneOf": [{"enum": ["X", "S", "W"]}, {"$ref": "#/$defs/phi"}]}},
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}, "minItems": 1},
            },
        },
    },
}

DEFAULTS = {
    "initial": [],
    "n_values": [100],
    "R": 200,
    "t_grid": [0.5, 1.0, 2.0, 4.0],
    "functionals": ["X", "S", "W"],
    "master_seed": 0,
    "diffusion": {"K": 32, "steps": 2048, "R": 1000, "functionals": ["X", "S", "W"]},
    "output": {"formats": ["csv"]},
}


class ConfigError(ValueError):
    pass


def validate(cfg: dict) -> dict:
    """Schema-check ``cfg`` and return it with defaults filled in."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}") from None
    out = copy.deepcopy(DEFAULTS)
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    t = out["t_grid"]
    if any(b <= a for a, b in zip(t, t[1:])):
        raise ConfigError("t_grid must be strictly increasing")
    if out["law"]["type"] == "mixture":
        if abs(sum(c["weight"] for c in out["law"]["components"]) - 1.0) > 1e-12:
            raise ConfigError("mixture weights must sum to 1")
    if out["law"]["type"] == "uniform" and not out["law"]["a"] < out["law"]["b"]:
        raise ConfigError("uniform law needs a < b")
    return out


def load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return validate(cfg)


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def digest(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()


# -- builders ------------------------------------------------------------------

def build_law(cfg: dict) -> ServiceLaw:
    return law_from_config(cfg["law"])


def build_initial(cfg: dict) -> PointMeasure:
    return PointMeasure.from_records(cfg["initial"])


def build_phi(spec: dict) -> TestFunction:
    return function_from_config(spec)


def build_functional(spec):
    from .montecarlo import Functional, martingale_functional, range_functional
    if isinstance(spec, str):
        return Functional(spec)
    kind = spec["type"]
    if kind == "pair":
        return Functional("pair", build_phi(spec["phi"]))
    if kind == "martingale":
        return martingale_functional(build_phi(spec["phi"]))
    lo, hi = spec.get("lo"), spec.get("hi")
    return range_functional(-float("inf") if lo is None else lo, float("inf") if hi is None else hi)
