"""Experiment configuration: JSON files validated against a schema.

Task sizes are given in megacycles and kilobits, everything else in SI
units. Missing solver settings take their defaults.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .channel import GainDistribution, from_dict
from .core import SystemParams, TaskProfile

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["task", "system", "channel"],
    "additionalProperties": False,
    "properties": {
        "task": {
            "type": "object",
            "required": ["cycles_mcycles", "data_kbits"],
            "additionalProperties": False,
            "properties": {
                "cycles_mcycles": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                "data_kbits": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
            },
        },
        "system": {
            "type": "object",
            "required": ["bandwidth_hz", "k0", "f_max_hz", "f_l_hz", "f_e_hz", "deadline_s", "coherence_s"],
            "additionalProperties": False,
            "properties": {
                k: _POSITIVE
                for k in ("bandwidth_hz", "k0", "f_max_hz", "f_l_hz", "f_e_hz", "deadline_s", "coherence_s")
            },
        },
        "channel": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "mean"],
                    "additionalProperties": False,
                    "properties": {"kind": {"const": "exponential"}, "mean": _POSITIVE},
                },
                {
                    "type": "object",
                    "required": ["kind", "gains", "probs"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "discrete"},
                        "gains": {"type": "array", "minItems": 1, "items": _POSITIVE},
                        "probs": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                    },
                },
            ]
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "d_intervals": {"type": "integer", "minimum": 32},
                "h_nodes": {"type": "integer", "minimum": 1},
                "truncation": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "tol": _POSITIVE,
                "inner": {"enum": ["continuous", "grid"]},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "episodes": {"type": "integer", "minimum": 1},
            },
        },
    },
}

SOLVER_DEFAULTS = {
    "d_intervals": 256,
    "h_nodes": 128,
    "truncation": 1e-7,
    "tol": 1e-6,
    "inner": "continuous",
    "seed": 2024,
    "episodes": 10000,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    profile: TaskProfile
    params: SystemParams
    channel: GainDistribution
    solver: dict

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def grid_kwargs(self) -> dict:
        s = self.solver
        return {"d_intervals": s["d_intervals"], "h_nodes": s["h_nodes"], "truncation": s["truncation"],
                "inner": s["inner"]}

    def with_system(self, **changes) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["system"].update(changes)
        return from_raw(raw)


def from_raw(raw: dict) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n" + "\n".join(lines))
    raw = copy.deepcopy(raw)
    raw["solver"] = {**SOLVER_DEFAULTS, **raw.get("solver", {})}
    sysd = raw["system"]
    try:
        profile = TaskProfile.from_units(raw["task"]["cycles_mcycles"], raw["task"]["data_kbits"])
        params = SystemParams(
            bandwidth_hz=sysd["bandwidth_hz"], k0=sysd["k0"], f_max=sysd["f_max_hz"], f_l=sysd["f_l_hz"],
            f_e=sysd["f_e_hz"], deadline_s=sysd["deadline_s"], coherence_s=sysd["coherence_s"],
        )
        channel = from_dict(raw["channel"])
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return ExperimentConfig(raw, profile, params, channel, raw["solver"])


def default_raw() -> dict:
    text = resources.files("seqoff").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def load_config(path=None) -> ExperimentConfig:
    """Read and validate a JSON config; ``None`` gives the bundled defaults."""
    if path is None:
        return from_raw(default_raw())
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_raw(raw)
