"""Run-configuration documents: JSON with schema validation up front.

Unknown keys are rejected everywhere so typos fail loudly before any compute
starts.
"""

from __future__ import annotations

import json

import jsonschema

__all__ = ["ConfigError", "load_config", "validate_config", "CONFIG_SCHEMA"]


class ConfigError(ValueError):
    """Configuration file is missing, unparseable, or violates the schema."""


_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dim", "half_width", "n_points", "kind"],
    "properties": {
        "dim": {"type": "integer", "enum": [1, 2]},
        "half_width": {"type": "number", "exclusiveMinimum": 0},
        "n_points": {"type": "integer", "minimum": 4},
        "kind": {"type": "string", "enum": ["trapezoid", "periodic"]},
    },
}

_SOLVER = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"type": "string", "enum": ["bgk", "boltzmann"]},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "n_steps": {"type": "integer", "minimum": 1},
        "n_trajectories": {"type": "integer", "minimum": 1},
        "epsilon": {"type": "number", "minimum": 0},
        "t_final": {"type": "number", "exclusiveMinimum": 0},
        "target_times": {"type": "array", "items": {"type": "number"},
                         "minItems": 1},
        "n_per_kind": {"type": "integer", "minimum": 1},
        "kinds": {"type": "array", "items": {
            "type": "string",
            "enum": ["gaussian", "two_gaussians", "perturbed"]}},
        "n_radial": {"type": "integer", "minimum": 1},
        "n_angular": {"type": "integer", "minimum": 1},
        "initial": {"type": "string",
                    "enum": ["bkw", "maxwellian", "sampled", "gaussian",
                             "two_gaussians", "perturbed"]},
    },
}

_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dim", "n_modes", "hidden_channels", "n_layers"],
    "properties": {
        "dim": {"type": "integer", "enum": [1, 2]},
        "n_modes": {"type": "integer", "minimum": 2},
        "hidden_channels": {"type": "integer", "minimum": 1},
        "n_layers": {"type": "integer", "minimum": 1},
        "activation": {"type": "string", "enum": ["gelu", "relu", "identity"]},
        "spectral_passthrough": {"type": "boolean"},
    },
}

_TRAIN = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mode": {"type": "string", "enum": ["sequence", "point_to_point"]},
        "epochs": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "lr_decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "lr_decay_interval": {"type": "integer", "minimum": 1},
        "beta1": {"type": "number"},
        "beta2": {"type": "number"},
        "eps": {"type": "number"},
        "val_fraction": {"type": "number", "exclusiveMinimum": 0,
                         "exclusiveMaximum": 1},
        "rollout_finetune_epochs": {"type": "integer", "minimum": 0},
        "target_time": {"type": "number"},
        "data": {"type": "string"},
        "resume_from": {"type": "string"},
    },
}

_LOSS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "base": {"type": "string", "enum": ["mse", "relative_l2"]},
        "lambda_mass": {"type": "number", "minimum": 0},
        "lambda_momentum": {"type": "number", "minimum": 0},
        "lambda_energy": {"type": "number", "minimum": 0},
        "weighted": {"type": "boolean"},
    },
}

_BENCHMARK = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "times": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "methods": {"type": "array", "items": {
            "type": "string", "enum": ["sm", "fno", "cfno"]}},
        "checkpoints": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fno": {"type": "object",
                        "additionalProperties": {"type": "string"}},
                "cfno": {"type": "object",
                         "additionalProperties": {"type": "string"}},
            },
        },
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "n_radial": {"type": "integer", "minimum": 1},
        "n_angular": {"type": "integer", "minimum": 1},
    },
}

_EXPORT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["files", "slice"],
    "properties": {
        "files": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "slice": {"type": "string", "enum": ["v1=0", "v2=0"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "grid": _GRID,
        "solver": _SOLVER,
        "model": _MODEL,
        "train": _TRAIN,
        "loss": _LOSS,
        "benchmark": _BENCHMARK,
        "export": _EXPORT,
    },
}


def validate_config(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc.message}") from exc
    return doc


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(doc)
