"""Experiment configuration: a JSON file validated against SCHEMA, then CLI overrides."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import jsonschema

TASKS = ("project", "regress", "pca", "cca", "synth", "bench")

_paths = {"type": "string"}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "task": {"enum": list(TASKS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "out": {"type": "string"},
        "budget": {"type": ["number", "null"], "minimum": 0},
        "budgets": {"type": ["array", "null"], "items": {"type": "number", "minimum": 0}},
        "caps": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
        "groups": {"type": ["string", "null"]},
        "m": {"type": "integer", "minimum": 1},
        "lazy": {"type": "boolean"},
        "compat_budget": {"type": "boolean"},
        "paper_literal_metric": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
        "snr_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                     "minItems": 1},
        "reps": {"type": "integer", "minimum": 1},
        "d": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 2},
        "n_true_groups": {"type": "integer", "minimum": 1},
        "group_size": {"type": "integer", "minimum": 1},
        "sigma2": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                             {"enum": ["auto", "meta"]}]},
        "bf_threshold": {"type": "number"},
        "max_iters": {"type": "integer", "minimum": 0},
        "tol": {"type": "number", "minimum": 0},
        "per_view_noise": {"type": "boolean"},
        "format": {"enum": ["csv", "bin"]},
        "bench_instances": {"type": "integer", "minimum": 1},
        "bench_d": {"type": "integer", "minimum": 2, "maximum": 16},
        "inputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "precision": _paths, "potential": _paths, "mean": _paths,
                "covariance": _paths, "Z": _paths, "y": _paths, "T": _paths,
                "data": _paths, "prior_precision": _paths, "adjacency": _paths,
                "views": {"type": "array", "items": _paths, "minItems": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "bench"
    seed: int = 0
    out: str = "out"
    budget: float | None = None
    budgets: list | None = None
    caps: list | None = None
    groups: str | None = None
    m: int = 3
    lazy: bool = False
    compat_budget: bool = False
    paper_literal_metric: bool = False
    workers: int = 1
    snr_list: list = field(default_factory=lambda: [10000.0, 1000.0, 100.0, 10.0, 1.0, 0.1])
    reps: int = 10
    d: int = 1000
    n: int = 1000
    n_true_groups: int = 5
    group_size: int = 4
    sigma2: float | str = "meta"
    bf_threshold: float = math.log(10.0)
    max_iters: int = 200
    tol: float = 1e-7
    per_view_noise: bool = False
    format: str = "csv"
    bench_instances: int = 50
    bench_d: int = 10
    inputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config {where}: {exc.message}") from exc
        return cls(**raw)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        raw = {}
        if path is not None:
            with open(path) as fh:
                try:
                    raw = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
            if not isinstance(raw, dict):
                raise ConfigError(f"{path}: top level must be an object")
        merged = dict(raw)
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == "inputs":
                merged["inputs"] = {**merged.get("inputs", {}), **value}
            else:
                merged[key] = value
        return cls.from_dict(merged)

    def to_dict(self) -> dict:
        return asdict(self)


FIELDS = tuple(f.name for f in fields(ExperimentConfig))
