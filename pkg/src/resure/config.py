"""Experiment configuration: JSON schema, validation and typed views."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from .data import Corruption, TaskSpec, parse_mixture
from .reweight import ReweightConfig
from .trainer import STRATEGIES, TrainConfig


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_rate = {"type": "number", "minimum": 0, "maximum": 1}
_mixture = {"type": "string", "pattern": "^[HNL](\\+[HNL])*$"}

_TASK = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["classification", "regression"]},
        "dim": _pos_int,
        "num_classes": {"type": "integer", "minimum": 2},
        "num_groups": _pos_int,
        "margin": {"type": "number", "minimum": 0},
        "group_feature_noise": {"type": "number", "minimum": 0},
        "group_probs": {"type": ["array", "null"], "items": _rate},
        "residual_std": {"type": "number", "minimum": 0},
        "clean_accuracy": _rate,
        "rule_seed": _int,
        "input_shift": _num,
    },
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["data", "train"],
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "task": _TASK,
                "drift_task": _TASK,
                "tiers": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"H": _rate, "N": _rate, "L": _rate},
                },
                "corruption": {"enum": [c.value for c in Corruption]},
                "jitter_sigma": {"type": "number", "exclusiveMinimum": 0},
                "per_tier": _pos_int,
                "eval_size": _pos_int,
                "mixture": _mixture,
                "drift_fraction": {"type": "number", "minimum": 0},
                "seed": _int,
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["linear", "mlp"]},
                "hidden_width": _pos_int,
                "strategy": {"enum": list(STRATEGIES)},
                "prefilter": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
                "epochs": _pos_int,
                "batch_size": _pos_int,
                "grad_accum": _pos_int,
                "lr": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "warmup_ratio": _rate,
                "seed": _int,
                "eval_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "probe_epochs": _pos_int,
                "reweight": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "alpha": {"type": "number", "minimum": 0},
                        "floor_percentile": {
                            "type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 100,
                        },
                        "min_group_count": {"type": "integer", "minimum": 2},
                        "warmup_samples": {"type": "integer", "minimum": 0},
                        "ramp_steps": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mixtures", "seeds"],
            "properties": {
                "mixtures": {"type": "array", "items": _mixture, "minItems": 1},
                "strategies": {
                    "type": "array", "items": {"enum": list(STRATEGIES)}, "minItems": 1,
                },
                "seeds": {"type": "array", "items": _int, "minItems": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {
                    "type": "array", "items": {"enum": ["csv", "json"]}, "uniqueItems": True,
                },
            },
        },
    },
}


@dataclass(frozen=True)
class DataConfig:
    task: TaskSpec
    drift_task: TaskSpec
    tiers: dict
    corruption: Corruption = Corruption.LABEL_SHUFFLE
    jitter_sigma: float = 1.0
    per_tier: int = 1000
    eval_size: int = 1000
    mixture: str = "H+N+L"
    drift_fraction: float = 0.0
    seed: int = 0


DEFAULT_TIERS = {"H": 0.0, "N": 0.15, "L": 0.40}
DEFAULT_DRIFT = {"rule_seed": 1, "input_shift": 1.0}


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    data: DataConfig
    train: TrainConfig
    sweep: dict | None
    output: dict

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _field_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(raw: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        msg = "; ".join(f"{_field_path(e)}: {e.message}" for e in errors)
        raise ConfigError(f"invalid config: {msg}")


def _task(section: dict | None, base: dict | None = None) -> TaskSpec:
    args = dict(base or {})
    args.update(section or {})
    if args.get("group_probs") is not None:
        args["group_probs"] = tuple(args["group_probs"])
    return TaskSpec(**args)


def parse(raw: dict) -> ExperimentConfig:
    validate(raw)
    raw = copy.deepcopy(raw)
    d = raw.get("data", {})
    t = raw.get("train", {})
    try:
        task_section = d.get("task", {})
        task = _task(task_section)
        drift = _task(d.get("drift_task", DEFAULT_DRIFT), base=task_section)
        if drift.num_classes != task.num_classes or drift.dim != task.dim:
            raise ConfigError("drift_task must keep dim and num_classes of the primary task")
        data = DataConfig(
            task=task,
            drift_task=drift,
            tiers={**DEFAULT_TIERS, **d.get("tiers", {})},
            corruption=Corruption(d.get("corruption", Corruption.LABEL_SHUFFLE.value)),
            **{k: d[k] for k in ("jitter_sigma", "per_tier", "eval_size", "mixture",
                                  "drift_fraction", "seed") if k in d},
        )
        parse_mixture(data.mixture)
        train_args = {k: v for k, v in t.items() if k != "reweight"}
        train = TrainConfig(reweight=ReweightConfig(**t.get("reweight", {})), **train_args)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc
    sweep = raw.get("sweep")
    if sweep is not None:
        sweep = {"strategies": ["resure", "uniform"], **sweep}
    output = {"dir": "runs", "formats": ["csv", "json"], **raw.get("output", {})}
    return ExperimentConfig(raw=raw, data=data, train=train, sweep=sweep, output=output)


def load(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse(raw)

