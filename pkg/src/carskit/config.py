"""Experiment configuration files (JSON) and their schema."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .metrics import DEFAULT_LEVELS
from .spectrum import DEFAULT_N_CHANNELS
from .synth import SynthConfig
from .uq.config import TrainConfig, UqMethod

_interval = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "carskit experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_pairs": {"type": "integer", "minimum": 1},
        "n_channels": {"type": "integer", "minimum": 8, "multipleOf": 2},
        "replicates": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "levels": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                   "minItems": 1},
        "synth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_peaks_range": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                  "minItems": 2, "maxItems": 2},
                "amplitude_range": _interval,
                "center_range": _interval,
                "gamma_range": _interval,
                "sigmoid_steepness_range": _interval,
                "sigmoid_c1_range": _interval,
                "sigmoid_c2_range": _interval,
                "polynomial_bounds": _interval,
                "p_sigmoid": {"type": "number", "minimum": 0, "maximum": 1},
                "noise": {"type": "object", "additionalProperties": False,
                          "properties": {"sigma_max": {"type": "number", "minimum": 0}}},
                "resonant_scale": {"enum": ["max", "none"]},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": [m.value for m in UqMethod]},
                "physics_on": {"type": "boolean"},
                "weights": {"type": "object", "additionalProperties": False,
                            "properties": {k: {"type": "number", "minimum": 0}
                                           for k in ("lambda_data", "lambda_kk", "lambda_smooth")}},
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "network": {"type": "object", "additionalProperties": False, "properties": {
                    "n_blocks": {"type": "integer", "minimum": 1},
                    "width": {"type": "integer", "minimum": 1},
                    "kernel_size": {"type": "integer", "minimum": 1},
                    "dropout_p": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                    "variance_head": {"type": "boolean"},
                }},
                "method_params": {"type": "object", "additionalProperties": False, "properties": {
                    "mc_passes": {"type": "integer", "minimum": 1},
                    "ensemble_size": {"type": "integer", "minimum": 1},
                    "bnn_samples": {"type": "integer", "minimum": 1},
                    "prior_std": {"type": "number", "exclusiveMinimum": 0},
                    "init_std_scale": {"type": "number", "exclusiveMinimum": 0},
                    "gp_max_train": {"type": "integer", "minimum": 1},
                    "gp_noise_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                                      "minItems": 1},
                    "gp_holdout_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                }},
            },
        },
        "benchmark": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "methods": {"type": "array", "items": {"enum": [m.value for m in UqMethod]}, "minItems": 1},
                "physics": {"type": "array", "items": {"type": "boolean"}, "minItems": 1},
            },
        },
    },
}


@dataclass(frozen=True)
class BenchmarkGrid:
    methods: tuple[UqMethod, ...] = tuple(UqMethod)
    physics: tuple[bool, ...] = (False, True)

    def cells(self) -> list[tuple[UqMethod, bool]]:
        """Requested (method, physics) pairs; the GP only ever runs without physics."""
        out = []
        for m in self.methods:
            for phys in self.physics:
                if m is UqMethod.GP_BASELINE and phys:
                    continue
                out.append((m, phys))
        if any(m is UqMethod.GP_BASELINE for m in self.methods) and (UqMethod.GP_BASELINE, False) not in out:
            out.append((UqMethod.GP_BASELINE, False))
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_pairs: int = 2000
    n_channels: int = DEFAULT_N_CHANNELS
    levels: tuple[float, ...] = tuple(float(v) for v in DEFAULT_LEVELS)
    output_dir: str = "runs"
    replicates: int = 10
    benchmark: BenchmarkGrid = field(default_factory=BenchmarkGrid)


def validate(raw: dict, source: str = "config") -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = ".".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{source}: {where}: {e.message}")
        raise ConfigError("\n".join(lines))


def from_dict(raw: dict, source: str = "config") -> ExperimentConfig:
    validate(raw, source)
    synth = SynthConfig.from_dict(raw.get("synth", {}))
    train = TrainConfig.from_dict(raw.get("train", {})) if "train" in raw else TrainConfig()
    bench_raw = raw.get("benchmark", {})
    bench = BenchmarkGrid(
        tuple(UqMethod.parse(m) for m in bench_raw.get("methods", [m.value for m in UqMethod])),
        tuple(bench_raw.get("physics", [False, True])),
    )
    return ExperimentConfig(
        synth=synth,
        train=train,
        n_pairs=raw.get("n_pairs", 2000),
        n_channels=raw.get("n_channels", DEFAULT_N_CHANNELS),
        levels=tuple(raw.get("levels", ExperimentConfig.levels)),
        output_dir=raw.get("output_dir", "runs"),
        replicates=raw.get("replicates", 10),
        benchmark=bench,
    )


def load(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return from_dict(raw, str(path))
