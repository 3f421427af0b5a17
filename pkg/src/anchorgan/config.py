"""Experiment configuration: one JSON document driving every subcommand.

The schema mirrors the dataclasses it feeds. Validation is strict: unknown
keys are rejected, so a typo cannot silently fall back to a default.
"""

import dataclasses
import json
from pathlib import Path

from .curation import CurationConfig
from .errors import ConfigError
from .generator import GeneratorConfig
from .training import TrainConfig


@dataclasses.dataclass
class ExperimentConfig:
    generator: GeneratorConfig
    train: TrainConfig
    curation: CurationConfig
    data_dir: str = "data"
    run_dir: str = "runs/default"
    seed: int = 0


def _from_dict(cls, payload: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(payload) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys at {path}: {sorted(unknown)}")
    kwargs = {}
    for key, value in payload.items():
        field = fields[key]
        if dataclasses.is_dataclass(field.type) or field.type in (
            GeneratorConfig,
            TrainConfig,
            CurationConfig,
        ):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.{key} must be an object")
            kwargs[key] = _from_dict(field.type, value, f"{path}.{key}")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def default_x_periods(d: float) -> tuple:
    """Longest period tied to the anchor spacing so translation by d is exact."""
    return (d, d / 2.0, d / 4.0, d / 8.0)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    When ``generator.x_periods`` is omitted, the bank defaults to periods
    tied to ``train.d`` so that all embeddings repeat exactly every anchor
    spacing.
    """
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"generator", "train", "curation", "data_dir", "run_dir", "seed"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    gen_payload = dict(payload.get("generator", {}))
    train_payload = dict(payload.get("train", {}))
    if "seed" in payload and "seed" not in train_payload:
        train_payload["seed"] = payload["seed"]
    train = _from_dict(TrainConfig, train_payload, "train")
    if "x_periods" not in gen_payload:
        gen_payload["x_periods"] = default_x_periods(train.d)
    generator = _from_dict(GeneratorConfig, gen_payload, "generator")
    curation = _from_dict(CurationConfig, dict(payload.get("curation", {})), "curation")
    return ExperimentConfig(
        generator=generator,
        train=train,
        curation=curation,
        data_dir=payload.get("data_dir", "data"),
        run_dir=payload.get("run_dir", "runs/default"),
        seed=payload.get("seed", 0),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def save_config(path, cfg: ExperimentConfig) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2))
