"""Experiment configuration: JSON file -> validated ``ExperimentConfig``.

Defaults follow the paper's training recipe scaled to the desk model: batch
6, initial / incremental / single-class-incremental learning rates in the
ratio 0.04 : 0.005 : 0.001, and a rank-8 adapter on a 64-wide encoder.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema

from .continual.engine import LossConfig, TrainConfig
from .continual.modes import TrainMode
from .errors import ConfigError
from .nn import ModelSpec


def schema() -> dict:
    return json.loads(resources.files("clora").joinpath("config.schema.json").read_text())


def _field_path(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        key = extra[0] if extra else "?"
        return f"{path}.{key}" if path else key
    return path or "<root>"


def validate(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"{_field_path(err)}: {err.message}")


@dataclass
class ExperimentConfig:
    datasets: list[str]
    mode: str = "CLORA"
    schedule: str = "3-1"
    dataset_ids: list[int] | None = None
    seed: int = 0
    rank: int = 8
    epochs: int = 12
    batch_size: int = 6
    momentum: float = 0.9
    weight_decay: float = 0.0
    hflip: bool = False
    learning_rates: dict = field(default_factory=lambda: {
        "initial": 0.04, "incremental": 0.005, "incremental_small": 0.001, "small_increment_max": 1})
    lora: dict = field(default_factory=lambda: {"scaling": 1.0, "init_std": 0.02})
    loss: dict = field(default_factory=lambda: {"kd_weight": 10.0, "kd_temperature": 1.0, "loss_hook": "mib"})
    model: dict = field(default_factory=dict)
    ranges: list[str] | None = None
    jt_miou_all: float | str | None = "auto"
    out: str = "runs/experiment"

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        validate(raw)
        merged = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            value = raw[f.name]
            if f.name in ("learning_rates", "lora", "loss"):
                default = getattr(cls(datasets=[]), f.name)
                value = {**default, **value}
            merged[f.name] = value
        cfg = cls(**merged)
        if base_dir is not None:
            cfg.datasets = [str((Path(base_dir) / p)) if not Path(p).is_absolute() else p for p in cfg.datasets]
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw, base_dir=path.parent)

    def check(self) -> None:
        try:
            self.train_config()
            self.model_spec()
            TrainMode.parse(self.mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def mode_enum(self) -> TrainMode:
        return TrainMode.parse(self.mode)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(**self.model)

    def train_config(self) -> TrainConfig:
        lr = self.learning_rates
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_initial=lr["initial"],
            lr_incremental=lr["incremental"],
            lr_incremental_small=lr["incremental_small"],
            small_increment_max=lr["small_increment_max"],
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            rank=self.rank,
            lora_scaling=self.lora["scaling"],
            lora_init_std=self.lora["init_std"],
            hflip=self.hflip,
            loss=LossConfig(**self.loss),
        )

    def echo(self) -> dict:
        """Config as recorded in reports (output location excluded so reruns compare equal)."""
        d = asdict(self)
        d.pop("out")
        return d
