"""Run configuration: presets, config files, and command-line overrides.

Precedence, lowest to highest: preset defaults, JSON config file, explicit
overrides. Unknown sections or keys are rejected so typos fail loudly. The
``KBQA_CONFIG`` environment variable supplies a default config file path.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .synth import SynthConfig
from .trainer import TrainConfig, desk_train_config, paper_train_config
from .transe import TransEConfig

CONFIG_ENV_VAR = "KBQA_CONFIG"


@dataclass
class RunConfig:
    train: TrainConfig
    transe: TransEConfig
    synth: SynthConfig

    def validate(self) -> None:
        self.train.validate()
        self.transe.validate()
        self.synth.validate()


def _preset(name: str) -> RunConfig:
    if name == "paper":
        return RunConfig(paper_train_config(), TransEConfig(), SynthConfig())
    if name == "desk":
        return RunConfig(desk_train_config(), TransEConfig(), SynthConfig())
    raise ValueError(f"unknown preset {name!r}; choose 'paper' or 'desk'")


PRESET_NAMES = ("paper", "desk")
_SECTIONS = ("train", "transe", "synth")


def _apply(section_name: str, target, values: dict) -> None:
    fields = {f.name: f for f in dataclasses.fields(target)}
    for key, value in values.items():
        if key not in fields:
            raise ValueError(f"unknown config key {section_name}.{key}")
        current = getattr(target, key)
        if isinstance(current, bool):
            value = bool(value)
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        elif isinstance(current, str):
            value = str(value)
        setattr(target, key, value)


def build_run_config(preset: str = "desk", config_path: str | None = None,
                     overrides: dict[str, dict] | None = None) -> RunConfig:
    """Assemble a validated RunConfig from preset + file + overrides."""
    cfg = _preset(preset)
    path = config_path or os.environ.get(CONFIG_ENV_VAR)
    layers = []
    if path:
        try:
            layers.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as err:
            raise ValueError(f"config file {path}: invalid JSON: {err}") from None
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for section_name, values in layer.items():
            if section_name not in _SECTIONS:
                raise ValueError(
                    f"unknown config section {section_name!r}; expected one of {_SECTIONS}"
                )
            _apply(section_name, getattr(cfg, section_name), values)
    cfg.validate()
    return cfg
