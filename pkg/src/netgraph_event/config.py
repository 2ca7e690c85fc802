"""JSON experiment configuration.

Sections: ``synth``, ``samples``, ``encoder``, ``loss``, ``train`` and
``experiment``. Every key is optional and falls back to the dataclass default.
The JSON key ``lambda`` maps to the ``lam`` field.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ingest import SynthConfig
from .objective import LossConfig
from .samples import DEFAULT_STRIDE, DEFAULT_T
from .trainer import VARIANTS, TrainConfig


@dataclass(frozen=True)
class SampleConfig:
    T: int = DEFAULT_T
    stride: int = DEFAULT_STRIDE
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    # Share of train label-1 samples hidden as unknown (label-scarce runs).
    relabel_unknown_fraction: float = 0.0

    def __post_init__(self):
        if not 0 <= self.relabel_unknown_fraction < 1:
            raise ConfigError("relabel_unknown_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class EncoderSection:
    K: int = 12
    C: int = 32
    D: int = 256


@dataclass(frozen=True)
class ExperimentSection:
    variants: tuple[str, ...] = ("full",)
    seed: int = 1
    repeats: int = 3
    seeds: tuple[int, ...] | None = None
    network_id: str | None = None
    logs_csv: str | None = None
    events_csv: str | None = None
    panel_dir: str | None = None
    tick_interval_s: int = 300
    # Optional validation grid for lambda, e.g. [0.01, 0.1, 1].
    lambda_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ConfigError(f"unknown variants {bad}; choose from {VARIANTS}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.panel_dir is None and (self.logs_csv is None) != (self.events_csv is None):
            raise ConfigError("logs_csv and events_csv must be given together")

    def seed_list(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.seed + i for i in range(self.repeats)]

    @property
    def synthetic(self) -> bool:
        return self.panel_dir is None and self.logs_csv is None


@dataclass(frozen=True)
class Config:
    synth: SynthConfig = field(default_factory=SynthConfig)
    samples: SampleConfig = field(default_factory=SampleConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        for section in ("loss", "train"):
            out[section]["lambda"] = out[section].pop("lam")
        return out


_SECTIONS = {
    "synth": SynthConfig,
    "samples": SampleConfig,
    "encoder": EncoderSection,
    "loss": LossConfig,
    "train": TrainConfig,
    "experiment": ExperimentSection,
}
_TUPLE_KEYS = {"variants", "seeds", "lambda_grid"}


def _build(cls, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        name = "lam" if key == "lambda" else key
        if name not in names:
            raise ConfigError(f"unknown key {key!r} in section {section!r}")
        if name in _TUPLE_KEYS and value is not None:
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"section {section!r}: {exc}") from exc


def config_from_dict(raw: dict) -> Config:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    bad = [k for k, v in raw.items() if not isinstance(v, dict)]
    if bad:
        raise ConfigError(f"config sections {bad} must be objects")
    raw = {k: dict(v) for k, v in raw.items()}
    loss_raw, train_raw = raw.get("loss", {}), raw.get("train", {})
    # One lambda drives both: the train section wins when both are present.
    lam = train_raw.get("lambda", loss_raw.get("lambda"))
    if lam is not None:
        loss_raw["lambda"] = train_raw["lambda"] = lam
        raw["loss"], raw["train"] = loss_raw, train_raw
    parts = {name: _build(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return Config(**parts)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(raw)
