"""Experiment configuration.

One YAML file drives everything; every field below can be overridden there.
Sections mirror the package modules::

    camera:   {crf_gamma: 2.2, read_noise_sigma: 0.0002, ...}
    scene:    {attenuation_db: 60, transition_frames: 12, ...}
    detector: {...}
    matcher:  {...}
    network:  {resolution: 64, conv_widths: [8, 16, 32, 32], ...}
    training: {epochs: 12, learning_rate: 0.001, ...}
    pipeline: {...}
    eval:     {...}
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .controllers import DEFAULT_INITIAL
from .features import DetectorConfig, MatcherConfig
from .model import NetworkConfig, TrainConfig
from .params import CameraParams
from .scene_sim import CameraModel, TunnelConfig


@dataclass(frozen=True)
class PipelineConfig:
    """Data collection and labelling for the two-round training procedure."""

    train_episodes: int = 8
    static_episodes: int = 1
    attenuation_db: tuple[float, float] = (40.0, 70.0)
    transition_frames: tuple[float, float] = (6.0, 18.0)
    outdoor_level_scale: tuple[float, float] = (0.5, 2.0)
    metric: str = "hybrid"
    weight: float = 0.5
    rounds: int = 2
    round2_episodes: int = 6
    initial_gain_db: float = DEFAULT_INITIAL.gain_db
    initial_exposure_s: float = DEFAULT_INITIAL.exposure_s

    @property
    def initial(self) -> CameraParams:
        return CameraParams(self.initial_gain_db, self.initial_exposure_s)


@dataclass(frozen=True)
class ReactiveConfig:
    target: float = 0.45
    rate: float = 0.15


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 10
    seed_offset: int = 1000
    margin: int = 15
    transition_threshold_db: float = 1.0
    n_min: int = 20
    k: int = 3
    controllers: tuple[str, ...] = ("reactive_ae_ag", "gradient_metric", "learned")


@dataclass(frozen=True)
class ExperimentConfig:
    camera: CameraModel = field(default_factory=CameraModel)
    scene: TunnelConfig = field(default_factory=TunnelConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    reactive: ReactiveConfig = field(default_factory=ReactiveConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValueError(f"section for {cls.__name__} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        default = getattr(cls(), key) if _has_default(names[key]) else None
        if isinstance(default, tuple) or isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def _has_default(f: dataclasses.Field) -> bool:
    return f.default is not dataclasses.MISSING or f.default_factory is not dataclasses.MISSING


SECTIONS = {
    "camera": CameraModel, "scene": TunnelConfig, "detector": DetectorConfig,
    "matcher": MatcherConfig, "network": NetworkConfig, "training": TrainConfig,
    "pipeline": PipelineConfig, "reactive": ReactiveConfig, "eval": EvalConfig,
}


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    unknown = set(data) - set(SECTIONS) - {"seed"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {name: _build(cls, data.get(name)) for name, cls in SECTIONS.items()}
    return ExperimentConfig(seed=int(data.get("seed", 0)), **kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
