"""Two-round collect -> label -> train procedure and the benchmark set-up."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .controllers import GradientMetricReactive, ReactiveAEAG, make_controller
from .evaluation import ComparisonReport, compare_controllers
from .labeler import WindowScorer, build_training_set
from .model import Checkpoint, train
from .sampler import CollectedDataset, iterative_collection
from .scene_sim import RadianceScene, make_tunnel_scene

log = logging.getLogger(__name__)


@dataclass
class RoundResult:
    round: int
    datasets: list[CollectedDataset]
    n_samples: int
    checkpoint: Checkpoint
    history: list[dict]
    seconds: float


@dataclass
class PipelineResult:
    rounds: list[RoundResult] = field(default_factory=list)

    @property
    def checkpoint(self) -> Checkpoint:
        return self.rounds[-1].checkpoint


def training_scene(cfg: ExperimentConfig, round: int, episode: int, static: bool = False) -> tuple[RadianceScene, int]:
    """Randomized tunnel (or constant-light) scene for one collection episode."""
    p = cfg.pipeline
    rng = np.random.default_rng([cfg.seed, round, episode, 0x5C])
    lo, hi = p.outdoor_level_scale
    scale = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    scene_cfg = dataclasses.replace(
        cfg.scene,
        outdoor_level=cfg.scene.outdoor_level * scale,
        attenuation_db=0.0 if static else float(rng.uniform(*p.attenuation_db)),
        transition_frames=float(rng.uniform(*p.transition_frames)),
        name=f"train-r{round}-e{episode}{'-static' if static else ''}",
    )
    seed = int(rng.integers(0, 2**31 - 1))
    return make_tunnel_scene(scene_cfg, np.random.default_rng(seed)), seed


def collect_round(cfg: ExperimentConfig, round: int, prior: Checkpoint | None) -> list[CollectedDataset]:
    """Collect the round's tunnel and constant-light training episodes."""
    p = cfg.pipeline
    n_tunnel = p.train_episodes if round == 1 else p.round2_episodes
    specs = [(e, False) for e in range(n_tunnel)] + [(n_tunnel + e, True) for e in range(p.static_episodes)]
    scenes, seeds = zip(*(training_scene(cfg, round, e, static) for e, static in specs))
    return iterative_collection(round, prior, scenes, seeds, cfg.camera, initial=p.initial)


def label_datasets(cfg: ExperimentConfig, datasets, metric: str | None = None,
                   weight: float | None = None) -> list:
    p = cfg.pipeline
    metric = p.metric if metric is None else metric
    weight = p.weight if weight is None else weight
    samples = []
    for ds in datasets:
        samples += build_training_set(ds, metric, weight, WindowScorer(ds, cfg.detector, cfg.matcher))
    return samples


def run_round(cfg: ExperimentConfig, round: int, prior: Checkpoint | None,
              prior_samples: list | None = None) -> tuple[RoundResult, list]:
    """Collect, label and train one round; training sees this round's and all earlier samples."""
    start = time.perf_counter()
    datasets = collect_round(cfg, round, prior)
    samples = list(prior_samples or []) + label_datasets(cfg, datasets)
    log.info("round %d: %d episodes, %d samples", round, len(datasets), len(samples))
    history: list[dict] = []
    ckpt = train_round(cfg, samples, round, prior, history)
    return RoundResult(round, datasets, len(samples), ckpt, history, time.perf_counter() - start), samples


def train_round(cfg: ExperimentConfig, samples, round: int, prior: Checkpoint | None,
                history: list | None = None) -> Checkpoint:
    """Train on ``samples``; later rounds fine-tune the previous round's network."""
    if round >= 2 and prior is None:
        raise ValueError(f"round {round} training needs the round {round - 1} checkpoint")
    ckpt = train(samples, cfg.network, cfg.training, seed=cfg.seed + round, round=round,
                 init=prior, history=history)
    ckpt.meta["config_digest"] = cfg.digest()
    return ckpt


def train_pipeline(cfg: ExperimentConfig) -> PipelineResult:
    """Round 1 with the reactive reference, then retrain with the network as reference."""
    result = PipelineResult()
    ckpt, samples = None, []
    for r in range(1, cfg.pipeline.rounds + 1):
        rr, samples = run_round(cfg, r, ckpt, samples)
        ckpt = rr.checkpoint
        result.rounds.append(rr)
    return result


def benchmark_scenes(cfg: ExperimentConfig, static: bool = False) -> tuple[list[RadianceScene], list[int]]:
    """Held-out evaluation scenes: the configured tunnel (or constant light), fresh textures."""
    scenes, seeds = [], []
    for e in range(cfg.eval.episodes):
        seed = cfg.eval.seed_offset + 1000 * cfg.seed + e + (500 if static else 0)
        scene_cfg = cfg.scene if not static else dataclasses.replace(cfg.scene, attenuation_db=0.0)
        scene_cfg = dataclasses.replace(scene_cfg, name=f"{'static' if static else 'tunnel'}-{seed}")
        scenes.append(make_tunnel_scene(scene_cfg, np.random.default_rng(seed)))
        seeds.append(seed)
    return scenes, seeds


def controller_factories(cfg: ExperimentConfig, checkpoint: Checkpoint | None, names=None) -> dict:
    initial = cfg.pipeline.initial
    out = {}
    for name in names or cfg.eval.controllers:
        if name == "reactive_ae_ag":
            out[name] = lambda: ReactiveAEAG(cfg.reactive.target, cfg.reactive.rate, initial=initial)
        elif name == "gradient_metric":
            out[name] = lambda: GradientMetricReactive(rate=cfg.reactive.rate, initial=initial)
        elif name == "learned":
            if checkpoint is None:
                raise ValueError("comparison includes 'learned' but no checkpoint was given")
            out[name] = lambda: make_controller("learned", checkpoint=checkpoint, initial=initial)
        elif name == "fixed":
            out[name] = lambda: make_controller("fixed", params=initial)
        else:
            raise ValueError(f"unknown controller {name!r}")
    return out


def run_benchmark(cfg: ExperimentConfig, checkpoint: Checkpoint | None, static: bool = False,
                  names=None) -> ComparisonReport:
    scenes, seeds = benchmark_scenes(cfg, static)
    return compare_controllers(controller_factories(cfg, checkpoint, names), scenes, seeds, cfg.camera,
                               cfg.detector, cfg.matcher, cfg.eval.margin, cfg.eval.n_min, cfg.eval.k)
