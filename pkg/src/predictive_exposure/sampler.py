"""Dual-camera data collection.

Camera 1 follows a reference controller; camera 2 sees the same pose with
the reference command multiplicatively perturbed. Perturbation signs cycle
through the four (gain, exposure) quadrants every four frames.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .controllers import Controller, ReactiveAEAG, make_controller
from .params import CameraParams
from .scene_sim import CameraModel, Frame, RadianceScene, frame_rng, render_frame

log = logging.getLogger(__name__)

# (gain sign, exposure sign) for quadrant_index 0..3
QUADRANTS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
MAX_SCALE = 0.5
ZERO_GAIN_STEP_DB = 3.0


@dataclass
class PerturbationState:
    rng: np.random.Generator
    quadrant_index: int = 0

    @property
    def signs(self) -> tuple[int, int]:
        return QUADRANTS[self.quadrant_index % 4]


def apply_perturbation(reference: CameraParams, signs: tuple[int, int], u_gain: float,
                       u_exposure: float, zero_gain_db: float) -> CameraParams:
    """Deterministic core of :func:`perturb_params`.

    Gain (in dB) and exposure are multiplied by ``1 + sign * u``. A reference
    gain of exactly 0 dB cannot be scaled, so a positive gain sign adds
    ``zero_gain_db`` instead and a negative one leaves the gain at 0.
    """
    s_g, s_e = signs
    if reference.gain_db == 0.0:
        gain = zero_gain_db if s_g > 0 else 0.0
    else:
        gain = reference.gain_db * (1.0 + s_g * u_gain)
    exposure = reference.exposure_s * (1.0 + s_e * u_exposure)
    return CameraParams(gain, exposure)


def perturb_params(reference: CameraParams, state: PerturbationState) -> CameraParams:
    u_gain, u_exposure = state.rng.uniform(0.0, MAX_SCALE, size=2)
    # (0, 3] rather than [0, 3): never re-emit a zero gain on a positive draw
    delta = ZERO_GAIN_STEP_DB * (1.0 - state.rng.uniform())
    out = apply_perturbation(reference, state.signs, u_gain, u_exposure, delta)
    state.quadrant_index = (state.quadrant_index + 1) % 4
    return out


@dataclass
class CollectedRecord:
    reference: Frame
    perturbed: Frame
    signs: tuple[int, int]

    def frame(self, camera_id: int) -> Frame:
        return self.reference if camera_id == 1 else self.perturbed


@dataclass
class CollectedDataset:
    records: list[CollectedRecord]
    controller: str
    seed: int
    round: int = 1
    scene_name: str = "scene"
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def frame(self, t: int, camera_id: int) -> Frame:
        return self.records[t].frame(camera_id)


def collect_episode(scene: RadianceScene, controller: Controller, model: CameraModel,
                    seed: int, round: int = 1) -> CollectedDataset:
    """Run ``controller`` on camera 1 and perturbations of its commands on camera 2."""
    controller.reset()
    state = PerturbationState(np.random.default_rng([int(seed), 0xC2]))
    command = controller.initial_params()
    history: list[Frame] = []
    records = []
    for t in range(len(scene)):
        _check_finite(command, controller, t)
        signs = state.signs
        perturbed_params = perturb_params(command, state)
        ref = render_frame(scene, t, command, model, frame_rng(seed, t, 1), camera_id=1)
        pert = render_frame(scene, t, perturbed_params, model, frame_rng(seed, t, 2), camera_id=2)
        records.append(CollectedRecord(ref, pert, signs))
        history.append(ref)
        if len(history) > 3:
            history.pop(0)
        command = controller.step(history).next
    return CollectedDataset(records, controller.identity, int(seed), round, scene.name)


def _check_finite(params: CameraParams, controller: Controller, t: int):
    if not (math.isfinite(params.gain_db) and math.isfinite(params.exposure_s)):
        raise RuntimeError(f"controller {controller.identity!r} produced non-finite params {params} at t={t}")


def reference_controller_for_round(round: int, checkpoint=None, **kwargs) -> Controller:
    """Round 1 uses the reactive AG+AE stand-in; later rounds the trained network."""
    if round < 1:
        raise ValueError("round must be >= 1")
    if round == 1:
        return ReactiveAEAG(**kwargs)
    if checkpoint is None:
        raise ValueError(f"round {round} collection requires a trained checkpoint")
    if round > 2:
        log.warning("collection round %d: iterations beyond the second give diminishing returns", round)
    return make_controller("learned", checkpoint=checkpoint, **kwargs)


def iterative_collection(round: int, prior_checkpoint, scenes: Sequence[RadianceScene],
                         seeds: Sequence[int], model: CameraModel,
                         initial: CameraParams | None = None) -> list[CollectedDataset]:
    """Collect one episode per (scene, seed) with the round's reference controller."""
    kwargs = {} if initial is None else {"initial": initial}
    datasets = []
    for scene, seed in zip(scenes, seeds):
        ref = reference_controller_for_round(round, prior_checkpoint, **kwargs)
        datasets.append(collect_episode(scene, ref, model, seed, round=round))
    return datasets
