"""Gain/exposure controllers sharing one interface.

Every controller exposes ``initial_params()`` (the command used for the very
first frame) and ``step(history)`` which maps the frames captured so far to
the command for the next frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np

from .params import (EXPOSURE_MAX_S, EXPOSURE_MIN_S, GAIN_MAX_DB, GAIN_MIN_DB, CameraParams,
                     gain_linear_to_db)
from .scene_sim import Frame

DEFAULT_INITIAL = CameraParams(0.0, 1e-3)
DEFAULT_GAMMAS = (0.5, 0.67, 0.8, 1.0, 1.25, 1.5, 2.0)


@dataclass(frozen=True)
class ControllerCommand:
    next: CameraParams
    identity: str


class Controller:
    identity = "controller"

    def __init__(self, initial: CameraParams = DEFAULT_INITIAL):
        self.initial = initial

    def reset(self) -> None:
        pass

    def initial_params(self) -> CameraParams:
        return self.initial

    def step(self, history: Sequence[Frame]) -> ControllerCommand:
        raise NotImplementedError

    def _command(self, params: CameraParams) -> ControllerCommand:
        return ControllerCommand(params, self.identity)


def apply_brightness_factor(params: CameraParams, factor: float) -> CameraParams:
    """Scale ``exposure * gain`` by ``factor`` with an exposure-priority schedule.

    Brightening lengthens the exposure until it reaches its maximum and only
    then raises gain; darkening removes gain first and shortens the exposure
    once gain is back at 0 dB. A factor of exactly 1 returns ``params``.
    """
    if factor == 1.0:
        return params
    exposure, gain_db = params.exposure_s, params.gain_db
    if factor > 1.0:
        new_exposure = min(exposure * factor, EXPOSURE_MAX_S)
        rest = factor * exposure / new_exposure
        new_gain = min(gain_db + gain_linear_to_db(rest), GAIN_MAX_DB) if rest > 1.0 else gain_db
    else:
        gain_room = gain_db - GAIN_MIN_DB
        drop_db = -gain_linear_to_db(factor)
        if drop_db <= gain_room:
            return CameraParams(gain_db - drop_db, exposure)
        new_gain = GAIN_MIN_DB
        rest = factor * 10.0 ** (gain_room / 20.0)
        new_exposure = max(exposure * rest, EXPOSURE_MIN_S)
    return CameraParams(new_gain, new_exposure)


class FixedController(Controller):
    identity = "fixed"

    def __init__(self, params: CameraParams = DEFAULT_INITIAL):
        super().__init__(params)

    def step(self, history):
        return self._command(self.initial)


class ReactiveAEAG(Controller):
    """Rate-limited mean-intensity feedback (stand-in for a built-in AG+AE).

    The correction factor ``target / mean`` is clipped to ``[1 - rate, 1 + rate]``
    per frame, which is what makes it lag behind fast lighting changes.
    """

    identity = "reactive_ae_ag"

    def __init__(self, target: float = 0.45, rate: float = 0.15, floor: float = 1e-3,
                 initial: CameraParams = DEFAULT_INITIAL):
        super().__init__(initial)
        self.target, self.rate, self.floor = target, rate, floor

    def correction(self, mean_intensity: float) -> float:
        r = self.target / max(mean_intensity, self.floor)
        return min(max(r, 1.0 - self.rate), 1.0 + self.rate)

    def step(self, history):
        latest = history[-1]
        r = self.correction(latest.mean_intensity())
        return self._command(apply_brightness_factor(latest.params, r))


def gradient_information(img: np.ndarray, delta: float = 0.06, lam: float = 1e3) -> float:
    """Saturating log-gradient score of a [0, 1] image.

    Gradient magnitudes below ``delta`` count as noise and contribute nothing;
    larger ones contribute ``log(lam * (m - delta) + 1)`` normalized so a
    unit gradient scores 1. Returns the mean over pixels.
    """
    img = np.asarray(img, dtype=np.float32)
    gx = cv2.Sobel(img, cv2.CV_32F, 1, 0, ksize=3) / 4.0
    gy = cv2.Sobel(img, cv2.CV_32F, 0, 1, ksize=3) / 4.0
    mag = np.minimum(np.hypot(gx, gy), 1.0)
    keep = mag >= delta
    if not keep.any():
        return 0.0
    norm = math.log(lam * (1.0 - delta) + 1.0)
    return float(np.log(lam * (mag[keep] - delta) + 1.0).sum() / (norm * img.size))


class GradientMetricReactive(Controller):
    """Pick the gamma that maximizes gradient information, then step towards it.

    The winning gamma is turned into a brightness ratio (mean of the
    gamma-corrected frame over the mean of the frame) and applied with the
    same rate limit and schedule as :class:`ReactiveAEAG`.
    """

    identity = "gradient_metric"

    def __init__(self, gammas: Sequence[float] = DEFAULT_GAMMAS, rate: float = 0.15,
                 floor: float = 1e-3, delta: float = 0.06, lam: float = 1e3,
                 initial: CameraParams = DEFAULT_INITIAL):
        super().__init__(initial)
        # candidates ordered by distance from gamma = 1 so ties resolve towards 1
        self.gammas = tuple(sorted(gammas, key=lambda g: (abs(math.log(g)), g)))
        self.rate, self.floor, self.delta, self.lam = rate, floor, delta, lam

    def scores(self, img: np.ndarray) -> dict[float, float]:
        return {g: gradient_information(img ** g, self.delta, self.lam) for g in self.gammas}

    def best_gamma(self, img: np.ndarray) -> float:
        scores = self.scores(img)
        best = max(scores.values())
        return next(g for g in self.gammas if scores[g] == best)

    def step(self, history):
        latest = history[-1]
        img = latest.normalized_image()
        gamma = self.best_gamma(img)
        if gamma == 1.0:
            return self._command(latest.params)
        mu = max(float(img.mean()), self.floor)
        r = float((img ** gamma).mean()) / mu
        r = min(max(r, 1.0 - self.rate), 1.0 + self.rate)
        return self._command(apply_brightness_factor(latest.params, r))


class LearnedController(Controller):
    """Predictive controller backed by a trained network checkpoint."""

    identity = "learned"

    def __init__(self, checkpoint, initial: CameraParams = DEFAULT_INITIAL):
        super().__init__(initial)
        self.checkpoint = checkpoint

    def step(self, history):
        from .model import predict_next

        return self._command(predict_next(history, self.checkpoint))


def make_controller(name: str, checkpoint=None, **kwargs) -> Controller:
    if name == "fixed":
        return FixedController(**kwargs)
    if name == "reactive_ae_ag":
        return ReactiveAEAG(**kwargs)
    if name == "gradient_metric":
        return GradientMetricReactive(**kwargs)
    if name == "learned":
        if checkpoint is None:
            raise ValueError("the learned controller needs a checkpoint")
        return LearnedController(checkpoint, **kwargs)
    raise ValueError(f"unknown controller {name!r}")
