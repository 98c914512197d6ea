"""Self-supervised training targets from a collected dual-camera episode.

For a time step ``t`` the four future steps ``t+1 .. t+4`` are scanned:

* ``feat``:   the frame (camera i, offset a) with the most detected features;
* ``match``:  the sequential pair (I^i_{t+b}, I^j_{t+b+1}), b = 0..3, with the
              most RANSAC-verified matches; the target is the second frame's
              parameters;
* ``hybrid``: ``w * feat + (1 - w) * match`` in normalized units.

Ties go to the earliest time, then to camera 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .features import (DetectorConfig, Features, MatcherConfig, detect_features, match_features)
from .params import CameraParams, denormalize, normalize
from .sampler import CollectedDataset
from .scene_sim import Frame

WINDOW = 4
HISTORY = 3
CAMERA_PAIRS = ((1, 1), (1, 2), (2, 1), (2, 2))
METRICS = ("feat", "match", "hybrid")


def pair_rng(seed: int, t: int, i: int, j: int) -> np.random.Generator:
    """RANSAC stream for the pair (I^i_t, I^j_{t+1})."""
    return np.random.default_rng([int(seed), int(t), int(i), int(j), 0x4D])


class WindowScorer:
    """Caches feature and match counts of one episode.

    Each frame is detected once and each of the four camera pairings of a
    consecutive time pair is matched once, however many windows share them.
    """

    def __init__(self, dataset: CollectedDataset, detector: DetectorConfig = DetectorConfig(),
                 matcher: MatcherConfig = MatcherConfig()):
        self.dataset = dataset
        self.detector = detector
        self.matcher = matcher
        self._features: dict[tuple[int, int], Features] = {}
        self._matches: dict[tuple[int, int, int], int] = {}

    def features(self, t: int, camera: int) -> Features:
        key = (t, camera)
        if key not in self._features:
            self._features[key] = detect_features(self.dataset.frame(t, camera).image, self.detector)
        return self._features[key]

    def feat(self, t: int, camera: int) -> int:
        return len(self.features(t, camera))

    def match(self, t: int, i: int, j: int) -> int:
        """Inlier matches between camera ``i`` at ``t`` and camera ``j`` at ``t + 1``."""
        key = (t, i, j)
        if key not in self._matches:
            ms = match_features(self.features(t, i), self.features(t + 1, j), self.matcher,
                                pair_rng(self.dataset.seed, t, i, j))
            self._matches[key] = ms.n_inliers
        return self._matches[key]


def has_window(dataset: CollectedDataset, t: int) -> bool:
    return 0 <= t and t + WINDOW < len(dataset)


def _scorer(dataset, scorer):
    return WindowScorer(dataset) if scorer is None else scorer


def label_feat(dataset: CollectedDataset, t: int, scorer: WindowScorer | None = None) -> CameraParams | None:
    """Parameters of the most feature-rich frame in the window, or None past the end."""
    if not has_window(dataset, t):
        return None
    scorer = _scorer(dataset, scorer)
    best, best_key = -1, None
    for a in range(1, WINDOW + 1):
        for i in (1, 2):
            score = scorer.feat(t + a, i)
            if score > best:
                best, best_key = score, (t + a, i)
    return dataset.frame(*best_key).params


def label_match(dataset: CollectedDataset, t: int, scorer: WindowScorer | None = None) -> CameraParams | None:
    """Second-frame parameters of the best-matching sequential pair in the window."""
    if not has_window(dataset, t):
        return None
    scorer = _scorer(dataset, scorer)
    best, best_key = -1, None
    for b in range(WINDOW):
        for i, j in CAMERA_PAIRS:
            score = scorer.match(t + b, i, j)
            if score > best:
                best, best_key = score, (t + b + 1, j)
    return dataset.frame(*best_key).params


def blend(feat: CameraParams, match: CameraParams, w: float) -> CameraParams:
    fg, fe = normalize(feat)
    mg, me = normalize(match)
    return denormalize(w * fg + (1.0 - w) * mg, w * fe + (1.0 - w) * me)


def label_hybrid(dataset: CollectedDataset, t: int, w: float = 0.5,
                 scorer: WindowScorer | None = None) -> CameraParams | None:
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"hybrid weight must lie in [0, 1], got {w}")
    scorer = _scorer(dataset, scorer)
    feat = label_feat(dataset, t, scorer)
    if feat is None:
        return None
    if w == 1.0:
        return feat
    match = label_match(dataset, t, scorer)
    if w == 0.0:
        return match
    return blend(feat, match, w)


def label(dataset: CollectedDataset, t: int, metric: str = "hybrid", w: float = 0.5,
          scorer: WindowScorer | None = None) -> CameraParams | None:
    if metric == "feat":
        return label_feat(dataset, t, scorer)
    if metric == "match":
        return label_match(dataset, t, scorer)
    if metric == "hybrid":
        return label_hybrid(dataset, t, w, scorer)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass
class LabeledSample:
    frames: tuple[Frame, Frame, Frame]       # oldest first: t-2, t-1, t
    target: tuple[float, float]              # normalized (gain, exposure)
    metric: str
    weight: float
    episode: str
    time_index: int

    @property
    def input_params(self) -> tuple[CameraParams, CameraParams, CameraParams]:
        return tuple(f.params for f in self.frames)

    @property
    def cameras(self) -> tuple[int, int, int]:
        return tuple(f.camera_id for f in self.frames)

    @property
    def target_params(self) -> CameraParams:
        return denormalize(*self.target)


def labelable_steps(n_steps: int) -> range:
    """Steps with a full history of three frames and a full four-step future."""
    return range(HISTORY - 1, max(n_steps - WINDOW, HISTORY - 1))


def build_training_set(dataset: CollectedDataset, metric: str = "hybrid", w: float = 0.5,
                       scorer: WindowScorer | None = None, episode: str | None = None) -> list[LabeledSample]:
    """Eight samples per labelable step, one per choice of camera at t-2, t-1, t."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "hybrid" and not 0.0 <= w <= 1.0:
        raise ValueError(f"hybrid weight must lie in [0, 1], got {w}")
    scorer = _scorer(dataset, scorer)
    episode = episode or f"{dataset.scene_name}-seed{dataset.seed}-r{dataset.round}"
    samples = []
    for t in labelable_steps(len(dataset)):
        params = label(dataset, t, metric, w, scorer)
        if params is None:
            continue
        target = normalize(params)
        for cams in itertools.product((1, 2), repeat=HISTORY):
            frames = tuple(dataset.frame(t - HISTORY + 1 + k, c) for k, c in enumerate(cams))
            samples.append(LabeledSample(frames, target, metric, w, episode, t))
    return samples
