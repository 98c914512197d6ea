"""Closed-loop episodes, NFM statistics and controller comparisons."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .controllers import Controller
from .features import DetectorConfig, MatcherConfig, detect_features, match_features
from .params import CameraParams
from .scene_sim import CameraModel, RadianceScene, frame_rng, render_frame, segment_tags

NFM_UNDEFINED = -1
SEGMENTS = ("static", "dynamic")
TRACE_COLUMNS = ("time_index", "gain_db", "exposure_s", "mean_intensity", "m_feat", "nfm", "segment")


@dataclass
class EpisodeTrace:
    controller: str
    scene: str
    seed: int
    time_index: np.ndarray
    gain_db: np.ndarray
    exposure_s: np.ndarray
    mean_intensity: np.ndarray
    m_feat: np.ndarray
    nfm: np.ndarray                # NFM_UNDEFINED at frame 0
    segment: list[str]

    def __len__(self) -> int:
        return len(self.time_index)

    def params(self, t: int) -> CameraParams:
        return CameraParams(float(self.gain_db[t]), float(self.exposure_s[t]))

    def rows(self):
        for k in range(len(self)):
            yield (int(self.time_index[k]), float(self.gain_db[k]), float(self.exposure_s[k]),
                   float(self.mean_intensity[k]), int(self.m_feat[k]), int(self.nfm[k]), self.segment[k])


@dataclass
class SegmentStats:
    segment: str
    median_nfm: float
    min_nfm: float
    n_frames: int
    tracking_failed: bool
    empty: bool = False


def run_episode(controller: Controller, scene: RadianceScene, model: CameraModel, seed: int,
                detector: DetectorConfig = DetectorConfig(), matcher: MatcherConfig = MatcherConfig(),
                margin: int = 15, threshold_db: float = 1.0) -> EpisodeTrace:
    """Single-camera closed loop; NFM is measured between consecutive frames."""
    controller.reset()
    n = len(scene)
    gain = np.zeros(n)
    exposure = np.zeros(n)
    mean_i = np.zeros(n)
    feats = np.zeros(n, dtype=np.int64)
    nfm = np.full(n, NFM_UNDEFINED, dtype=np.int64)
    command = controller.initial_params()
    history = []
    prev = None
    for t in range(n):
        frame = render_frame(scene, t, command, model, frame_rng(seed, t, 1), camera_id=1)
        f = detect_features(frame.image, detector)
        gain[t], exposure[t] = command.gain_db, command.exposure_s
        mean_i[t] = frame.mean_intensity()
        feats[t] = len(f)
        if prev is not None:
            nfm[t] = match_features(prev, f, matcher, np.random.default_rng([int(seed), t, 0xE7])).n_inliers
        prev = f
        history.append(frame)
        if len(history) > 3:
            history.pop(0)
        command = controller.step(history).next
    return EpisodeTrace(controller.identity, scene.name, int(seed), np.arange(n), gain, exposure,
                        mean_i, feats, nfm, segment_tags(scene, margin, threshold_db))


def longest_low_run(nfm: Sequence[int], n_min: int) -> int:
    best = run = 0
    for v in nfm:
        run = run + 1 if v < n_min else 0
        best = max(best, run)
    return best


def tracking_failed(nfm: Sequence[int], n_min: int = 20, k: int = 3) -> bool:
    """True iff NFM stays below ``n_min`` for at least ``k`` consecutive frames."""
    return longest_low_run(nfm, n_min) >= k


def _segment_runs(trace: EpisodeTrace, tag: str) -> list[np.ndarray]:
    """Contiguous runs of defined-NFM frames carrying ``tag``."""
    runs, current = [], []
    for k in range(len(trace)):
        if trace.segment[k] == tag and trace.nfm[k] != NFM_UNDEFINED:
            current.append(int(trace.nfm[k]))
        elif current:
            runs.append(np.asarray(current))
            current = []
    if current:
        runs.append(np.asarray(current))
    return runs


def segment_stats(trace: EpisodeTrace, n_min: int = 20, k: int = 3) -> list[SegmentStats]:
    if len(trace) == 0:
        raise ValueError("empty trace")
    out = []
    for tag in SEGMENTS:
        runs = _segment_runs(trace, tag)
        n_frames = sum(trace.segment[i] == tag for i in range(len(trace)))
        if not runs:
            out.append(SegmentStats(tag, float("nan"), float("nan"), n_frames, False, empty=True))
            continue
        values = np.concatenate(runs)
        failed = any(tracking_failed(r, n_min, k) for r in runs)
        out.append(SegmentStats(tag, float(np.median(values)), float(values.min()), n_frames, failed))
    return out


def episode_failed(trace: EpisodeTrace, n_min: int = 20, k: int = 3) -> bool:
    """Tracking failure anywhere in the episode."""
    return tracking_failed(trace.nfm[trace.nfm != NFM_UNDEFINED], n_min, k)


def stats_from_values(nfm: Sequence[int], segment: str = "all", n_min: int = 20, k: int = 3) -> SegmentStats:
    values = np.asarray(nfm)
    if len(values) == 0:
        return SegmentStats(segment, float("nan"), float("nan"), 0, False, empty=True)
    return SegmentStats(segment, float(np.median(values)), float(values.min()), len(values),
                        tracking_failed(values, n_min, k))


# ------------------------------------------------------------------ comparison

@dataclass
class ComparisonRow:
    controller: str
    segment: str
    median_nfm: float
    min_nfm: float
    episodes: int
    tracking_successes: int


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    per_episode: list[dict] = field(default_factory=list)
    traces: list[EpisodeTrace] = field(default_factory=list, repr=False)

    def row(self, controller: str, segment: str) -> ComparisonRow:
        return next(r for r in self.rows if r.controller == controller and r.segment == segment)

    def to_records(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "episodes": self.per_episode}

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        head = f"{'controller':<16} {'segment':<8} {'median NFM':>11} {'min NFM':>9} {'tracking ok':>12}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.controller:<16} {r.segment:<8} {r.median_nfm:>11.1f} {r.min_nfm:>9.1f} "
                         f"{r.tracking_successes:>6}/{r.episodes:<5}")
        return "\n".join(lines) + "\n"


def aggregate(traces: Sequence[EpisodeTrace], n_min: int = 20, k: int = 3) -> ComparisonReport:
    """Average per-episode median/min NFM per (controller, segment).

    A tracking success is an episode without a failure anywhere (``segment='all'``)
    or within the segment. Order of ``traces`` does not matter.
    """
    per_episode = []
    for tr in traces:
        for st in segment_stats(tr, n_min, k) + [_whole(tr, n_min, k)]:
            per_episode.append({"controller": tr.controller, "scene": tr.scene, "seed": tr.seed,
                                **asdict(st)})
    per_episode.sort(key=lambda d: (d["controller"], d["segment"], d["scene"], d["seed"]))
    rows = []
    controllers = sorted({tr.controller for tr in traces})
    for name in controllers:
        for seg in SEGMENTS + ("all",):
            eps = [d for d in per_episode if d["controller"] == name and d["segment"] == seg and not d["empty"]]
            if not eps:
                continue
            rows.append(ComparisonRow(
                name, seg,
                float(np.mean([d["median_nfm"] for d in eps])),
                float(np.mean([d["min_nfm"] for d in eps])),
                len(eps),
                sum(not d["tracking_failed"] for d in eps)))
    return ComparisonReport(rows, per_episode, list(traces))


def _whole(trace: EpisodeTrace, n_min: int, k: int) -> SegmentStats:
    values = trace.nfm[trace.nfm != NFM_UNDEFINED]
    return stats_from_values(values, "all", n_min, k)


def compare_controllers(controllers: dict[str, Callable[[], Controller]], scenes: Sequence[RadianceScene],
                        seeds: Sequence[int], model: CameraModel, detector: DetectorConfig = DetectorConfig(),
                        matcher: MatcherConfig = MatcherConfig(), margin: int = 15, n_min: int = 20,
                        k: int = 3) -> ComparisonReport:
    """Run every controller on every (scene, seed) pair and aggregate.

    ``controllers`` maps a report label to a zero-argument factory so each
    episode starts from a fresh controller instance.
    """
    if len(controllers) < 2:
        raise ValueError("at least two controllers are needed for a comparison")
    traces = []
    for label, factory in controllers.items():
        for scene, seed in zip(scenes, seeds):
            tr = run_episode(factory(), scene, model, seed, detector, matcher, margin)
            tr.controller = label
            traces.append(tr)
    return aggregate(traces, n_min, k)
