"""On-disk formats: collected episodes, label manifests, traces and reports.

Layout of a collected episode directory::

    episode.json            provenance (controller, seed, round, scene, config digest)
                            and one entry per time step with both cameras' params
    frames/t0000_c1.png     8- or 16-bit grayscale frames

Label manifests and traces are CSV files with a header row. Traces start
with ``#``-prefixed metadata lines (controller, scene, seed) and then the
columns of :data:`~predictive_exposure.evaluation.TRACE_COLUMNS`.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np

from .evaluation import TRACE_COLUMNS, ComparisonReport, EpisodeTrace
from .labeler import LabeledSample
from .params import CameraParams
from .sampler import CollectedDataset, CollectedRecord
from .scene_sim import Frame

LABEL_COLUMNS = ("episode_dir", "time_index", "camera_t2", "camera_t1", "camera_t0",
                 "target_gain", "target_exposure", "metric", "weight")


# ------------------------------------------------------------------ frames

def frame_filename(t: int, camera_id: int) -> str:
    return f"t{t:04d}_c{camera_id}.png"


def write_frame(frame: Frame, path) -> None:
    if not cv2.imwrite(str(path), frame.image):
        raise OSError(f"could not write {path}")


def read_frame(path, params: CameraParams, camera_id: int, time_index: int) -> Frame:
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise OSError(f"could not read {path}")
    bits = 16 if image.dtype == np.uint16 else 8
    return Frame(image, params, camera_id, time_index, bits)


# ------------------------------------------------------------------ episodes

def save_dataset(ds: CollectedDataset, directory, config_digest: str = "") -> Path:
    directory = Path(directory)
    (directory / "frames").mkdir(parents=True, exist_ok=True)
    steps = []
    for t, rec in enumerate(ds.records):
        entry = {"t": t, "signs": list(rec.signs)}
        for cam in (1, 2):
            f = rec.frame(cam)
            write_frame(f, directory / "frames" / frame_filename(t, cam))
            entry[f"camera{cam}"] = {"gain_db": f.params.gain_db, "exposure_s": f.params.exposure_s,
                                     "bits": f.bits}
        steps.append(entry)
    manifest = {"controller": ds.controller, "seed": ds.seed, "round": ds.round,
                "scene": ds.scene_name, "config_digest": config_digest, "meta": ds.meta, "steps": steps}
    (directory / "episode.json").write_text(json.dumps(manifest, indent=1))
    return directory


def load_dataset(directory) -> CollectedDataset:
    directory = Path(directory)
    manifest = json.loads((directory / "episode.json").read_text())
    records = []
    for entry in manifest["steps"]:
        t = entry["t"]
        frames = []
        for cam in (1, 2):
            p = entry[f"camera{cam}"]
            frames.append(read_frame(directory / "frames" / frame_filename(t, cam),
                                     CameraParams(p["gain_db"], p["exposure_s"]), cam, t))
        records.append(CollectedRecord(frames[0], frames[1], tuple(entry["signs"])))
    return CollectedDataset(records, manifest["controller"], manifest["seed"], manifest["round"],
                            manifest["scene"], manifest.get("meta", {}))


def dataset_dirs(root) -> list[Path]:
    """Episode directories below ``root``, sorted by path."""
    return sorted(p.parent for p in Path(root).rglob("episode.json"))


# ------------------------------------------------------------------ labels

def save_label_manifest(rows: Iterable[tuple[str, LabeledSample]], path) -> int:
    """Write ``(episode_dir, sample)`` pairs; returns the row count.

    Episode directories are stored relative to the manifest's own directory
    so a run directory can be moved as a whole.
    """
    n = 0
    base = Path(path).resolve().parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LABEL_COLUMNS)
        for episode_dir, s in rows:
            rel = os.path.relpath(Path(episode_dir).resolve(), base)
            w.writerow([rel, s.time_index, *s.cameras, repr(s.target[0]), repr(s.target[1]),
                        s.metric, repr(s.weight)])
            n += 1
    return n


def load_label_manifest(path) -> list[LabeledSample]:
    """Rebuild samples from a manifest, loading each referenced episode once."""
    cache: dict[str, CollectedDataset] = {}
    base = Path(path).resolve().parent
    samples = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ep = str(base / row["episode_dir"])
            if ep not in cache:
                cache[ep] = load_dataset(ep)
            ds = cache[ep]
            t = int(row["time_index"])
            cams = (int(row["camera_t2"]), int(row["camera_t1"]), int(row["camera_t0"]))
            frames = tuple(ds.frame(t - 2 + k, c) for k, c in enumerate(cams))
            samples.append(LabeledSample(frames, (float(row["target_gain"]), float(row["target_exposure"])),
                                         row["metric"], float(row["weight"]), ep, t))
    return samples


# ------------------------------------------------------------------ traces

def save_trace(trace: EpisodeTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# controller={trace.controller}\n# scene={trace.scene}\n# seed={trace.seed}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), *row[4:]])


def load_trace(path) -> EpisodeTrace:
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        else:
            body.append(line)
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
        raise ValueError(f"{path}: unexpected trace columns {reader.fieldnames}")
    rows = list(reader)
    col = lambda name, kind: np.array([kind(r[name]) for r in rows])
    return EpisodeTrace(meta.get("controller", "?"), meta.get("scene", "?"), int(meta.get("seed", 0)),
                        col("time_index", int), col("gain_db", float), col("exposure_s", float),
                        col("mean_intensity", float), col("m_feat", int), col("nfm", int),
                        [r["segment"] for r in rows])


def trace_filename(trace: EpisodeTrace) -> str:
    return f"trace_{trace.controller}_{trace.scene}_seed{trace.seed}.csv"


def save_traces(traces: Sequence[EpisodeTrace], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for tr in traces:
        p = directory / trace_filename(tr)
        save_trace(tr, p)
        paths.append(p)
    return paths


# ------------------------------------------------------------------ reports and histories

def save_report(report: ComparisonReport, directory, stem: str = "report") -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    txt, js = directory / f"{stem}.txt", directory / f"{stem}.json"
    txt.write_text(report.to_table())
    js.write_text(report.to_json())
    return txt, js


def save_history(history: Sequence[dict], path) -> None:
    if not history:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(history[0]))
        w.writeheader()
        w.writerows(history)
