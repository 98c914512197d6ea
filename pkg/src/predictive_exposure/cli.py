"""Command-line driver.

    predictive-exposure [--seed N] [--config FILE] [--out-dir DIR] [--quiet] COMMAND ...

Commands mirror the pipeline stages: ``scene``, ``collect``, ``label``,
``train``, ``eval``, ``compare`` and ``plot``. Everything is written below
``--out-dir`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np

from .config import ExperimentConfig, load_config, save_config
from .labeler import METRICS
from .model import load_checkpoint, save_checkpoint

log = logging.getLogger("predictive_exposure")

CONTROLLERS = ("fixed", "reactive_ae_ag", "gradient_metric", "learned")


class CliError(Exception):
    """A user-facing failure; reported without a traceback."""


def _weight(text: str) -> float:
    try:
        w = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= w <= 1.0:
        raise argparse.ArgumentTypeError(f"weight must lie in [0, 1], got {w}")
    return w


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="predictive-exposure",
                                 description="Simulate, label, train and benchmark learned exposure control.")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--config", type=Path, default=None, help="YAML experiment config")
    ap.add_argument("--out-dir", type=Path, default=Path("runs"))
    ap.add_argument("--quiet", action="store_true", help="only warnings and errors")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("scene", help="generate a benchmark scene and write its profile and a preview")
    p.add_argument("--static", action="store_true", help="constant illumination")

    p = sub.add_parser("collect", help="collect dual-camera training episodes")
    p.add_argument("--round", type=_positive, default=1)
    p.add_argument("--checkpoint", type=Path, help="reference network for round >= 2")

    p = sub.add_parser("label", help="label collected episodes into a training manifest")
    p.add_argument("--data", type=Path, help="directory of collected episodes (default: OUT/collect)")
    p.add_argument("--metric", choices=METRICS, default=None)
    p.add_argument("--weight", type=_weight, default=None, help="hybrid weight in [0, 1]")
    p.add_argument("--output", type=Path, help="manifest path (default: OUT/labels.csv)")

    p = sub.add_parser("train", help="train the network for one round")
    p.add_argument("--round", type=_positive, default=1)
    p.add_argument("--checkpoint", type=Path,
                   help="previous round's checkpoint (default: OUT/round{R-1}.ckpt)")
    p.add_argument("--labels", type=Path, nargs="+",
                   help="train on these manifests instead of collecting and labelling afresh")

    p = sub.add_parser("eval", help="run one controller on the benchmark episodes")
    p.add_argument("--controller", choices=CONTROLLERS, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--static", action="store_true")
    p.add_argument("--episodes", type=_positive)

    p = sub.add_parser("compare", help="benchmark several controllers on shared scenes and seeds")
    p.add_argument("--controllers", default=None,
                   help="comma-separated names (default from config)")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--static", action="store_true")
    p.add_argument("--episodes", type=_positive)

    p = sub.add_parser("plot", help="plot NFM and parameter curves from trace files")
    p.add_argument("traces", type=Path, nargs="+")
    p.add_argument("--output", type=Path, help="image path (default: OUT/plot.png)")
    p.add_argument("--title")
    return ap


# ------------------------------------------------------------------ helpers

def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _checkpoint(path: Path | None, required: bool, what: str):
    if path is None:
        if required:
            raise CliError(f"{what} needs --checkpoint")
        return None
    if not path.exists():
        raise CliError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _with_episodes(cfg: ExperimentConfig, n: int | None) -> ExperimentConfig:
    return cfg if n is None else dataclasses.replace(cfg, eval=dataclasses.replace(cfg.eval, episodes=n))


# ------------------------------------------------------------------ commands

def cmd_scene(args, cfg):
    from .pipeline import benchmark_scenes
    from .scene_sim import segment_tags

    scenes, seeds = benchmark_scenes(_with_episodes(cfg, 1), static=args.static)
    scene, seed = scenes[0], seeds[0]
    out = args.out_dir / "scene"
    out.mkdir(parents=True, exist_ok=True)
    tags = segment_tags(scene, cfg.eval.margin, cfg.eval.transition_threshold_db)
    with open(out / "profile.csv", "w") as fh:
        fh.write("time_index,illumination,x,y,segment\n")
        for t in range(len(scene)):
            x, y = scene.positions[t]
            fh.write(f"{t},{scene.illumination_profile[t]!r},{x!r},{y!r},{tags[t]}\n")
    field = np.log(scene.radiance_field)
    preview = (255 * (field - field.min()) / max(np.ptp(field), 1e-12)).astype(np.uint8)
    cv2.imwrite(str(out / "radiance_preview.png"), preview)
    info = {"name": scene.name, "seed": seed, "frames": len(scene), "viewport": list(scene.viewport),
            "dynamic_range_db": float(20 * np.log10(scene.illumination_profile.max()
                                                    / scene.illumination_profile.min())),
            "dynamic_frames": int(sum(t == "dynamic" for t in tags))}
    (out / "scene.json").write_text(json.dumps(info, indent=2))
    print(json.dumps(info))


def cmd_collect(args, cfg):
    from .pipeline import collect_round
    from .storage import save_dataset

    prior = _checkpoint(args.checkpoint, args.round >= 2, f"round {args.round} collection")
    datasets = collect_round(cfg, args.round, prior)
    root = args.out_dir / "collect" / f"round{args.round}"
    for k, ds in enumerate(datasets):
        save_dataset(ds, root / f"episode{k:03d}", cfg.digest())
    print(f"collected {len(datasets)} episodes into {root}")


def _label(cfg, dirs, metric=None, weight=None):
    from .pipeline import label_datasets
    from .storage import load_dataset

    rows = []
    for d in dirs:
        for s in label_datasets(cfg, [load_dataset(d)], metric, weight):
            s.episode = str(d)
            rows.append((str(d), s))
    return rows


def cmd_label(args, cfg):
    from .storage import dataset_dirs, save_label_manifest

    data = args.data or args.out_dir / "collect"
    dirs = dataset_dirs(data)
    if not dirs:
        raise CliError(f"no collected episodes under {data}")
    rows = _label(cfg, dirs, args.metric, args.weight)
    out = args.output or args.out_dir / "labels.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    n = save_label_manifest(rows, out)
    print(f"wrote {n} samples from {len(dirs)} episodes to {out}")


def cmd_train(args, cfg):
    from .pipeline import collect_round, train_round
    from .storage import (dataset_dirs, load_label_manifest, save_dataset, save_history,
                          save_label_manifest)

    prior = None
    if args.round >= 2:
        path = args.checkpoint or args.out_dir / f"round{args.round - 1}.ckpt"
        if not Path(path).exists():
            raise CliError(f"round {args.round} training needs the round {args.round - 1} checkpoint "
                           f"({path} not found); run 'train --round {args.round - 1}' first")
        prior = load_checkpoint(path)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    if args.labels:
        samples = [s for m in args.labels for s in load_label_manifest(m)]
    else:
        root = args.out_dir / "collect" / f"round{args.round}"
        for k, ds in enumerate(collect_round(cfg, args.round, prior)):
            save_dataset(ds, root / f"episode{k:03d}", cfg.digest())
        manifest = args.out_dir / f"labels_round{args.round}.csv"
        save_label_manifest(_label(cfg, dataset_dirs(root)), manifest)
        manifests = [args.out_dir / f"labels_round{r}.csv" for r in range(1, args.round + 1)]
        samples = [s for m in manifests if m.exists() for s in load_label_manifest(m)]
    if not samples:
        raise CliError("no training samples")
    history: list[dict] = []
    ckpt = train_round(cfg, samples, args.round, prior, history)
    path = args.out_dir / f"round{args.round}.ckpt"
    save_checkpoint(ckpt, path)
    save_history(history, args.out_dir / f"history_round{args.round}.csv")
    save_config(cfg, args.out_dir / "config.yaml")
    print(f"trained round {args.round} on {len(samples)} samples -> {path}")


def _report(cfg, names, checkpoint, static, out):
    from .pipeline import run_benchmark
    from .storage import save_report, save_traces

    report = run_benchmark(cfg, checkpoint, static=static, names=names)
    save_traces(report.traces, out / "traces")
    save_report(report, out)
    return report


def cmd_eval(args, cfg):
    from .evaluation import aggregate, run_episode
    from .pipeline import benchmark_scenes, controller_factories
    from .storage import save_report, save_traces

    cfg = _with_episodes(cfg, args.episodes)
    ckpt = _checkpoint(args.checkpoint, args.controller == "learned", "the learned controller")
    factory = controller_factories(cfg, ckpt, [args.controller])[args.controller]
    scenes, seeds = benchmark_scenes(cfg, args.static)
    traces = [run_episode(factory(), sc, cfg.camera, seed, cfg.detector, cfg.matcher, cfg.eval.margin,
                          cfg.eval.transition_threshold_db) for sc, seed in zip(scenes, seeds)]
    report = aggregate(traces, cfg.eval.n_min, cfg.eval.k)
    out = args.out_dir / "eval" / f"{args.controller}{'-static' if args.static else ''}"
    save_traces(traces, out / "traces")
    save_report(report, out)
    print(report.to_table(), end="")


def cmd_compare(args, cfg):
    cfg = _with_episodes(cfg, args.episodes)
    names = tuple(n.strip() for n in args.controllers.split(",")) if args.controllers else cfg.eval.controllers
    unknown = set(names) - set(CONTROLLERS)
    if unknown:
        raise CliError(f"unknown controllers: {sorted(unknown)}")
    if len(set(names)) < 2:
        raise CliError("compare needs at least two controllers")
    ckpt = _checkpoint(args.checkpoint, "learned" in names, "comparing the learned controller")
    out = args.out_dir / ("compare-static" if args.static else "compare")
    report = _report(cfg, names, ckpt, args.static, out)
    print(report.to_table(), end="")


def cmd_plot(args, cfg):
    from .plotting import plot_traces
    from .storage import load_trace

    traces = []
    for p in args.traces:
        if not p.exists():
            raise CliError(f"trace not found: {p}")
        traces.append(load_trace(p))
    out = args.output or args.out_dir / "plot.png"
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_traces(traces, out, args.title, cfg.eval.n_min)
    print(f"wrote {out}")


COMMANDS = {"scene": cmd_scene, "collect": cmd_collect, "label": cmd_label, "train": cmd_train,
            "eval": cmd_eval, "compare": cmd_compare, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
