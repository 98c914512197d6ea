"""Train the predictive controller with both collection rounds and benchmark it.

With the default smoke config this finishes in about a minute and the
numbers are meaningless; pass ``--config configs/desk.yaml`` for the real
run (most of an hour on one CPU core).

    python demos/train_and_compare.py [--config configs/desk.yaml] [--out-dir demo_run]
"""

import argparse
import logging
from pathlib import Path

from predictive_exposure.config import load_config
from predictive_exposure.model import save_checkpoint
from predictive_exposure.pipeline import run_benchmark, train_pipeline
from predictive_exposure.plotting import plot_traces
from predictive_exposure.storage import save_report

ROOT = Path(__file__).resolve().parent.parent
ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--config", type=Path, default=ROOT / "configs" / "smoke.yaml")
ap.add_argument("--out-dir", type=Path, default=Path("demo_run"))
args = ap.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

cfg = load_config(args.config)
result = train_pipeline(cfg)
for rr in result.rounds:
    print(f"round {rr.round}: {rr.n_samples} samples")
args.out_dir.mkdir(parents=True, exist_ok=True)
save_checkpoint(result.checkpoint, args.out_dir / "learned.ckpt")

for static in (False, True):
    report = run_benchmark(cfg, result.checkpoint, static=static)
    name = "static" if static else "tunnel"
    print(f"\n{name} benchmark\n{report.to_table()}")
    save_report(report, args.out_dir, name)
    first = [tr for tr in report.traces if tr.seed == report.traces[0].seed]
    plot_traces(first, args.out_dir / f"{name}.png", f"{name}, seed {first[0].seed}", cfg.eval.n_min)
print(f"outputs in {args.out_dir}")
