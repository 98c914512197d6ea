"""Why a reactive controller loses track at a tunnel entrance.

The reactive surrogate changes exposure by at most 15% per frame. After a
60 dB drop it needs ln(1000)/ln(1.15), about 50 frames, to recover; this
script measures it on a stationary camera and plots mean intensity.

    python demos/reactive_lag.py [--out reactive_lag.png]
"""

import argparse
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from oracles import lag_model_frames, reactive_lag_frames  # noqa: E402

ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--out", default="reactive_lag.png")
args = ap.parse_args()

fig, ax = plt.subplots(figsize=(7, 3))
for rate in (0.15, 0.3):
    frames, mus, step = reactive_lag_frames(rate=rate)
    print(f"rate {rate:.2f}: model {lag_model_frames(60.0, rate)} frames, measured {frames}")
    ax.plot(range(-step, len(mus) - step), mus, label=f"rate {rate} ({frames} frames)")
ax.axvline(0, color="k", lw=0.8)
ax.set_xlabel("frames after the 60 dB step")
ax.set_ylabel("mean intensity")
ax.legend()
fig.tight_layout()
fig.savefig(args.out, dpi=100)
print(f"analytic bound at 0.15: ceil(ln 1000 / ln 1.15) = {math.ceil(math.log(1000) / math.log(1.15))}")
print(f"wrote {args.out}")
