"""A drive through a simulated tunnel, seen with three fixed exposures.

No single setting works everywhere: the short exposure is black inside the
tunnel, the long one is blown out outside. Run:

    python demos/tunnel_scene.py [--out tunnel_scene.png]
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from predictive_exposure import CameraModel, CameraParams, TunnelConfig, make_tunnel_scene, render_frame
from predictive_exposure.features import m_feat
from predictive_exposure.scene_sim import frame_rng, segment_tags

ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--out", default="tunnel_scene.png")
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

scene = make_tunnel_scene(TunnelConfig(viewport=(160, 160), pre_frames=40, tunnel_frames=40, post_frames=40),
                          np.random.default_rng(args.seed))
tags = segment_tags(scene)
print(f"{len(scene)} frames, illumination {scene.illumination_profile.max():.0f} -> "
      f"{scene.illumination_profile.min():.2f}, {tags.count('dynamic')} dynamic frames")

settings = {"short (0.1 ms)": CameraParams(0.0, 1e-4), "medium (2 ms)": CameraParams(6.0, 2e-3),
            "long (30 ms, 24 dB)": CameraParams(24.0, 30e-3)}
model = CameraModel()
times = [20, 60, 100]                    # outdoors, inside, outdoors again

fig, axes = plt.subplots(len(settings), len(times), figsize=(8, 8))
for row, (name, p) in enumerate(settings.items()):
    counts = [m_feat(render_frame(scene, t, p, model, frame_rng(args.seed, t, 1)).image)
              for t in range(len(scene))]
    print(f"{name:<20} features per frame: min {min(counts):4d}  median {int(np.median(counts)):4d}")
    for col, t in enumerate(times):
        img = render_frame(scene, t, p, model, frame_rng(args.seed, t, 1)).image
        axes[row, col].imshow(img, cmap="gray", vmin=0, vmax=255)
        axes[row, col].set_xticks([])
        axes[row, col].set_yticks([])
        axes[row, col].set_title(f"t={t}, {counts[t]} features", fontsize=8)
    axes[row, 0].set_ylabel(name, fontsize=8)
fig.tight_layout()
fig.savefig(args.out, dpi=100)
print(f"wrote {args.out}")
