"""Where training labels come from.

Camera 1 follows the reactive controller; camera 2 sees perturbed copies of
its commands. For every step the labeller looks a few frames ahead and picks
the parameters that produced the most features (feat), the most verified
matches (match), or a blend of the two (hybrid). This prints how far those
targets sit from what the reactive controller actually did.

    python demos/labels.py
"""

import numpy as np

from predictive_exposure import CameraModel, ReactiveAEAG, TunnelConfig, collect_episode, make_tunnel_scene
from predictive_exposure.labeler import WindowScorer, label, labelable_steps

scene = make_tunnel_scene(TunnelConfig(viewport=(128, 128), pre_frames=25, tunnel_frames=25, post_frames=25),
                          np.random.default_rng(3))
ds = collect_episode(scene, ReactiveAEAG(), CameraModel(), seed=3)
scorer = WindowScorer(ds)

print(f"{'t':>3} {'light':>8} {'reactive':>16} {'feat':>16} {'match':>16} {'hybrid':>16}")
fmt = lambda p: f"{p.gain_db:4.1f}dB {p.exposure_s * 1e3:6.2f}ms"
for t in labelable_steps(len(ds))[::6]:
    ref = ds.records[t].reference.params
    targets = [label(ds, t, m, 0.5, scorer) for m in ("feat", "match", "hybrid")]
    print(f"{t:3d} {scene.illumination_profile[t]:8.2f} {fmt(ref):>16} " + " ".join(f"{fmt(p):>16}" for p in targets))

brighter = sum(label(ds, t, "hybrid", 0.5, scorer).brightness > ds.records[t].reference.params.brightness
               for t in labelable_steps(len(ds)))
print(f"hybrid target is brighter than the reactive command at {brighter}/{len(labelable_steps(len(ds)))} steps")
