"""NFM and camera-parameter curves against frame index."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import NFM_UNDEFINED, EpisodeTrace  # noqa: E402


def _dynamic_spans(segment: Sequence[str]) -> list[tuple[int, int]]:
    spans, start = [], None
    for k, tag in enumerate(list(segment) + ["static"]):
        if tag == "dynamic" and start is None:
            start = k
        elif tag != "dynamic" and start is not None:
            spans.append((start, k - 1))
            start = None
    return spans


def plot_traces(traces: Sequence[EpisodeTrace], path, title: str | None = None, n_min: int | None = 20):
    """Three stacked panels: NFM, exposure (ms) and gain (dB), one line per trace.

    Dynamic segments of the first trace are shaded; ``n_min`` draws the
    tracking-failure floor on the NFM panel.
    """
    if not traces:
        raise ValueError("nothing to plot")
    fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
    for tr in traces:
        label = f"{tr.controller} ({tr.scene}, seed {tr.seed})" if len(traces) > 1 else tr.controller
        nfm = np.where(tr.nfm == NFM_UNDEFINED, np.nan, tr.nfm.astype(float))
        axes[0].plot(tr.time_index, nfm, lw=1, label=label)
        axes[1].plot(tr.time_index, tr.exposure_s * 1e3, lw=1)
        axes[2].plot(tr.time_index, tr.gain_db, lw=1)
    for a, b in _dynamic_spans(traces[0].segment):
        for ax in axes:
            ax.axvspan(a, b, color="0.9", zorder=0)
    if n_min is not None:
        axes[0].axhline(n_min, color="r", lw=0.8, ls="--")
    axes[0].set_ylabel("NFM")
    axes[1].set_ylabel("exposure [ms]")
    axes[1].set_yscale("log")
    axes[2].set_ylabel("gain [dB]")
    axes[2].set_xlabel("frame")
    axes[0].legend(fontsize=7, loc="best")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=110)
    plt.close(fig)
    return Path(path)
