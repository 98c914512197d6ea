"""Camera gain/exposure parameters and their normalized form.

Gain is expressed in decibels, exposure in seconds. The controllers and the
network exchange parameters in a normalized form where each field is mapped
linearly onto [0, 1] over its legal range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

GAIN_MIN_DB = 0.0
GAIN_MAX_DB = 30.0
EXPOSURE_MIN_S = 75e-6
EXPOSURE_MAX_S = 30e-3


def gain_db_to_linear(gain_db: float) -> float:
    """Convert a gain in dB to the linear signal multiplier ``10**(dB/20)``."""
    return 10.0 ** (gain_db / 20.0)


def gain_linear_to_db(gain: float) -> float:
    return 20.0 * math.log10(gain)


@dataclass(frozen=True)
class CameraParams:
    """A (gain, exposure) pair. Out-of-range values are clamped on construction."""

    gain_db: float
    exposure_s: float

    def __post_init__(self):
        g, e = float(self.gain_db), float(self.exposure_s)
        if not (math.isfinite(g) and math.isfinite(e)):
            raise ValueError(f"non-finite camera parameters: gain_db={g}, exposure_s={e}")
        object.__setattr__(self, "gain_db", min(max(g, GAIN_MIN_DB), GAIN_MAX_DB))
        object.__setattr__(self, "exposure_s", min(max(e, EXPOSURE_MIN_S), EXPOSURE_MAX_S))

    @property
    def gain_linear(self) -> float:
        return gain_db_to_linear(self.gain_db)

    @property
    def brightness(self) -> float:
        """Total signal multiplier ``exposure * linear gain`` (seconds)."""
        return self.exposure_s * self.gain_linear

    def normalized(self) -> tuple[float, float]:
        return normalize(self)

    @classmethod
    def from_normalized(cls, gain_n: float, exposure_n: float) -> "CameraParams":
        return denormalize(gain_n, exposure_n)

    def as_dict(self) -> dict:
        return {"gain_db": self.gain_db, "exposure_s": self.exposure_s}


def normalize_gain(gain_db: float) -> float:
    return (gain_db - GAIN_MIN_DB) / (GAIN_MAX_DB - GAIN_MIN_DB)


def normalize_exposure(exposure_s: float) -> float:
    return (exposure_s - EXPOSURE_MIN_S) / (EXPOSURE_MAX_S - EXPOSURE_MIN_S)


def denormalize_gain(gain_n: float) -> float:
    return GAIN_MIN_DB + gain_n * (GAIN_MAX_DB - GAIN_MIN_DB)


def denormalize_exposure(exposure_n: float) -> float:
    return EXPOSURE_MIN_S + exposure_n * (EXPOSURE_MAX_S - EXPOSURE_MIN_S)


def normalize(params: CameraParams) -> tuple[float, float]:
    """Map ``params`` onto the unit square (gain first, exposure second)."""
    return normalize_gain(params.gain_db), normalize_exposure(params.exposure_s)


def denormalize(gain_n: float, exposure_n: float) -> CameraParams:
    """Inverse of :func:`normalize`. Inputs outside [0, 1] are clamped first."""
    gain_n = min(max(float(gain_n), 0.0), 1.0)
    exposure_n = min(max(float(exposure_n), 0.0), 1.0)
    return CameraParams(denormalize_gain(gain_n), denormalize_exposure(exposure_n))
