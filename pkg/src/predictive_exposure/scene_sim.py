"""Photometric camera simulator.

A scene is a large, tileable HDR radiance field that the camera viewport
slides across, together with a per-frame illumination multiplier. Rendering
follows a simple sensor chain:

    radiance * illumination * exposure * gain / full_well  -> linear signal x
    x --(motion blur along the velocity, length |v| * exposure)--> x
    x + N(0, read * g + shot * sqrt(x) * g)                  -> noisy x
    clip(x, 0, 1) ** (1 / crf_gamma)                          -> y
    round(y * (2**bits - 1))                                  -> image

Long exposures blur, high gain is noisy; that trade-off is what makes the
control problem interesting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter

from .params import CameraParams, gain_db_to_linear


@dataclass(frozen=True)
class CameraModel:
    crf_gamma: float = 2.2
    read_noise_sigma: float = 0.0002
    shot_noise_scale: float = 0.0005
    full_well_scale: float = 1.0
    blur_enabled: bool = True
    quantization_bits: int = 8

    def __post_init__(self):
        if not self.crf_gamma > 0:
            raise ValueError("crf_gamma must be > 0")
        if self.read_noise_sigma < 0 or self.shot_noise_scale < 0:
            raise ValueError("noise parameters must be >= 0")
        if not self.full_well_scale > 0:
            raise ValueError("full_well_scale must be > 0")
        if not 1 <= int(self.quantization_bits) <= 16:
            raise ValueError("quantization_bits must lie in [1, 16]")

    @property
    def max_value(self) -> int:
        return (1 << int(self.quantization_bits)) - 1

    def noiseless(self) -> "CameraModel":
        return CameraModel(self.crf_gamma, 0.0, 0.0, self.full_well_scale,
                           self.blur_enabled, self.quantization_bits)


@dataclass
class RadianceScene:
    """HDR world: radiance field, viewport trajectory and illumination profile.

    ``positions`` holds the viewport's top-left corner (x, y) in pixels for
    every frame; ``motion`` the instantaneous velocity in pixels/second.
    The field wraps around at its borders.
    """

    radiance_field: np.ndarray
    positions: np.ndarray
    motion: np.ndarray
    illumination_profile: np.ndarray
    viewport: tuple[int, int] = (256, 256)
    frame_rate: float = 15.0
    name: str = "scene"

    def __post_init__(self):
        self.radiance_field = np.asarray(self.radiance_field, dtype=np.float32)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.motion = np.asarray(self.motion, dtype=np.float64).reshape(-1, 2)
        self.illumination_profile = np.asarray(self.illumination_profile, dtype=np.float64)
        n = len(self.illumination_profile)
        if n < 1:
            raise ValueError("trajectory must contain at least one step")
        if len(self.positions) != n or len(self.motion) != n:
            raise ValueError("positions, motion and illumination_profile lengths differ")
        if np.any(self.radiance_field < 0):
            raise ValueError("radiance must be nonnegative")
        if not np.all(self.illumination_profile > 0):
            raise ValueError("illumination_profile must be strictly positive")

    def __len__(self) -> int:
        return len(self.illumination_profile)

    def dynamic_range_db(self) -> float:
        p = self.illumination_profile
        return 20.0 * math.log10(p.max() / p.min())


@dataclass
class Frame:
    image: np.ndarray
    params: CameraParams
    camera_id: int
    time_index: int
    bits: int = 8

    def __post_init__(self):
        if self.camera_id not in (1, 2):
            raise ValueError(f"camera_id must be 1 or 2, got {self.camera_id}")
        if self.time_index < 0:
            raise ValueError("time_index must be >= 0")

    @property
    def max_value(self) -> int:
        return (1 << self.bits) - 1

    def normalized_image(self) -> np.ndarray:
        return self.image.astype(np.float32) / self.max_value

    def mean_intensity(self) -> float:
        """Mean intensity as a fraction of full scale."""
        return float(self.image.mean()) / self.max_value


@dataclass
class TunnelConfig:
    """Procedural tunnel scene: outdoor -> dark plateau -> outdoor.

    ``transition_frames`` is the 10%-90% width of each sigmoidal transition
    measured in the log domain; 0 gives an instantaneous step.
    """

    viewport: tuple[int, int] = (256, 256)
    field_scale: int = 4
    outdoor_level: float = 700.0
    attenuation_db: float = 60.0
    transition_frames: float = 12.0
    pre_frames: int = 80
    tunnel_frames: int = 100
    post_frames: int = 80
    speed_px_s: float = 240.0
    frame_rate: float = 15.0
    heading: float | None = None
    texture_density: float = 1.5
    texture_contrast: float = 0.6
    name: str = "tunnel"

    @property
    def n_frames(self) -> int:
        return self.pre_frames + self.tunnel_frames + self.post_frames

    @property
    def transition_centres(self) -> tuple[float, float]:
        return (self.pre_frames - 0.5, self.pre_frames + self.tunnel_frames - 0.5)


def frame_rng(seed: int, time_index: int, camera_id: int) -> np.random.Generator:
    """Noise stream for one frame, independent of the commanded parameters."""
    return np.random.default_rng([int(seed), int(time_index), int(camera_id)])


# ---------------------------------------------------------------- scene setup

def textured_field(shape: tuple[int, int], rng: np.random.Generator,
                   density: float = 1.5, contrast: float = 0.6) -> np.ndarray:
    """Tileable log-normal texture: multi-scale blobs plus sharp-edged rectangles.

    ``density`` is the number of rectangles per 64x64 pixel area. The result
    has unit mean.
    """
    h, w = shape
    log_field = np.zeros(shape, dtype=np.float64)
    for sigma, weight in ((24.0, 1.0), (8.0, 0.6), (2.5, 0.3)):
        noise = gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
        log_field += weight * noise / noise.std()

    n_rect = int(round(density * h * w / 4096.0))
    for _ in range(n_rect):
        rh, rw = rng.integers(4, 41, size=2)
        r0, c0 = rng.integers(0, h), rng.integers(0, w)
        rows = (r0 + np.arange(rh)) % h
        cols = (c0 + np.arange(rw)) % w
        log_field[np.ix_(rows, cols)] += rng.normal(0.0, 1.2)

    log_field /= log_field.std()
    radiance = np.exp(contrast * log_field)
    return (radiance / radiance.mean()).astype(np.float32)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def illumination_profile(cfg: TunnelConfig) -> np.ndarray:
    t = np.arange(cfg.n_frames, dtype=np.float64)
    c1, c2 = cfg.transition_centres
    if cfg.transition_frames <= 0:
        inside = ((t > c1) & (t < c2)).astype(np.float64)
    else:
        scale = cfg.transition_frames / (2.0 * math.log(9.0))
        inside = _sigmoid((t - c1) / scale) - _sigmoid((t - c2) / scale)
        # pin the plateau and the outdoor segments exactly to their levels
        inside = np.clip((inside - inside.min()) / max(inside.max() - inside.min(), 1e-300), 0.0, 1.0)
    level_db = -cfg.attenuation_db * inside
    return cfg.outdoor_level * 10.0 ** (level_db / 20.0)


def make_tunnel_scene(cfg: TunnelConfig, rng: np.random.Generator) -> RadianceScene:
    if cfg.attenuation_db < 0:
        raise ValueError("attenuation_db must be >= 0")
    if min(cfg.pre_frames, cfg.tunnel_frames, cfg.post_frames) < 1:
        raise ValueError("tunnel scene segments must be nonempty")
    if cfg.outdoor_level <= 0:
        raise ValueError("outdoor_level must be > 0")

    vh, vw = cfg.viewport
    field_shape = (cfg.field_scale * vh, cfg.field_scale * vw)
    radiance = textured_field(field_shape, rng, cfg.texture_density, cfg.texture_contrast)

    n = cfg.n_frames
    heading0 = rng.uniform(0.0, 2 * math.pi) if cfg.heading is None else cfg.heading
    phase = rng.uniform(0.0, 2 * math.pi)
    t = np.arange(n, dtype=np.float64)
    heading = heading0 + 0.25 * np.sin(2 * math.pi * t / 90.0 + phase)
    motion = cfg.speed_px_s * np.stack([np.cos(heading), np.sin(heading)], axis=1)
    start = rng.uniform(0.0, 1.0, size=2) * np.array([field_shape[1], field_shape[0]])
    steps = np.vstack([np.zeros((1, 2)), motion[:-1] / cfg.frame_rate])
    positions = start + np.cumsum(steps, axis=0)

    return RadianceScene(radiance, positions, motion, illumination_profile(cfg),
                         viewport=(vh, vw), frame_rate=cfg.frame_rate, name=cfg.name)


def transition_frames_mask(scene: RadianceScene, threshold_db: float = 1.0) -> np.ndarray:
    """Frames whose illumination differs from the previous frame by > threshold."""
    level_db = 20.0 * np.log10(scene.illumination_profile)
    change = np.zeros(len(scene), dtype=bool)
    change[1:] = np.abs(np.diff(level_db)) > threshold_db
    return change


def segment_tags(scene: RadianceScene, margin: int = 15, threshold_db: float = 1.0) -> list[str]:
    """Tag each frame ``dynamic`` if within ``margin`` frames of a transition."""
    change = transition_frames_mask(scene, threshold_db)
    dyn = np.zeros(len(scene), dtype=bool)
    for idx in np.flatnonzero(change):
        dyn[max(idx - margin, 0):idx + margin + 1] = True
    return ["dynamic" if d else "static" for d in dyn]


# ------------------------------------------------------------------ rendering

def motion_blur_kernel(velocity: np.ndarray, exposure_s: float) -> np.ndarray | None:
    """Normalized box kernel along ``velocity`` of length ``|v| * exposure``.

    Returns ``None`` when the streak is at most one pixel long.
    """
    length = float(np.hypot(*velocity)) * exposure_s
    if length <= 1.0:
        return None
    ux, uy = np.asarray(velocity, dtype=np.float64) / np.hypot(*velocity)
    half = int(math.ceil(length / 2.0)) + 1
    size = 2 * half + 1
    kernel = np.zeros((size, size), dtype=np.float64)
    n = max(int(math.ceil(length)) * 8, 16)
    s = np.linspace(-length / 2.0, length / 2.0, n)
    xs, ys = half + s * ux, half + s * uy
    x0, y0 = np.floor(xs).astype(int), np.floor(ys).astype(int)
    fx, fy = xs - x0, ys - y0
    np.add.at(kernel, (y0, x0), (1 - fx) * (1 - fy))
    np.add.at(kernel, (y0, x0 + 1), fx * (1 - fy))
    np.add.at(kernel, (y0 + 1, x0), (1 - fx) * fy)
    np.add.at(kernel, (y0 + 1, x0 + 1), fx * fy)
    return (kernel / kernel.sum()).astype(np.float32)


def _crop(field: np.ndarray, top_left: np.ndarray, shape: tuple[int, int], margin: int) -> np.ndarray:
    h, w = field.shape
    x0, y0 = int(round(top_left[0])), int(round(top_left[1]))
    rows = (y0 - margin + np.arange(shape[0] + 2 * margin)) % h
    cols = (x0 - margin + np.arange(shape[1] + 2 * margin)) % w
    return field[np.ix_(rows, cols)]


def _check_inputs(scene: RadianceScene, t: int, params: CameraParams):
    if not 0 <= t < len(scene):
        raise IndexError(f"time index {t} outside trajectory of length {len(scene)}")
    if not (math.isfinite(params.gain_db) and math.isfinite(params.exposure_s)):
        raise ValueError(f"non-finite camera parameters {params}")


def linear_signal(scene: RadianceScene, t: int, params: CameraParams, model: CameraModel) -> np.ndarray:
    """Noise-free linear exposure signal (after blur, before the response curve)."""
    _check_inputs(scene, t, params)
    kernel = motion_blur_kernel(scene.motion[t], params.exposure_s) if model.blur_enabled else None
    margin = 0 if kernel is None else kernel.shape[0] // 2 + 1
    patch = _crop(scene.radiance_field, scene.positions[t], scene.viewport, margin)
    scale = scene.illumination_profile[t] * (params.exposure_s * params.gain_linear) / model.full_well_scale
    x = patch.astype(np.float64) * scale
    if kernel is not None:
        x = cv2.filter2D(x, -1, kernel.astype(np.float64), borderType=cv2.BORDER_REFLECT)
        x = x[margin:-margin, margin:-margin]
    return x


def expose(scene: RadianceScene, t: int, params: CameraParams, model: CameraModel,
           rng: np.random.Generator | None) -> np.ndarray:
    """Pre-quantization intensity in [0, 1] (noise added, response curve applied)."""
    x = linear_signal(scene, t, params, model)
    g = gain_db_to_linear(params.gain_db)
    if model.read_noise_sigma > 0 or model.shot_noise_scale > 0:
        if rng is None:
            raise ValueError("a random stream is required when noise is enabled")
        sigma = model.read_noise_sigma * g + model.shot_noise_scale * np.sqrt(np.maximum(x, 0.0)) * g
        x = x + sigma * rng.standard_normal(x.shape)
    return np.clip(x, 0.0, 1.0) ** (1.0 / model.crf_gamma)


def quantize(y: np.ndarray, bits: int) -> np.ndarray:
    levels = (1 << bits) - 1
    dtype = np.uint8 if bits <= 8 else np.uint16
    return np.rint(y * levels).astype(dtype)


def render_frame(scene: RadianceScene, t: int, params: CameraParams, model: CameraModel,
                 rng: np.random.Generator | None, camera_id: int = 1) -> Frame:
    y = expose(scene, t, params, model, rng)
    return Frame(quantize(y, model.quantization_bits), params, camera_id, int(t),
                 bits=model.quantization_bits)
