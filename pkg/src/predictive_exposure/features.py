"""Sparse corner features, binary descriptors, matching and RANSAC inliers.

The detector is a minimum-eigenvalue (Shi-Tomasi) corner response with an
absolute threshold, greedy radius non-maximum suppression and a cap on the
number of features. Descriptors are BRIEF-style bit strings built from
pairwise comparisons of a Gaussian-smoothed image over a sampling pattern
fixed by ``pattern_seed``. Matches are mutual nearest neighbours in Hamming
distance, verified with a RANSAC 2-D similarity fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import cv2
import numpy as np
from scipy.ndimage import maximum_filter


@dataclass(frozen=True)
class DetectorConfig:
    max_features: int = 500
    nms_radius: int = 7
    threshold: float = 5e-5
    block_size: int = 5
    presmooth_sigma: float = 1.0
    descriptor_bits: int = 256
    patch_radius: int = 15
    patch_sigma: float = 2.0
    pattern_seed: int = 0


@dataclass(frozen=True)
class MatcherConfig:
    max_distance: int = 64
    pixel_tol: float = 2.0
    ransac_iterations: int = 200
    min_pairs: int = 2


@dataclass(frozen=True)
class Keypoint:
    position: tuple[float, float]
    score: float
    descriptor: np.ndarray


@dataclass
class Features:
    """Detected keypoints stored column-wise.

    ``positions`` is (N, 2) in (x, y) pixel coordinates, ``descriptors`` is
    (N, bits // 64) packed ``uint64``.
    """

    positions: np.ndarray
    scores: np.ndarray
    descriptors: np.ndarray
    image_shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.scores)

    def __getitem__(self, i: int) -> Keypoint:
        return Keypoint((float(self.positions[i, 0]), float(self.positions[i, 1])),
                        float(self.scores[i]), self.descriptors[i])

    def __iter__(self) -> Iterator[Keypoint]:
        return (self[i] for i in range(len(self)))

    @classmethod
    def empty(cls, shape, words: int) -> "Features":
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros((0, words), dtype=np.uint64), tuple(shape))


@dataclass(frozen=True)
class Similarity:
    """x' = s R(theta) x + t."""

    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def apply(self, pts: np.ndarray) -> np.ndarray:
        a = self.scale * math.cos(self.rotation)
        b = self.scale * math.sin(self.rotation)
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([a * x - b * y + self.tx, b * x + a * y + self.ty], axis=1)


@dataclass
class MatchSet:
    pairs: np.ndarray            # (M, 2) indices into A and B
    distances: np.ndarray        # (M,)
    inlier_mask: np.ndarray      # (M,) bool
    model: Similarity | None

    @property
    def n_matches(self) -> int:
        return len(self.pairs)

    @property
    def n_inliers(self) -> int:
        return int(self.inlier_mask.sum())


# ------------------------------------------------------------------ detection

def to_float_image(image: np.ndarray) -> np.ndarray:
    """Scale an integer image to [0, 1] float32 by its dtype's range."""
    image = np.asarray(image)
    if image.ndim == 3:
        image = image.mean(axis=2)
    if np.issubdtype(image.dtype, np.integer):
        return image.astype(np.float32) / np.iinfo(image.dtype).max
    return image.astype(np.float32)


@lru_cache(maxsize=8)
def sampling_pattern(bits: int, radius: int, seed: int) -> np.ndarray:
    """(bits, 4) integer offsets (dx1, dy1, dx2, dy2), Gaussian-distributed in the patch."""
    rng = np.random.default_rng(seed)
    pts = np.rint(rng.normal(0.0, radius / 2.0, size=(bits, 4)))
    pts = np.clip(pts, -radius, radius).astype(np.int64)
    same = np.all(pts[:, :2] == pts[:, 2:], axis=1)
    pts[same, 2] = np.where(pts[same, 0] < radius, pts[same, 0] + 1, pts[same, 0] - 1)
    pts.setflags(write=False)
    return pts


def corner_response(img: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    if cfg.presmooth_sigma > 0:
        img = cv2.GaussianBlur(img, (0, 0), cfg.presmooth_sigma, borderType=cv2.BORDER_REFLECT)
    return cv2.cornerMinEigenVal(img, cfg.block_size, 3, borderType=cv2.BORDER_REFLECT)


def _suppress(ys: np.ndarray, xs: np.ndarray, shape, radius: int, limit: int) -> np.ndarray:
    """Greedy radius suppression over candidates already sorted by strength."""
    occupied = np.zeros(shape, dtype=bool)
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    disk = (dy * dy + dx * dx) <= radius * radius
    h, w = shape
    keep = []
    for k in range(len(ys)):
        y, x = ys[k], xs[k]
        if occupied[y, x]:
            continue
        keep.append(k)
        if len(keep) >= limit:
            break
        y0, y1 = max(y - radius, 0), min(y + radius + 1, h)
        x0, x1 = max(x - radius, 0), min(x + radius + 1, w)
        occupied[y0:y1, x0:x1] |= disk[y0 - y + radius:y1 - y + radius, x0 - x + radius:x1 - x + radius]
    return np.asarray(keep, dtype=np.int64)


def describe(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    smooth = cv2.GaussianBlur(img, (0, 0), cfg.patch_sigma, borderType=cv2.BORDER_REFLECT)
    pat = sampling_pattern(cfg.descriptor_bits, cfg.patch_radius, cfg.pattern_seed)
    a = smooth[ys[:, None] + pat[None, :, 1], xs[:, None] + pat[None, :, 0]]
    b = smooth[ys[:, None] + pat[None, :, 3], xs[:, None] + pat[None, :, 2]]
    bits = np.packbits(a < b, axis=1, bitorder="little")
    return np.ascontiguousarray(bits).view(np.uint64)


def detect_features(image: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> Features:
    img = to_float_image(image)
    if img.size == 0:
        raise ValueError("empty image")
    words = cfg.descriptor_bits // 64
    resp = corner_response(img, cfg)
    m = cfg.patch_radius + 1
    h, w = img.shape
    if h <= 2 * m or w <= 2 * m:
        return Features.empty(img.shape, words)

    inner = resp[m:h - m, m:w - m]
    local_max = (inner == maximum_filter(resp, size=3, mode="nearest")[m:h - m, m:w - m])
    ys, xs = np.nonzero(local_max & (inner > cfg.threshold))
    if len(ys) == 0:
        return Features.empty(img.shape, words)
    ys, xs = ys + m, xs + m
    scores = resp[ys, xs]
    order = np.lexsort((ys * w + xs, -scores))
    ys, xs, scores = ys[order], xs[order], scores[order]
    keep = _suppress(ys, xs, img.shape, cfg.nms_radius, cfg.max_features)
    ys, xs, scores = ys[keep], xs[keep], scores[keep]
    desc = describe(img, ys, xs, cfg)
    pos = np.stack([xs, ys], axis=1).astype(np.float64)
    return Features(pos, scores.astype(np.float64), desc, img.shape)


def m_feat(image: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> int:
    """Number of detected features in ``image``."""
    return len(detect_features(image, cfg))


# ------------------------------------------------------------------- matching

def hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    return np.bitwise_count(da[:, None, :] ^ db[None, :, :]).sum(axis=2, dtype=np.int64)


def mutual_matches(fa: Features, fb: Features, max_distance: int) -> tuple[np.ndarray, np.ndarray]:
    if len(fa) == 0 or len(fb) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    d = hamming_matrix(fa.descriptors, fb.descriptors)
    ab = d.argmin(axis=1)
    ba = d.argmin(axis=0)
    ia = np.arange(len(fa))
    ok = (ba[ab] == ia) & (d[ia, ab] <= max_distance)
    pairs = np.stack([ia[ok], ab[ok]], axis=1)
    return pairs, d[ia[ok], ab[ok]]


def _fit_similarity(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares (a, b, tx, ty) with x' = a x - b y + tx, y' = b x + a y + ty."""
    n = len(src)
    A = np.zeros((2 * n, 4))
    A[0::2] = np.stack([src[:, 0], -src[:, 1], np.ones(n), np.zeros(n)], axis=1)
    A[1::2] = np.stack([src[:, 1], src[:, 0], np.zeros(n), np.ones(n)], axis=1)
    sol, *_ = np.linalg.lstsq(A, dst.reshape(-1), rcond=None)
    return sol


def _residuals(models: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    a, b, tx, ty = (models[:, k, None] for k in range(4))
    px = a * src[None, :, 0] - b * src[None, :, 1] + tx
    py = b * src[None, :, 0] + a * src[None, :, 1] + ty
    return np.hypot(px - dst[None, :, 0], py - dst[None, :, 1])


def ransac_similarity(src: np.ndarray, dst: np.ndarray, cfg: MatcherConfig,
                      rng: np.random.Generator) -> tuple[np.ndarray, Similarity | None]:
    n = len(src)
    if n < max(cfg.min_pairs, 2):
        return np.zeros(n, dtype=bool), None
    i = rng.integers(0, n, size=cfg.ransac_iterations)
    j = (i + rng.integers(1, n, size=cfg.ransac_iterations)) % n
    # closed-form two-point similarity
    ds = src[j] - src[i]
    dd = dst[j] - dst[i]
    den = ds[:, 0] ** 2 + ds[:, 1] ** 2
    valid = den > 1e-12
    den = np.where(valid, den, 1.0)
    a = (ds[:, 0] * dd[:, 0] + ds[:, 1] * dd[:, 1]) / den
    b = (ds[:, 0] * dd[:, 1] - ds[:, 1] * dd[:, 0]) / den
    tx = dst[i, 0] - (a * src[i, 0] - b * src[i, 1])
    ty = dst[i, 1] - (b * src[i, 0] + a * src[i, 1])
    models = np.stack([a, b, tx, ty], axis=1)
    counts = (_residuals(models, src, dst) <= cfg.pixel_tol).sum(axis=1)
    counts[~valid] = -1
    best = models[int(np.argmax(counts))]
    mask = _residuals(best[None], src, dst)[0] <= cfg.pixel_tol
    if mask.sum() >= 2:
        refit = _fit_similarity(src[mask], dst[mask])
        refit_mask = _residuals(refit[None], src, dst)[0] <= cfg.pixel_tol
        if refit_mask.sum() >= mask.sum():
            best, mask = refit, refit_mask
    a, b, tx, ty = best
    model = Similarity(float(math.hypot(a, b)), float(math.atan2(b, a)), float(tx), float(ty))
    return mask, model


def match_features(fa: Features, fb: Features, cfg: MatcherConfig = MatcherConfig(),
                   rng: np.random.Generator | None = None) -> MatchSet:
    pairs, dist = mutual_matches(fa, fb, cfg.max_distance)
    if len(pairs) < max(cfg.min_pairs, 2):
        return MatchSet(pairs, dist, np.zeros(len(pairs), dtype=bool), None)
    rng = np.random.default_rng(0) if rng is None else rng
    mask, model = ransac_similarity(fa.positions[pairs[:, 0]], fb.positions[pairs[:, 1]], cfg, rng)
    return MatchSet(pairs, dist, mask, model)


def match_and_count_inliers(image_a: np.ndarray, image_b: np.ndarray,
                            matcher: MatcherConfig = MatcherConfig(),
                            rng: np.random.Generator | None = None,
                            detector: DetectorConfig = DetectorConfig()) -> MatchSet:
    return match_features(detect_features(image_a, detector), detect_features(image_b, detector),
                          matcher, rng)


def m_match(image_a: np.ndarray, image_b: np.ndarray, matcher: MatcherConfig = MatcherConfig(),
            rng: np.random.Generator | None = None, detector: DetectorConfig = DetectorConfig()) -> int:
    return match_and_count_inliers(image_a, image_b, matcher, rng, detector).n_inliers


def matches_to_text(fa: Features, fb: Features, ms: MatchSet) -> str:
    """Plain-text dump of a match set, one pair per line."""
    lines = ["# ia ib xa ya xb yb hamming inlier"]
    for (ia, ib), d, ok in zip(ms.pairs, ms.distances, ms.inlier_mask):
        xa, ya = fa.positions[ia]
        xb, yb = fb.positions[ib]
        lines.append(f"{ia} {ib} {xa:.1f} {ya:.1f} {xb:.1f} {yb:.1f} {d} {int(ok)}")
    return "\n".join(lines) + "\n"
