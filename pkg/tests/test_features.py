import dataclasses

import numpy as np
import pytest

from predictive_exposure.features import (DetectorConfig, MatcherConfig, detect_features, hamming_matrix,
                                          m_feat, m_match, match_and_count_inliers, match_features,
                                          matches_to_text, ransac_similarity)
from predictive_exposure.params import CameraParams
from predictive_exposure.scene_sim import CameraModel, TunnelConfig, make_tunnel_scene, render_frame

NOISELESS = CameraModel(read_noise_sigma=0.0, shot_noise_scale=0.0)


def checkerboard(size=160, square=20):
    yy, xx = np.mgrid[:size, :size]
    return (((yy // square) + (xx // square)) % 2 * 255).astype(np.uint8)


def textured_image(seed=0, exposure=4e-4, viewport=(128, 128), model=NOISELESS):
    cfg = TunnelConfig(viewport=viewport, attenuation_db=0.0, pre_frames=4, tunnel_frames=4, post_frames=4)
    sc = make_tunnel_scene(cfg, np.random.default_rng(seed))
    return render_frame(sc, 0, CameraParams(0.0, exposure), model, None).image


@pytest.fixture(scope="module")
def textured():
    return textured_image()


# ---------------------------------------------------------------- detection

def test_flat_image_has_no_features():
    assert m_feat(np.full((64, 64), 128, np.uint8)) == 0


def test_saturated_image_has_no_features():
    assert m_feat(np.full((64, 64), 255, np.uint8)) == 0


def test_checkerboard_interior_corners():
    img = checkerboard()
    feats = detect_features(img)
    # 8 x 8 squares leave 7 x 7 interior corners, all clear of the descriptor border
    assert len(feats) == 49
    corners = {(20 * i, 20 * j) for i in range(1, 8) for j in range(1, 8)}
    found = {(int(round(x)), int(round(y))) for x, y in feats.positions}
    for cx, cy in corners:
        assert any(abs(cx - fx) <= 2 and abs(cy - fy) <= 2 for fx, fy in found)


def test_feature_cap(textured):
    cfg = DetectorConfig(max_features=10)
    feats = detect_features(textured, cfg)
    assert len(feats) == 10
    assert np.all(np.diff(feats.scores) <= 0)
    assert m_feat(textured) <= DetectorConfig().max_features


def test_suppression_radius(textured):
    feats = detect_features(textured)
    d = np.hypot(*(feats.positions[:, None, :] - feats.positions[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    assert d.min() > DetectorConfig().nms_radius


def test_detection_is_deterministic(textured):
    a, b = detect_features(textured), detect_features(textured.copy())
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.descriptors, b.descriptors)


def test_descriptor_layout(textured):
    feats = detect_features(textured)
    assert feats.descriptors.dtype == np.uint64 and feats.descriptors.shape == (len(feats), 4)
    kp = feats[0]
    assert kp.position == tuple(feats.positions[0])


def test_well_exposed_beats_saturated():
    for seed in range(3):
        good = textured_image(seed)
        blown = textured_image(seed, exposure=30e-3)
        assert m_feat(good) > m_feat(blown)


def test_small_image_is_valid_and_empty():
    assert m_feat(np.zeros((10, 10), np.uint8)) == 0


def test_empty_image_rejected():
    with pytest.raises(ValueError):
        detect_features(np.zeros((0, 0), np.uint8))


def test_linear_brightness_scaling_is_robust():
    changes = []
    for seed in range(5):
        img = textured_image(seed, exposure=1e-4).astype(np.float64) / 255
        scaled = np.clip(img * 1.2, 0, 1)
        assert scaled.max() < 1.0
        n0, n1 = m_feat(img.astype(np.float32)), m_feat(scaled.astype(np.float32))
        changes.append(abs(n1 - n0) / n0)
    assert np.mean(changes) < 0.2


# ---------------------------------------------------------------- matching

def test_hamming_matrix_against_python_popcount():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2**63, size=(5, 4), dtype=np.uint64)
    b = rng.integers(0, 2**63, size=(6, 4), dtype=np.uint64)
    d = hamming_matrix(a, b)
    for i in range(5):
        for j in range(6):
            assert d[i, j] == sum(bin(int(x) ^ int(y)).count("1") for x, y in zip(a[i], b[j]))


def test_self_match_recovers_identity(textured):
    ms = match_and_count_inliers(textured, textured, rng=np.random.default_rng(0))
    assert ms.n_inliers == m_feat(textured) > 0
    assert ms.model.scale == pytest.approx(1.0, abs=1e-6)
    assert ms.model.rotation == pytest.approx(0.0, abs=1e-6)
    assert abs(ms.model.tx) < 1e-6 and abs(ms.model.ty) < 1e-6


def test_translation_recovered():
    big = textured_image(viewport=(160, 160))
    img = big[13:141, 5:133]
    shifted = big[10:138, 0:128]      # shifted[y + 3, x + 5] == img[y, x]
    ms = match_and_count_inliers(img, shifted, rng=np.random.default_rng(1))
    assert ms.n_inliers > 20
    assert np.hypot(ms.model.tx - 5, ms.model.ty - 3) <= MatcherConfig().pixel_tol


def test_textured_vs_flat_has_no_inliers(textured):
    assert m_match(textured, np.full_like(textured, 90)) == 0


def test_count_ordering():
    a, b = textured_image(1), textured_image(1, exposure=1.2e-3)
    ms = match_and_count_inliers(a, b, rng=np.random.default_rng(2))
    assert ms.n_inliers <= ms.n_matches <= min(m_feat(a), m_feat(b))


def test_matching_is_deterministic_given_seed():
    a = textured_image(2)
    cfg = TunnelConfig(viewport=(128, 128), attenuation_db=0.0, pre_frames=4, tunnel_frames=4, post_frames=4)
    sc = make_tunnel_scene(cfg, np.random.default_rng(2))
    b = render_frame(sc, 1, CameraParams(0.0, 4e-4), CameraModel(), np.random.default_rng(3)).image
    x = match_and_count_inliers(a, b, rng=np.random.default_rng(7))
    y = match_and_count_inliers(a, b, rng=np.random.default_rng(7))
    assert np.array_equal(x.inlier_mask, y.inlier_mask) and x.model == y.model


def test_ransac_with_outliers():
    rng = np.random.default_rng(3)
    src = rng.uniform(0, 100, size=(60, 2))
    theta, s = 0.1, 1.05
    R = s * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    dst = src @ R.T + [4.0, -2.0]
    dst[:15] += rng.uniform(20, 40, size=(15, 2))
    mask, model = ransac_similarity(src, dst, MatcherConfig(), np.random.default_rng(0))
    assert mask[15:].all() and not mask[:15].any()
    assert model.scale == pytest.approx(s, abs=1e-9)
    assert model.rotation == pytest.approx(theta, abs=1e-9)


def test_too_few_pairs_gives_zero_inliers(textured):
    feats = detect_features(textured)
    single = dataclasses.replace(feats, positions=feats.positions[:1], scores=feats.scores[:1],
                                 descriptors=feats.descriptors[:1])
    ms = match_features(single, feats)
    assert ms.n_inliers == 0 and ms.model is None


def test_matches_to_text(textured):
    feats = detect_features(textured)
    ms = match_features(feats, feats)
    text = matches_to_text(feats, feats, ms)
    assert text.count("\n") == ms.n_matches + 1
