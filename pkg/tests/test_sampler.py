import logging
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from predictive_exposure.controllers import ControllerCommand, FixedController, ReactiveAEAG
from predictive_exposure.params import EXPOSURE_MAX_S, EXPOSURE_MIN_S, GAIN_MAX_DB, CameraParams
from predictive_exposure.sampler import (MAX_SCALE, QUADRANTS, PerturbationState, apply_perturbation,
                                         collect_episode, iterative_collection, perturb_params,
                                         reference_controller_for_round)
from predictive_exposure.scene_sim import CameraModel, TunnelConfig, make_tunnel_scene

TINY = TunnelConfig(viewport=(48, 48), pre_frames=4, tunnel_frames=4, post_frames=4, transition_frames=2)


@pytest.fixture(scope="module")
def scene():
    return make_tunnel_scene(TINY, np.random.default_rng(0))


def test_positive_quadrant_endpoint():
    p = apply_perturbation(CameraParams(10.0, 1e-3), (1, 1), 0.5, 0.5, 1.0)
    assert p.gain_db == pytest.approx(15.0) and p.exposure_s == pytest.approx(1.5e-3)


def test_zero_gain_negative_quadrant():
    p = apply_perturbation(CameraParams(0.0, 1e-3), (-1, -1), 0.3, 0.2, 2.0)
    assert p.gain_db == 0.0 and p.exposure_s == pytest.approx(0.8e-3)


def test_zero_gain_positive_adds_delta():
    p = apply_perturbation(CameraParams(0.0, 1e-3), (1, -1), 0.3, 0.2, 2.5)
    assert p.gain_db == 2.5


def test_perturbation_is_clamped():
    rng = np.random.default_rng(0)
    state = PerturbationState(rng)
    for _ in range(200):
        ref = CameraParams(float(rng.uniform(0, 30)), float(rng.uniform(EXPOSURE_MIN_S, EXPOSURE_MAX_S)))
        p = perturb_params(ref, state)
        assert 0.0 <= p.gain_db <= GAIN_MAX_DB and EXPOSURE_MIN_S <= p.exposure_s <= EXPOSURE_MAX_S


def test_perturbation_follows_signs():
    state = PerturbationState(np.random.default_rng(1))
    ref = CameraParams(12.0, 2e-3)
    for k in range(40):
        s_g, s_e = QUADRANTS[k % 4]
        assert state.signs == (s_g, s_e)
        p = perturb_params(ref, state)
        assert np.sign(p.gain_db - ref.gain_db) in (s_g, 0)
        assert np.sign(p.exposure_s - ref.exposure_s) in (s_e, 0)
    assert state.quadrant_index == 0


def test_scale_draws_are_uniform():
    state = PerturbationState(np.random.default_rng(2))
    ref = CameraParams(10.0, 1e-3)
    u = []
    for _ in range(2000):
        s_g, _ = state.signs
        p = perturb_params(ref, state)
        u.append(s_g * (p.gain_db / ref.gain_db - 1.0))
    result = stats.kstest(np.asarray(u), stats.uniform(0, MAX_SCALE).cdf)
    assert result.pvalue > 0.01


def test_zero_gain_delta_range():
    state = PerturbationState(np.random.default_rng(3))
    deltas = []
    for _ in range(400):
        positive = state.signs[0] > 0
        p = perturb_params(CameraParams(0.0, 1e-3), state)
        if positive:
            deltas.append(p.gain_db)
        else:
            assert p.gain_db == 0.0
    deltas = np.asarray(deltas)
    assert deltas.min() > 0.0 and deltas.max() <= 3.0


def test_collect_episode_wiring(scene):
    ds = collect_episode(scene, ReactiveAEAG(), CameraModel(), seed=5)
    assert len(ds) == len(scene)
    assert sum(1 for r in ds.records for _ in (r.reference, r.perturbed)) == 2 * len(scene)
    ctrl = ReactiveAEAG()
    ctrl.reset()
    expected = ctrl.initial_params()
    for t, rec in enumerate(ds.records):
        assert rec.reference.params == expected
        assert rec.signs == QUADRANTS[t % 4]
        assert rec.reference.camera_id == 1 and rec.perturbed.camera_id == 2
        assert rec.reference.time_index == t == rec.perturbed.time_index
        history = [r.reference for r in ds.records[max(0, t - 2):t + 1]]
        expected = ctrl.step(history).next
    assert ds.controller == "reactive_ae_ag" and ds.round == 1


def test_collect_is_deterministic(scene):
    a = collect_episode(scene, ReactiveAEAG(), CameraModel(), seed=6)
    b = collect_episode(scene, ReactiveAEAG(), CameraModel(), seed=6)
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.perturbed.image, rb.perturbed.image)
        assert ra.perturbed.params == rb.perturbed.params


class Exploding(FixedController):
    def step(self, history):
        return ControllerCommand(SimpleNamespace(gain_db=float("nan"), exposure_s=1e-3), "exploding")


def test_non_finite_command_aborts(scene):
    with pytest.raises(RuntimeError, match="non-finite"):
        collect_episode(scene, Exploding(), CameraModel(), seed=0)


def test_round_wiring(scene):
    assert reference_controller_for_round(1).identity == "reactive_ae_ag"
    with pytest.raises(ValueError):
        reference_controller_for_round(2)
    with pytest.raises(ValueError):
        reference_controller_for_round(0)
    datasets = iterative_collection(1, None, [scene], [3], CameraModel())
    assert datasets[0].round == 1 and datasets[0].controller == "reactive_ae_ag"


def test_round_two_uses_network(scene, tiny_checkpoint, caplog):
    assert reference_controller_for_round(2, tiny_checkpoint).identity == "learned"
    datasets = iterative_collection(2, tiny_checkpoint, [scene], [3], CameraModel())
    assert datasets[0].round == 2 and datasets[0].controller == "learned"
    with caplog.at_level(logging.WARNING):
        reference_controller_for_round(3, tiny_checkpoint)
    assert "diminishing" in caplog.text
