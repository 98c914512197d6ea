import json
import numpy as np
import pytest
import torch

from oracles import finite_difference_check
from predictive_exposure.model import (CHECKPOINT_MAGIC, N_CHANNELS, Checkpoint, ExposureNet, NetworkConfig,
                                       TrainConfig, assemble_input, clamp_outputs, exposure_gain_loss, forward,
                                       history_input, load_checkpoint, loss, predict_next, save_checkpoint,
                                       split_by_episode, train)
from predictive_exposure.params import EXPOSURE_MAX_S, CameraParams, normalize
from predictive_exposure.scene_sim import Frame

TINY = NetworkConfig(resolution=8, conv_widths=(2, 2, 2, 2), fc_widths=(2, 2), dropout_p=0.0)


def random_frame(rng, t=0, shape=(40, 40)):
    params = CameraParams(float(rng.uniform(0, 30)), float(rng.uniform(1e-4, 3e-2)))
    return Frame(rng.integers(0, 256, size=shape, dtype=np.uint8), params, 1, t)


def fresh_checkpoint(cfg, seed=0):
    torch.manual_seed(seed)
    net = ExposureNet(cfg)
    return Checkpoint(cfg, {k: v.detach().clone() for k, v in net.state_dict().items()})


# ---------------------------------------------------------------- loss

def test_loss_zero_at_target():
    t = np.random.default_rng(0).uniform(size=(5, 2))
    assert loss(t, t) == 0.0


def test_loss_hand_computed_case():
    pred = np.array([[0.2, 0.3], [0.2, 0.7]])
    target = np.array([[0.0, 0.3], [0.0, 0.7]])
    assert loss(pred, target, 0.5) == 0.1


def test_loss_epsilon_endpoints():
    rng = np.random.default_rng(1)
    pred, target = rng.uniform(size=(6, 2)), rng.uniform(size=(6, 2))
    other = pred.copy()
    other[:, 1] = rng.uniform(size=6)
    assert loss(pred, target, 1.0) == loss(other, target, 1.0)
    other = pred.copy()
    other[:, 0] = rng.uniform(size=6)
    assert loss(pred, target, 0.0) == loss(other, target, 0.0)


def test_loss_is_weighted_mean_absolute_error():
    rng = np.random.default_rng(2)
    pred, target = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
    expected = 0.3 * np.abs(pred[:, 0] - target[:, 0]).mean() + 0.7 * np.abs(pred[:, 1] - target[:, 1]).mean()
    assert loss(pred, target, 0.3) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------- architecture

def test_forward_shape_and_eval_determinism():
    ckpt = fresh_checkpoint(NetworkConfig())
    x = np.random.default_rng(0).uniform(size=(3, N_CHANNELS, 64, 64)).astype(np.float32)
    a, b = forward(x, ckpt), forward(x, ckpt)
    assert a.shape == (3, 2)
    assert np.array_equal(a, b)


def test_train_mode_dropout_is_stochastic():
    ckpt = fresh_checkpoint(NetworkConfig())
    x = np.random.default_rng(0).uniform(size=(4, N_CHANNELS, 64, 64)).astype(np.float32)
    torch.manual_seed(0)
    a = forward(x, ckpt, mode="train")
    b = forward(x, ckpt, mode="train")
    assert not np.array_equal(a, b)
    assert not ckpt.network().training


def test_shape_mismatch_rejected():
    ckpt = fresh_checkpoint(NetworkConfig())
    with pytest.raises(ValueError):
        forward(np.zeros((1, N_CHANNELS, 32, 32), np.float32), ckpt)
    with pytest.raises(ValueError):
        forward(np.zeros((1, 9, 64, 64), np.float32), ckpt)


def test_first_fc_input_quadruples_with_doubled_resolution():
    # four ceil-mode halvings: 64 -> 4, 128 -> 8; 224 -> 14 at full resolution
    small, big = NetworkConfig(resolution=64), NetworkConfig(resolution=128)
    assert small.feature_side == 4 and big.feature_side == 8
    assert big.flat_features == 4 * small.flat_features
    assert NetworkConfig(resolution=224).feature_side == 14
    net = ExposureNet(big)
    assert net.head[1].in_features == 32 * 8 * 8


def test_structure():
    net = ExposureNet(NetworkConfig())
    convs = [m for m in net.features if isinstance(m, torch.nn.Conv2d)]
    fcs = [m for m in net.head if isinstance(m, torch.nn.Linear)]
    assert len(convs) == 4 and len(fcs) == 3
    assert sum(isinstance(m, torch.nn.BatchNorm1d) for m in net.head) == 2
    assert fcs[-1].out_features == 2


@pytest.mark.parametrize("bad", [dict(conv_widths=(8, 8, 8)), dict(fc_widths=(4,)), dict(dropout_p=1.0),
                                 dict(epsilon=1.5)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        NetworkConfig(**bad)


# ---------------------------------------------------------------- gradients

def test_gradients_match_finite_differences():
    assert finite_difference_check(TINY) < 1e-4


def test_parameter_channels_influence_output():
    torch.manual_seed(0)
    net = ExposureNet(NetworkConfig()).train()
    x = torch.rand(4, N_CHANNELS, 64, 64, requires_grad=True)
    net(x).sum().backward()
    assert x.grad[:, 9:12].abs().sum() > 0       # gain planes
    assert x.grad[:, 12:15].abs().sum() > 0      # exposure planes


# ---------------------------------------------------------------- inputs and inference

def test_assemble_input_layout():
    imgs = [np.full((8, 8), v, np.float32) for v in (0.1, 0.2, 0.3)]      # oldest first
    params = [CameraParams(3.0 * k, 1e-3 * (k + 1)) for k in range(3)]
    x = assemble_input(imgs, params)
    assert x.shape == (15, 8, 8)
    assert np.all(x[0:3] == np.float32(0.3)) and np.all(x[6:9] == np.float32(0.1))
    g_t, e_t = normalize(params[2])
    g_old, e_old = normalize(params[0])
    assert np.all(x[9] == np.float32(g_t)) and np.all(x[11] == np.float32(g_old))
    assert np.all(x[12] == np.float32(e_t)) and np.all(x[14] == np.float32(e_old))
    with pytest.raises(ValueError):
        assemble_input(imgs[:2], params[:2])


def test_short_history_repeats_earliest():
    rng = np.random.default_rng(1)
    f = random_frame(rng)
    x = history_input([f], 16)
    assert np.array_equal(x, history_input([f, f, f], 16))
    with pytest.raises(ValueError):
        history_input([], 16)


def test_clamp_examples():
    assert clamp_outputs((-0.2, 1.3)) == CameraParams(0.0, EXPOSURE_MAX_S)
    mid = clamp_outputs((0.5, 0.5))
    assert mid.gain_db == 15.0
    assert mid.exposure_s == pytest.approx(15.0375e-3, rel=1e-12)
    assert clamp_outputs(clamp_outputs((0.3, 0.9)).normalized()) == clamp_outputs((0.3, 0.9))


def test_predict_next_stays_in_range():
    rng = np.random.default_rng(2)
    for seed in range(3):
        ckpt = fresh_checkpoint(NetworkConfig(resolution=16), seed)
        state = dict(ckpt.state)
        # exaggerate the output layer so raw outputs leave [0, 1]
        ckpt = Checkpoint(ckpt.config, {**state, "head.9.weight": state["head.9.weight"] * 50})
        hist = [random_frame(rng, t) for t in range(3)]
        p = predict_next(hist, ckpt)
        assert 0.0 <= p.gain_db <= 30.0 and 75e-6 <= p.exposure_s <= 30e-3


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path):
    ckpt = fresh_checkpoint(NetworkConfig(), seed=3)
    ckpt.round = 2
    ckpt.meta = {"note": "test"}
    x = np.random.default_rng(0).uniform(size=(2, N_CHANNELS, 64, 64)).astype(np.float32)
    path = tmp_path / "net.ckpt"
    save_checkpoint(ckpt, path)
    assert path.read_bytes()[:8] == CHECKPOINT_MAGIC
    loaded = load_checkpoint(path)
    assert loaded.config == ckpt.config and loaded.round == 2 and loaded.meta == {"note": "test"}
    assert np.array_equal(forward(x, loaded), forward(x, ckpt))
    for k, v in ckpt.state.items():
        assert torch.equal(loaded.state[k], v)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError):
        load_checkpoint(path)


# ---------------------------------------------------------------- training

class Sample:
    def __init__(self, frames, target, episode):
        self.frames, self.target, self.episode = frames, target, episode


def toy_samples(n=24, episodes=4, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        frames = tuple(random_frame(rng, t) for t in range(3))
        out.append(Sample(frames, tuple(rng.uniform(size=2)), f"ep{k % episodes}"))
    return out


def test_training_is_deterministic():
    cfg = NetworkConfig(resolution=16, conv_widths=(2, 4, 4, 4), fc_widths=(8, 4))
    hyper = TrainConfig(epochs=2, batch_size=8)
    samples = toy_samples()
    h1, h2 = [], []
    a = train(samples, cfg, hyper, seed=5, history=h1)
    b = train(samples, cfg, hyper, seed=5, history=h2)
    assert json.dumps(h1) == json.dumps(h2)
    for k in a.state:
        assert torch.equal(a.state[k], b.state[k])
    assert len(h1) == 3 and h1[0]["epoch"] == 0


def test_training_reduces_loss():
    cfg = NetworkConfig(resolution=16, conv_widths=(4, 4, 4, 4), fc_widths=(8, 8), dropout_p=0.0)
    hist = []
    train(toy_samples(16, 4), cfg, TrainConfig(epochs=30, batch_size=16, learning_rate=1e-2, holdout_fraction=0.0),
          history=hist)
    assert hist[-1]["train_eval_loss"] < hist[0]["train_eval_loss"]


def test_non_finite_loss_aborts():
    samples = toy_samples(8, 2)
    samples[0].target = (float("nan"), 0.5)
    with pytest.raises(FloatingPointError):
        train(samples, NetworkConfig(resolution=16), TrainConfig(epochs=1, batch_size=8, holdout_fraction=0.0))


def test_empty_training_set_rejected():
    with pytest.raises(ValueError):
        train([], TINY)


def test_split_is_by_episode():
    samples = toy_samples(40, 10)
    tr, ho = split_by_episode(samples, 0.1, seed=0)
    assert len(tr) + len(ho) == 40
    assert len({s.episode for s in ho}) == 1
    assert not {s.episode for s in tr} & {s.episode for s in ho}
