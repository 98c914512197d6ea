from pathlib import Path

import pytest

from predictive_exposure.config import ExperimentConfig, config_from_dict, load_config, save_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_defaults():
    cfg = config_from_dict(None)
    assert cfg == ExperimentConfig()
    assert cfg.network.dropout_p == 0.4 and cfg.network.epsilon == 0.5
    assert cfg.eval.n_min == 20 and cfg.eval.k == 3 and cfg.eval.margin == 15
    assert cfg.scene.attenuation_db == 60.0


@pytest.mark.parametrize("name", ["desk.yaml", "smoke.yaml"])
def test_shipped_configs_load(name, tmp_path):
    cfg = load_config(CONFIGS / name)
    save_config(cfg, tmp_path / "c.yaml")
    again = load_config(tmp_path / "c.yaml")
    assert again == cfg and again.digest() == cfg.digest()


def test_lists_become_tuples():
    cfg = config_from_dict({"network": {"conv_widths": [2, 2, 2, 2]}, "scene": {"viewport": [32, 48]}})
    assert cfg.network.conv_widths == (2, 2, 2, 2) and cfg.scene.viewport == (32, 48)


def test_digest_tracks_content():
    assert ExperimentConfig().digest() == config_from_dict({}).digest()
    assert ExperimentConfig().digest() != config_from_dict({"seed": 1}).digest()


@pytest.mark.parametrize("bad", [{"bogus": {}}, {"training": {"epochz": 3}}, {"network": {"dropout_p": 1.0}},
                                 {"training": {"epochs": 0}}, {"eval": 3}])
def test_rejects_bad_config(bad):
    with pytest.raises((ValueError, TypeError)):
        config_from_dict(bad)
