"""The command-line driver, run in-process on the smoke config."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from predictive_exposure.cli import main
from predictive_exposure.model import load_checkpoint

SMOKE = str(Path(__file__).resolve().parent.parent / "configs" / "smoke.yaml")


def run(out, *args):
    return main(["--quiet", "--config", SMOKE, "--out-dir", str(out), *args])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run(out, "train", "--round", "1") == 0
    assert run(out, "train", "--round", "2") == 0
    return out


def test_scene(tmp_path, capsys):
    assert run(tmp_path, "scene") == 0
    info = json.loads(capsys.readouterr().out)
    assert info["dynamic_range_db"] == pytest.approx(60.0)
    lines = (tmp_path / "scene" / "profile.csv").read_text().splitlines()
    assert len(lines) == info["frames"] + 1
    assert (tmp_path / "scene" / "radiance_preview.png").stat().st_size > 0


def test_static_scene(tmp_path, capsys):
    assert run(tmp_path, "scene", "--static") == 0
    info = json.loads(capsys.readouterr().out)
    assert info["dynamic_range_db"] == 0.0 and info["dynamic_frames"] == 0


def test_train_outputs(trained):
    for r in (1, 2):
        ckpt = load_checkpoint(trained / f"round{r}.ckpt")
        assert ckpt.round == r
        assert (trained / f"history_round{r}.csv").read_text().startswith("epoch,")
        assert (trained / f"labels_round{r}.csv").exists()
    assert (trained / "config.yaml").exists()


def test_round_two_without_checkpoint_fails(tmp_path, capsys):
    assert run(tmp_path, "train", "--round", "2") != 0
    assert "round 1 checkpoint" in capsys.readouterr().err
    assert run(tmp_path, "collect", "--round", "2") != 0


def test_collect_and_label(tmp_path, capsys):
    assert run(tmp_path, "collect") == 0
    assert run(tmp_path, "label", "--metric", "feat") == 0
    assert run(tmp_path, "label", "--metric", "hybrid", "--weight", "0.25", "--output",
               str(tmp_path / "h.csv")) == 0
    feat = (tmp_path / "labels.csv").read_text().splitlines()
    hybrid = (tmp_path / "h.csv").read_text().splitlines()
    assert len(feat) == len(hybrid) > 1
    assert feat[1].split(",")[7] == "feat" and hybrid[1].split(",")[7:] == ["hybrid", "0.25"]


def test_label_without_data_fails(tmp_path, capsys):
    assert run(tmp_path, "label") == 1
    assert "no collected episodes" in capsys.readouterr().err


@pytest.mark.parametrize("weight", ["1.5", "-0.1", "abc"])
def test_weight_out_of_range_rejected(tmp_path, weight):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "label", "--weight", weight)
    assert exc.value.code != 0


def test_unknown_metric_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "label", "--metric", "nfm")
    assert exc.value.code != 0


def test_compare_writes_report_and_traces(trained, capsys):
    assert run(trained, "compare", "--checkpoint", str(trained / "round2.ckpt")) == 0
    table = capsys.readouterr().out
    assert "learned" in table and "reactive_ae_ag" in table
    report = json.loads((trained / "compare" / "report.json").read_text())
    assert {r["controller"] for r in report["rows"]} == {"reactive_ae_ag", "gradient_metric", "learned"}
    traces = sorted((trained / "compare" / "traces").glob("*.csv"))
    assert len(traces) == 3
    assert run(trained, "plot", *map(str, traces), "--output", str(trained / "p.png")) == 0
    assert (trained / "p.png").stat().st_size > 0


def test_compare_errors(trained, capsys):
    assert run(trained, "compare") == 1                                   # learned without checkpoint
    assert run(trained, "compare", "--controllers", "reactive_ae_ag,bogus") == 1
    assert run(trained, "compare", "--controllers", "reactive_ae_ag") == 1
    assert run(trained, "compare", "--checkpoint", str(trained / "missing.ckpt")) == 1


def test_eval_single_controller(trained, capsys):
    assert run(trained, "eval", "--controller", "reactive_ae_ag", "--static") == 0
    assert (trained / "eval" / "reactive_ae_ag-static" / "report.txt").exists()
    assert run(trained, "eval", "--controller", "learned") == 1


def test_plot_missing_trace(tmp_path):
    assert run(tmp_path, "plot", str(tmp_path / "nope.csv")) == 1


def test_seed_flag_changes_scene(tmp_path, capsys):
    assert main(["--quiet", "--seed", "3", "--config", SMOKE, "--out-dir", str(tmp_path), "scene"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 4000


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "predictive_exposure", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "compare" in res.stdout
    res = subprocess.run([sys.executable, "-m", "predictive_exposure"], capture_output=True, text=True)
    assert res.returncode == 2
