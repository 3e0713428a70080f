import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from conftest import small_rooms
from echorange.cli import main
from echorange.eval import read_csv
from echorange.net import TINY_CONFIG
from echorange.train import TrainConfig


def _digest(capsys_out: str) -> str:
    return next(l.split()[-1] for l in capsys_out.splitlines() if l.startswith("manifest sha256"))


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    ds = {
        "rooms": [r.to_dict() for r in small_rooms(3)],
        "n_scenes": 6,
        "splits": {"train": 1, "val": 1, "test": 1},
        "seed": 21,
        "duration_s": [1.5, 1.7],
        "distance_m": [0.5, 2.0],
    }
    (d / "ds.json").write_text(json.dumps(ds))
    bad = dict(ds, rooms=ds["rooms"][:1])
    (d / "bad.json").write_text(json.dumps(bad))
    tc = TrainConfig(max_epochs=1, batch_size=2, window_frames=48, model=TINY_CONFIG)
    (d / "train.json").write_text(json.dumps(tc.to_dict()))
    assert main(["synth", str(d / "ds.json"), "--out", str(d / "data"), "--jobs", "1"]) == 0
    return d


def test_synth_digest_is_reproducible(files, tmp_path, capsys):
    assert main(["synth", str(files / "ds.json"), "--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
    first = _digest(capsys.readouterr().out)
    assert main(["synth", str(files / "ds.json"), "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert _digest(capsys.readouterr().out) == first
    assert main(["--seed", "22", "synth", str(files / "ds.json"), "--out", str(tmp_path / "c")]) == 0
    assert _digest(capsys.readouterr().out) != first


def test_synth_one_room_three_splits(files, tmp_path, capsys):
    assert main(["synth", str(files / "bad.json"), "--out", str(tmp_path / "x")]) == 2
    assert "one per split" in capsys.readouterr().err


def test_synth_missing_config(tmp_path):
    assert main(["synth", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x")]) == 3


def test_refuses_to_overwrite(files, capsys):
    assert main(["synth", str(files / "ds.json"), "--out", str(files / "data")]) == 2
    assert "--force" in capsys.readouterr().err


def test_train_eval_report_pipeline(files, tmp_path, capsys):
    m = str(files / "data" / "manifest.jsonl")
    cfg = ["--config", str(files / "train.json")]
    det = tmp_path / "det"
    assert main(["train", m, *cfg, "--detector-only", "--out", str(det)]) == 0
    assert (det / "model.ckpt").exists() and (det / "train_log.csv").exists()
    ape = tmp_path / "runs" / "ape"
    assert main(["train", m, *cfg, "--regressor", "ape", "--init", str(det / "model.ckpt"), "--out", str(ape)]) == 0
    assert json.loads((ape / "train_config.json").read_text())["init_source"] == str(det / "model.ckpt")
    assert main(["train", m, *cfg, "--regressor", "tape:0.5", "--out", str(tmp_path / "runs" / "tape_0.5")]) == 0
    capsys.readouterr()

    ev = tmp_path / "ev"
    assert main(["eval", m, "--checkpoint", str(ape / "model.ckpt"), "--out", str(ev)]) == 0
    assert "avg_pred" in capsys.readouterr().out
    rows = read_csv(ev / "summary.csv")
    assert [r["regressor"] for r in rows] == ["ape", "avg_pred"]
    ET.parse(ev / "curve.svg")
    assert list((ev / "traces").iterdir())

    ab = tmp_path / "ablate"
    assert main(["eval", m, "--ablate", "ape,tape:0.5", "--runs-dir", str(tmp_path / "runs"), "--out", str(ab)]) == 0
    assert [r["regressor"] for r in read_csv(ab / "summary.csv")] == ["ape", "tape:0.5", "avg_pred"]
    assert (ab / "curve_ape.csv").exists() and (ab / "curve_tape_0.5.csv").exists()

    rep = tmp_path / "rep"
    assert main(["report", str(ev), str(ab), "--out", str(rep)]) == 0
    rows = read_csv(rep / "summary.csv")
    assert [r["regressor"] for r in rows].count("avg_pred") == 1
    assert len(rows) == 4
    assert len(ET.parse(rep / "curve.svg").getroot().findall("{http://www.w3.org/2000/svg}polyline")) == 3


def test_train_flag_errors(files, tmp_path):
    m = str(files / "data" / "manifest.jsonl")
    cfg = ["--config", str(files / "train.json")]
    assert main(["train", m, *cfg, "--regressor", "tape:0", "--out", str(tmp_path / "a")]) == 2
    assert main(["train", m, *cfg, "--detector-only", "--regressor", "ae", "--out", str(tmp_path / "b")]) == 2
    assert main(["train", m, *cfg, "--init", str(tmp_path / "missing.ckpt"), "--out", str(tmp_path / "c")]) == 3
    assert not (tmp_path / "a").exists()


def test_eval_digest_mismatch(files, tmp_path):
    m = str(files / "data" / "manifest.jsonl")
    run = tmp_path / "run"
    assert main(["train", m, "--config", str(files / "train.json"), "--detector-only", "--out", str(run)]) == 0
    other = TrainConfig(model={"conv_blocks": [{"out_channels": 4, "freq_pool": 16}], "recurrent_hidden": 8})
    (tmp_path / "other.json").write_text(json.dumps(other.to_dict()))
    args = ["eval", m, "--checkpoint", str(run / "model.ckpt"), "--model-config", str(tmp_path / "other.json")]
    assert main([*args, "--out", str(tmp_path / "ev")]) == 4


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "echorange", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("echorange ")
