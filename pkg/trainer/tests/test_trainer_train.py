import csv

import numpy as np
import pytest
import torch

from skytrainer import cli
from skytrainer.model import ModelSpec
from skytrainer.train import (TrainConfig, load_checkpoint, predict,
                              sun_error_deg, train)

SMALL = ModelSpec(input_size=(120, 160))
CFG = TrainConfig(lr=0.001, batch_size=16, epochs=1, seed=3)


@pytest.fixture(scope="module")
def short_run(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("trainer_run")
    result = train(small_dataset / "MANIFEST.jsonl", out, SMALL, CFG)
    return out, result


def test_train_outputs(short_run):
    out, result = short_run
    assert (out / "checkpoint.pt").exists()
    with open(out / "history.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["epoch", "train_loss", "val_loss"]
    assert len(rows) == 1 + len(result.history)
    assert np.isfinite(result.initial_train_loss)
    assert all(np.isfinite(tr) for _, tr, _ in result.history)


def test_train_deterministic(small_dataset, tmp_path, short_run):
    _, first = short_run
    again = train(small_dataset / "MANIFEST.jsonl", tmp_path / "r2",
                  SMALL, CFG)
    assert again.initial_train_loss == first.initial_train_loss
    assert again.history == first.history


def test_nan_loss_aborts(small_dataset, tmp_path, monkeypatch):
    import importlib

    train_mod = importlib.import_module("skytrainer.train")
    monkeypatch.setattr(
        train_mod, "combined_loss",
        lambda *a, **k: torch.tensor(float("nan"), requires_grad=True))
    with pytest.raises(RuntimeError, match="non-finite loss"):
        train(small_dataset / "MANIFEST.jsonl", tmp_path / "r", SMALL, CFG)


def test_empty_train_split_errors(small_dataset, tmp_path):
    manifest = tmp_path / "MANIFEST.jsonl"
    lines = (small_dataset / "MANIFEST.jsonl").read_text().splitlines()
    keep = [ln for ln in lines if '"split": "train"' not in ln]
    manifest.write_text("\n".join(keep) + "\n")
    with pytest.raises(ValueError, match="no train rows"):
        train(manifest, tmp_path / "r", SMALL, CFG)


def test_predict_contract(short_run, small_dataset):
    out, _ = short_run
    model, payload = load_checkpoint(out / "checkpoint.pt")
    assert payload["spec"]["input_size"] == (120, 160)
    photo = next(small_dataset.glob("*.png"))
    log_s, q = predict(model, photo)
    assert log_s.shape == (160,) and q.shape == (4,)
    m = log_s.max()
    assert abs(m + np.log(np.exp(log_s - m).sum())) <= 1e-5
    assert np.all(np.isfinite(q)) and q[0] > 0
    log_s2, q2 = predict(model, photo)
    assert np.array_equal(log_s, log_s2) and np.array_equal(q, q2)
    with pytest.raises(ValueError, match="photo must be"):
        predict(model, np.zeros((120, 160, 3), np.uint8))


def test_sun_error_helper():
    from skytrainer.data import bin_centers
    centers = bin_centers()
    one_hot = np.full(160, -1e3)
    one_hot[40] = 0.0
    assert sun_error_deg(one_hot, centers[40]) <= 1e-6
    assert sun_error_deg(one_hot, centers[120]) > 30.0


def test_cli_train_and_predict(small_dataset, tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.run(["train", "--manifest",
                    str(small_dataset / "MANIFEST.jsonl"),
                    "--out", str(out), "--epochs", "1", "--batch", "16",
                    "--lr", "0.001", "--small-input"])
    assert code == 0
    assert (out / "checkpoint.pt").exists()
    photo = next(small_dataset.glob("*.png"))
    code = cli.run(["predict", "--checkpoint", str(out / "checkpoint.pt"),
                    "--photo", str(photo),
                    "--out", str(tmp_path / "pred.json")])
    assert code == 0
    assert (tmp_path / "pred.json").exists()
