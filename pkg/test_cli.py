#!/usr/bin/env python3
"""
Tests for the advclimb command line: exit codes, summaries and a small
gen-data -> train -> climb chain.
"""
import csv
import json
import os
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

import advclimb_cli
from app.services.data import storage


def run_cli(argv):
    with pytest.raises(SystemExit) as info:
        advclimb_cli.main(argv)
    return info.value.code


def test_no_command_prints_help(capsys):
    assert run_cli([]) == 2
    assert "gen-data" in capsys.readouterr().out


def test_unknown_flag_is_usage_error():
    assert run_cli(["gen-data", "--bogus"]) == 2


def test_missing_model(tmp_path, capsys):
    assert run_cli(["climb", "--out", str(tmp_path / "climb"), "--data", str(tmp_path)]) == 3
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["type"] == "MissingInputError"


def test_missing_dataset(tmp_path):
    assert run_cli(["train", "--out", str(tmp_path / "train"), "--data", str(tmp_path / "absent")]) == 3


def test_contradictory_tau(tmp_path):
    argv = ["climb", "--out", str(tmp_path), "--tau", "0.3", "--mask-threshold", "0.6"]
    assert run_cli(argv) == 4


def test_invalid_theta_grid(tmp_path):
    assert run_cli(["seed", "--out", str(tmp_path), "--theta-grid", "0.2,1.5"]) == 4


def test_loc_mode_needs_single_object_scenes(tmp_path):
    argv = ["gen-data", "--out", str(tmp_path), "--mode", "loc", "--objects-per-image", "2"]
    assert run_cli(argv) == 4


def test_config_file_feeds_flags(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"tau": 0.3, "mask-threshold": 0.6}))
    assert run_cli(["climb", "--out", str(tmp_path), "--config", str(config)]) == 4


def test_eval_seg_on_identical_masks(tmp_path, capsys):
    masks = tmp_path / "masks"
    rng = np.random.default_rng(0)
    for index in range(3):
        storage.save_label_mask(masks / f"item_{index}.png", rng.integers(0, 3, size=(8, 8)))
    out = tmp_path / "eval"
    advclimb_cli.main(["eval-seg", "--pred", str(masks), "--gt", str(masks), "--out", str(out), "--per-image"])
    results = json.loads(capsys.readouterr().out)
    assert results["items"] == 3
    assert results["miou"] == 1.0
    assert results["undefined_rates"] == []
    summary = json.loads((out / "summary.json").read_text())
    assert summary["command"] == "eval-seg"
    assert summary["results"]["miou"] == 1.0
    with (out / "report.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [row["label"] for row in rows] == ["0", "1", "2"]
    # background carries an IoU but no precision/recall/F1
    assert rows[0]["precision"] == ""
    assert float(rows[1]["precision"]) == 1.0
    assert float(rows[2]["f1"]) == 1.0


def test_small_chain(tmp_path):
    data, model_out, climb_out = tmp_path / "data", tmp_path / "train", tmp_path / "climb"
    advclimb_cli.main(["gen-data", "--out", str(data), "--train-count", "4", "--test-count", "2", "--seed", "3"])
    assert (data / "train.json").exists() and (data / "test.json").exists()

    advclimb_cli.main(["train", "--data", str(data), "--out", str(model_out), "--epochs", "1", "--batch-size", "2"])
    trained = json.loads((model_out / "summary.json").read_text())["results"]
    assert len(trained["epoch_losses"]) == 1
    assert "test_accuracy" in trained

    argv = ["climb", "--data", str(data), "--model", str(model_out / "model"), "--out", str(climb_out), "--steps", "0"]
    advclimb_cli.main(argv)
    summary = json.loads((climb_out / "summary.json").read_text())
    assert summary["results"]["steps"] == 0
    assert summary["config"]["climb"]["steps"] == 0
    assert summary["results"]["count"] == 2
    for row in summary["results"]["items"]:
        assert row["target_logit_initial"] == row["target_logit_final"]
        assert (climb_out / row["map"]).exists()


@pytest.mark.skipif(shutil.which("bash") is None, reason="needs bash")
def test_pipeline_script_stops_on_cli_failure(tmp_path):
    interpreter = tmp_path / "failing-python"
    interpreter.write_text("#!/bin/sh\nexit 3\n")
    interpreter.chmod(0o755)
    script = Path(__file__).resolve().parent / "scripts" / "run_pipeline.sh"
    result = subprocess.run(
        ["bash", str(script), "seg", str(tmp_path / "runs")],
        env={**os.environ, "PYTHON": str(interpreter)},
        capture_output=True,
        text=True,
    )
    assert result.returncode == 3
    assert "gen-data failed (exit 3)" in result.stderr
    assert not (tmp_path / "runs" / "train_seg").exists()
