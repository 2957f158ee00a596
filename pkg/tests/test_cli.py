from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from fens.cli import _prepare, main
from fens.core.errors import ConfigError, UsageError
from fens.data.dataset import sidecar_path

REPO_ROOT = Path(__file__).resolve().parents[1]


def run_cli(*args: str, home: Path) -> subprocess.CompletedProcess:
    env = {**os.environ, "PYTHONPATH": str(REPO_ROOT / "src"), "FENS_HOME": str(home)}
    return subprocess.run(
        [sys.executable, "-m", "fens", *args],
        capture_output=True,
        text=True,
        encoding="utf-8",
        env=env,
        timeout=120,
    )


def envelope_of(proc: subprocess.CompletedProcess) -> dict:
    lines = [line for line in proc.stdout.splitlines() if line.strip()]
    assert len(lines) == 1, proc.stdout
    return json.loads(lines[0])


# ---------------------------
# Configuration precedence
# ---------------------------

def test_flags_beat_the_config_file(tmp_path):
    config = tmp_path / "fens.json"
    config.write_text(json.dumps({"seed": 3, "train": {"seed": 3, "lr": 0.5, "epochs": 4}}), encoding="utf-8")
    operation, params, ctx = _prepare([
        "train", "--family", "mobile", "--strategy", "tfs", "--config", str(config),
        "--seed", "9", "--train.lr", "0.01", "--data", "synth",
    ])
    effective = params["config"]
    assert operation == "train"
    assert effective.seed == 9 and effective.train.seed == 9
    assert effective.train.lr == pytest.approx(0.01)
    assert effective.train.epochs == 4
    assert effective.dataset.sources == ("synth",)
    assert params["family"] == "mobile"


def test_shortcut_beats_leaf_flag(tmp_path):
    _, params, ctx = _prepare(["run", "--train.epochs", "7", "--epochs", "2", "--jobs", "3", "--data", "synth",
                               "--out", str(tmp_path)])
    assert params["config"].train.epochs == 2
    assert ctx.jobs == 3
    assert ctx.home == tmp_path


def test_bad_config_values(tmp_path):
    with pytest.raises(ConfigError):
        _prepare(["run", "--data", "synth", "--train.epochs", "many"])
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        _prepare(["run", "--config", str(broken)])


def test_pipeline_commands_need_a_dataset():
    with pytest.raises(UsageError) as info:
        _prepare(["tune", "--family", "mnas", "--strategy", "tfs"])
    assert "usage:" in info.value.usage


def test_main_emits_one_envelope_for_usage_errors(capsys):
    assert main(["train", "--family", "resnet", "--strategy", "tfs"]) == 2
    out, err = capsys.readouterr()
    envelope = json.loads(out)
    assert envelope["status"] == "error"
    assert envelope["error"]["code"] == "usage_error"
    assert "fens: error:" in err


# ---------------------------
# Subprocess surface
# ---------------------------

def test_tune_without_dataset_exits_2_with_usage(tmp_path):
    proc = run_cli("tune", "--family", "mobile", "--strategy", "tfs", home=tmp_path)
    assert proc.returncode == 2
    assert "usage:" in proc.stderr
    envelope = envelope_of(proc)
    assert envelope["error"]["code"] == "usage_error"


def test_dataset_synth_is_byte_identical_across_runs(tmp_path):
    outputs = []
    for name in ("a", "b"):
        proc = run_cli("dataset", "synth", "--classes", "3", "--per-class", "4", "--height", "8", "--width", "8",
                       "--seed", "5", "--name", "tiny", "--out", str(tmp_path / name), home=tmp_path)
        assert proc.returncode == 0, proc.stderr
        envelope = envelope_of(proc)
        assert envelope["status"] == "ok"
        assert envelope["data"]["dataset"]["classes"] == 3
        assert len(envelope["artifacts"]) == 2
        outputs.append(Path(envelope["data"]["path"]))
    assert outputs[0].read_bytes() == outputs[1].read_bytes()
    assert sidecar_path(outputs[0]).read_bytes() == sidecar_path(outputs[1]).read_bytes()

    proc = run_cli("dataset", "inspect", str(outputs[0]), "--height", "8", "--width", "8", home=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert envelope_of(proc)["data"]["per_class"] == [4, 4, 4]


def test_report_on_missing_directory_exits_1(tmp_path):
    proc = run_cli("report", str(tmp_path / "nowhere"), home=tmp_path)
    assert proc.returncode == 1
    assert envelope_of(proc)["error"]["code"] == "no_results"


def test_unknown_command_is_a_usage_error(tmp_path):
    proc = run_cli("deploy", home=tmp_path)
    assert proc.returncode == 2
    assert envelope_of(proc)["status"] == "error"
