import json

import pytest

from modnorm.cli import main

TINY_CONFIG = """\
[dataset]
num_identities = 8
images_per_identity_per_modality = 4
latent_dim = 4
image_dims = 3,4,4
rng_seed = 5

[model]
stage_widths = 4,6
embedding_dim = 6

[schedule]
total_epochs = 1
warmup_epochs = 0
decay_epochs =

[sampler]
persons_per_batch = 2
images_per_modality = 2

[experiment]
seeds = 0
configurations = baseline
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(TINY_CONFIG)
    return path


def test_generate_prints_json_and_is_deterministic(config_path, tmp_path, capsys):
    out = tmp_path / "runs"
    argv = ["generate", "--config", str(config_path), "--out", str(out)]
    assert main(argv) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["num_samples"] == 64
    snapshot = (out / "dataset.bin").read_bytes()
    assert main(argv) == 0
    assert (out / "dataset.bin").read_bytes() == snapshot


def test_train_then_report(config_path, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["train", "--config", str(config_path), "--out", str(out)]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["summary"][0]["configuration"] == "baseline"
    assert main(["report", "--out", str(out)]) == 0
    assert "Retrieval summary" in (out / "report.md").read_text()


def test_gap_command(config_path, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["gap", "--config", str(config_path), "--out", str(out)]) == 0
    body = json.loads(capsys.readouterr().out)
    assert any(p["stage"] == "head" for p in body["stage_trace_mbn"])
    assert (out / "gap" / "stage_trace_mbn.csv").exists()


def test_error_exit_code_and_stderr(config_path, tmp_path, capsys):
    code = main(["train", "--config", str(config_path), "--out", str(tmp_path / "runs"),
                 "--norm-backbone", "groupnorm"])
    assert code == 1
    err = capsys.readouterr().err
    assert "MODNORM_ERROR kind=ConfigError" in err


def test_missing_config_file_fails_cleanly(tmp_path, capsys):
    code = main(["generate", "--config", str(tmp_path / "absent.ini"),
                 "--out", str(tmp_path / "runs")])
    assert code == 1
    assert "MODNORM_ERROR kind=ConfigError" in capsys.readouterr().err


def test_seed_override(config_path, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["train", "--config", str(config_path), "--out", str(out),
                 "--seed", "2", "--seed", "3"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["summary"][0]["seeds"] == 2
    assert (out / "baseline" / "seed2" / "metrics.csv").exists()
    assert (out / "baseline" / "seed3" / "metrics.csv").exists()
