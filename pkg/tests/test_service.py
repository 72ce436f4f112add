import pytest
from starlette.testclient import TestClient

from modnorm.service.app import app

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
def client():
    return TestClient(app, raise_server_exceptions=False)


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_generate_writes_idempotent_bytes(client, tmp_path):
    payload = {"config_text": TINY_CONFIG, "out_dir": str(tmp_path)}
    first = client.post("/api/generate", json=payload)
    assert first.status_code == 200
    body = first.json()
    assert body["num_samples"] == 8 * 4 * 2
    blob = tmp_path / "dataset.bin"
    assert str(blob) in body["files"]
    snapshot = blob.read_bytes()
    second = client.post("/api/generate", json=payload)
    assert second.status_code == 200
    assert blob.read_bytes() == snapshot


def test_train_and_report(client, tmp_path):
    payload = {"config_text": TINY_CONFIG, "out_dir": str(tmp_path)}
    response = client.post("/api/train", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert len(body["summary"]) == 1
    row = body["summary"][0]
    assert row["configuration"] == "baseline"
    assert row["seeds"] == 1
    assert 0 <= row["rank1_mean"] <= 1
    assert (tmp_path / "summary.csv").exists()
    assert (tmp_path / "baseline" / "seed0" / "metrics.csv").exists()
    assert (tmp_path / "baseline" / "seed0" / "checkpoint.bin").exists()

    report = client.post("/api/report", json={"out_dir": str(tmp_path)})
    assert report.status_code == 200
    text = (tmp_path / "report.md").read_text()
    assert "Retrieval summary" in text
    assert "baseline" in text


def test_gap_bundle(client, tmp_path):
    payload = {"config_text": TINY_CONFIG, "out_dir": str(tmp_path)}
    response = client.post("/api/gap", json=payload)
    assert response.status_code == 200
    body = response.json()
    stages_bn = {p["stage"]: p["gap"] for p in body["stage_trace_bn"]}
    stages_mbn = {p["stage"]: p["gap"] for p in body["stage_trace_mbn"]}
    assert set(stages_bn) == set(stages_mbn)
    assert "input" in stages_bn and "head" in stages_bn
    # per-modality normalization keeps the gap at the floor at every stage
    for stage, gap in stages_mbn.items():
        if stage != "input":
            assert gap <= 1e-6, stage
    for name in ("hist_batch0_whole.csv", "batch_stats_modality.csv",
                 "stage_trace_bn.csv", "channel_gap_whole.csv"):
        assert (tmp_path / "gap" / name).exists(), name


def test_domain_error_maps_to_400(client, tmp_path):
    response = client.post("/api/train", json={
        "config_text": TINY_CONFIG, "out_dir": str(tmp_path),
        "norm_backbone": "groupnorm"})
    assert response.status_code == 400
    body = response.json()
    assert body["error_kind"] == "ConfigError"
    assert "groupnorm" in body["message"]
