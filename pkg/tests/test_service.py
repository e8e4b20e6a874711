"""HTTP service tests: ingestion, queue, decisions, durability."""

import json

from fastapi.testclient import TestClient

from instrumentqc.dataset import DatasetManifest
from instrumentqc.service import create_app
from instrumentqc.store import EventStore

from conftest import FixedBackend, make_config


def build_client(tmp_path, instrument_backend, defect_backend=None, subdir="store"):
    store = EventStore(tmp_path / subdir)
    config = make_config(instrument_backend, defect_backend)
    manifest_path = tmp_path / "manifest.jsonl"
    app = create_app(store, config, manifest_path=manifest_path)
    return TestClient(app), store, manifest_path


def upload(client, png_bytes):
    return client.post(
        "/api/scans", files={"file": ("scan.png", png_bytes, "image/png")}
    )


def test_high_confidence_scan_is_final(tmp_path, png_bytes):
    client, store, _ = build_client(tmp_path, FixedBackend("Scissors", 0.92))
    response = upload(client, png_bytes)
    assert response.status_code == 201
    body = response.json()
    assert body["status"] == "final"
    assert body["result"]["instrument"]["kind"] == "accepted"
    assert body["result"]["defect"]["kind"] == "accepted"
    assert client.get("/api/review-queue").json() == []


def test_low_confidence_scan_enters_queue(tmp_path, png_bytes):
    client, _, _ = build_client(tmp_path, FixedBackend("Scissors", 0.40))
    body = upload(client, png_bytes).json()
    assert body["status"] == "awaiting_review"
    queue = client.get("/api/review-queue").json()
    assert [item["scan_id"] for item in queue] == [body["scan_id"]]
    assert queue[0]["instrument"]["confidence"] == 0.40


def test_corrupt_upload_rejected_and_not_persisted(tmp_path):
    client, store, _ = build_client(tmp_path, FixedBackend("Scissors", 0.9))
    response = client.post(
        "/api/scans", files={"file": ("junk.png", b"not a png", "image/png")}
    )
    assert response.status_code == 400
    assert store.all_records() == []


def test_get_scan_by_id_and_image(tmp_path, png_bytes):
    client, _, _ = build_client(tmp_path, FixedBackend("Scissors", 0.9))
    scan_id = upload(client, png_bytes).json()["scan_id"]
    assert client.get(f"/api/scans/{scan_id}").json()["scan_id"] == scan_id
    image = client.get(f"/api/scans/{scan_id}/image")
    assert image.status_code == 200
    assert image.content == png_bytes
    assert client.get("/api/scans/nope").status_code == 404


def test_queue_is_fifo_and_only_flagged(tmp_path, png_bytes):
    client_flagged, store, _ = build_client(tmp_path, FixedBackend("Scissors", 0.3))
    first = upload(client_flagged, png_bytes).json()["scan_id"]
    second = upload(client_flagged, png_bytes).json()["scan_id"]
    config_final = make_config(FixedBackend("Scissors", 0.95))
    client_final = TestClient(create_app(store, config_final))
    upload(client_final, png_bytes)
    queue = client_final.get("/api/review-queue").json()
    assert [item["scan_id"] for item in queue] == [first, second]


def test_decision_flow_updates_everything(tmp_path, png_bytes):
    client, store, manifest_path = build_client(tmp_path, FixedBackend("Scissors", 0.35))
    scan_id = upload(client, png_bytes).json()["scan_id"]
    assert len(client.get("/api/review-queue").json()) == 1

    decision = {"reviewer_id": "rev-1", "instrument": "Scissors", "defect": "Crack"}
    response = client.post(f"/api/review-queue/{scan_id}/decision", json=decision)
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "reviewed"
    assert body["decision"]["reviewer_id"] == "rev-1"
    # defect stage re-ran under the reviewer's instrument label
    assert body["post_review_defect"]["kind"] == "accepted"
    assert client.get("/api/review-queue").json() == []

    manifest = DatasetManifest.from_jsonl(manifest_path)
    assert len(manifest.records) == 1
    record = manifest.records[0]
    assert record.provenance.kind == "review_decision"
    assert record.resolved_instrument.value == "Scissors"
    assert record.resolved_defect.value == "Crack"


def test_double_decision_conflicts_without_duplicate(tmp_path, png_bytes):
    client, _, manifest_path = build_client(tmp_path, FixedBackend("Scissors", 0.35))
    scan_id = upload(client, png_bytes).json()["scan_id"]
    decision = {"reviewer_id": "rev-1", "instrument": "Scissors", "defect": "Pores"}
    assert client.post(f"/api/review-queue/{scan_id}/decision", json=decision).status_code == 200
    retry = client.post(f"/api/review-queue/{scan_id}/decision", json=decision)
    assert retry.status_code == 409
    manifest = DatasetManifest.from_jsonl(manifest_path)
    assert len(manifest.records) == 1


def test_decision_on_unknown_or_final_scan(tmp_path, png_bytes):
    client, _, _ = build_client(tmp_path, FixedBackend("Scissors", 0.9))
    scan_id = upload(client, png_bytes).json()["scan_id"]
    decision = {"reviewer_id": "rev-1", "instrument": "Scissors", "defect": "Crack"}
    assert client.post("/api/review-queue/missing/decision", json=decision).status_code == 404
    assert client.post(f"/api/review-queue/{scan_id}/decision", json=decision).status_code == 409


def test_decision_rejects_labels_outside_closed_sets(tmp_path, png_bytes):
    client, _, _ = build_client(tmp_path, FixedBackend("Scissors", 0.35))
    scan_id = upload(client, png_bytes).json()["scan_id"]
    bad = {"reviewer_id": "rev-1", "instrument": "Chainsaw", "defect": "Crack"}
    assert client.post(f"/api/review-queue/{scan_id}/decision", json=bad).status_code == 422


def test_metrics_report_agreeing_reviewer(tmp_path, png_bytes):
    client, _, _ = build_client(
        tmp_path, FixedBackend("Scissors", 0.35), FixedBackend("Crack", 0.9)
    )
    scan_id = upload(client, png_bytes).json()["scan_id"]
    decision = {"reviewer_id": "rev-1", "instrument": "Scissors", "defect": "Crack"}
    client.post(f"/api/review-queue/{scan_id}/decision", json=decision)
    report = client.get("/api/reports/metrics").json()
    assert report["reviewed"] == 1
    assert report["instrument"]["accuracy"] == 1.0
    assert report["defect"]["accuracy"] == 1.0


def test_metrics_report_empty_store(tmp_path):
    client, _, _ = build_client(tmp_path, FixedBackend("Scissors", 0.9))
    report = client.get("/api/reports/metrics").json()
    assert report == {"reviewed": 0, "instrument": None, "defect": None}


def test_labels_endpoint_lists_closed_sets(tmp_path):
    client, _, _ = build_client(tmp_path, FixedBackend("Scissors", 0.9))
    body = client.get("/api/labels").json()
    assert "Scissors" in body["instruments"]
    assert "Miscellaneous" in body["instruments"]
    assert body["defects"][-1] == "NoDefect"
    assert len(body["instruments"]) == 12
    assert len(body["defects"]) == 6


def test_restart_reconstructs_identical_state(tmp_path, png_bytes):
    client, store, _ = build_client(tmp_path, FixedBackend("Scissors", 0.35))
    ids = [upload(client, png_bytes).json()["scan_id"] for _ in range(4)]
    decision = {"reviewer_id": "rev-1", "instrument": "Scissors", "defect": "Cuts"}
    client.post(f"/api/review-queue/{ids[0]}/decision", json=decision)
    before = store.snapshot_state()

    reopened = EventStore(tmp_path / "store")
    assert reopened.snapshot_state() == before
    assert [r.scan_id for r in reopened.review_queue()] == ids[1:]
    awaiting = {r.scan_id for r in reopened.all_records() if r.status == "awaiting_review"}
    assert awaiting == set(ids[1:])
