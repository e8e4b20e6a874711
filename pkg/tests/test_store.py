"""Event-store tests, including concurrent writer consistency."""

from concurrent.futures import ThreadPoolExecutor

import pytest

from instrumentqc.dataset import DefectLabel, InstrumentLabel
from instrumentqc.pipeline import Disposition, ScanResult
from instrumentqc.store import ConflictError, EventStore, ReviewDecision, ScanRecord


def flagged_result(scan_id):
    return ScanResult(
        scan_id=scan_id,
        instrument=Disposition.flagged("Scissors", 0.3),
        defect=None,
        preprocess_ms=1.0,
        instrument_ms=1.0,
        defect_ms=None,
        timestamp=1.0,
    )


def flagged_record(scan_id, submitted_at=1.0):
    return ScanRecord(
        scan_id=scan_id,
        image_path=f"images/{scan_id}.png",
        result=flagged_result(scan_id),
        status="awaiting_review",
        submitted_at=submitted_at,
    )


def decision_for(scan_id):
    return ReviewDecision(
        scan_id=scan_id,
        reviewer_id="rev",
        decided_instrument=InstrumentLabel.SCISSORS,
        decided_defect=DefectLabel.CRACK,
        timestamp=2.0,
    )


def test_duplicate_scan_id_rejected(tmp_path):
    store = EventStore(tmp_path)
    store.add_scan(flagged_record("a"))
    with pytest.raises(ConflictError):
        store.add_scan(flagged_record("a"))


def test_decision_requires_awaiting_status(tmp_path):
    store = EventStore(tmp_path)
    store.add_scan(flagged_record("a"))
    store.apply_decision(decision_for("a"))
    with pytest.raises(ConflictError):
        store.apply_decision(decision_for("a"))
    with pytest.raises(KeyError):
        store.apply_decision(decision_for("missing"))


def test_queue_matches_awaiting_under_concurrent_writers(tmp_path):
    store = EventStore(tmp_path)
    ids = [f"scan-{i:03d}" for i in range(40)]

    def submit(i):
        store.add_scan(flagged_record(ids[i], submitted_at=float(i)))

    def submit_then_decide(i):
        store.add_scan(flagged_record(ids[i], submitted_at=float(i)))
        store.apply_decision(decision_for(ids[i]))

    with ThreadPoolExecutor(max_workers=8) as pool:
        futures = []
        for i in range(40):
            futures.append(pool.submit(submit_then_decide if i % 2 else submit, i))
        for future in futures:
            future.result()

    awaiting = {r.scan_id for r in store.all_records() if r.status == "awaiting_review"}
    queued = [r.scan_id for r in store.review_queue()]
    assert set(queued) == awaiting
    assert queued == sorted(queued, key=lambda s: int(s.split("-")[1]))  # FIFO
    assert len(store.all_records()) == 40

    # the log replays to the same state even after interleaved writers
    reopened = EventStore(tmp_path)
    assert reopened.snapshot_state() == store.snapshot_state()


def test_concurrent_double_decisions_single_winner(tmp_path):
    store = EventStore(tmp_path)
    store.add_scan(flagged_record("contested"))
    outcomes = []

    def decide():
        try:
            store.apply_decision(decision_for("contested"))
            outcomes.append("ok")
        except ConflictError:
            outcomes.append("conflict")

    with ThreadPoolExecutor(max_workers=4) as pool:
        for _ in range(4):
            pool.submit(decide)

    assert outcomes.count("ok") == 1
    assert outcomes.count("conflict") == 3
