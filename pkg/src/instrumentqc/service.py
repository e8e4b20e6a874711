"""HTTP service: scan ingestion, review queue, and reviewer feedback.

Wraps the two-stage pipeline behind a JSON API backed by the
append-only event store. Flagged scans enter a FIFO review queue; a
posted decision finalizes the record, re-runs the defect stage under
the reviewer's instrument label (both outcomes are kept), and appends a
``review_decision`` record to the configured dataset manifest, closing
the human-in-the-loop feedback path.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, UploadFile
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .dataset import (
    AnnotationRecord,
    DefectLabel,
    InstrumentLabel,
    Provenance,
    RecordStatus,
)
from .imaging import decode_png, save_png
from .metrics import classification_report, confusion_matrix
from .pipeline import (
    Disposition,
    DispositionKind,
    PipelineConfig,
    classify_defect,
    preprocess,
    run_scan,
)
from .store import ConflictError, EventStore, ReviewDecision, ScanRecord

__all__ = ["create_app", "DecisionPayload"]


class DecisionPayload(BaseModel):
    reviewer_id: str
    instrument: str
    defect: str


def _verdict_label(disposition: Optional[Disposition]) -> Optional[str]:
    """The defect label a disposition effectively asserts."""
    if disposition is None:
        return None
    if disposition.kind is DispositionKind.NO_DEFECT_DETECTED:
        return DefectLabel.NO_DEFECT.value
    return disposition.label


def _instrument_label(disposition: Optional[Disposition]) -> Optional[str]:
    if disposition is None:
        return None
    if disposition.kind is DispositionKind.NO_INSTRUMENT_DETECTED:
        return InstrumentLabel.MISCELLANEOUS.value
    return disposition.label


def _review_item(record: ScanRecord) -> dict:
    result = record.result
    return {
        "scan_id": record.scan_id,
        "image_url": f"/api/scans/{record.scan_id}/image",
        "submitted_at": record.submitted_at,
        "instrument": result.instrument.to_dict() if result.instrument else None,
        "defect": result.defect.to_dict() if result.defect else None,
    }


def create_app(
    store: EventStore,
    pipeline_config: PipelineConfig,
    manifest_path: Optional[str | Path] = None,
    static_dir: Optional[str | Path] = None,
) -> FastAPI:
    """Build the service over an event store and a configured pipeline."""
    app = FastAPI(title="instrumentqc", version="0.1.0")
    manifest_file = Path(manifest_path) if manifest_path else None
    manifest_lock = threading.Lock()

    def append_manifest_record(record: ScanRecord, decision: ReviewDecision) -> None:
        if manifest_file is None:
            return
        annotation = AnnotationRecord(
            record_id=f"review-{record.scan_id}",
            image_path=record.image_path,
            votes=(),
            resolved_instrument=decision.decided_instrument,
            resolved_defect=decision.decided_defect,
            status=RecordStatus.RESOLVED,
            provenance=Provenance.review_decision(),
        )
        with manifest_lock:
            manifest_file.parent.mkdir(parents=True, exist_ok=True)
            with open(manifest_file, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(annotation.to_dict(None), sort_keys=True))
                fh.write("\n")

    @app.post("/api/scans", status_code=201)
    def submit_scan(file: UploadFile):
        raw = file.file.read()
        try:
            image = decode_png(raw)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"undecodable PNG: {exc}")
        result = run_scan(image, pipeline_config)
        image_rel = f"images/{result.scan_id}.png"
        save_png(image, store.root / image_rel)
        status = "awaiting_review" if result.needs_review else "final"
        record = ScanRecord(
            scan_id=result.scan_id,
            image_path=image_rel,
            result=result,
            status=status,
            submitted_at=store.now(),
        )
        store.add_scan(record)
        if result.error is not None:
            return JSONResponse(status_code=500, content=record.to_dict())
        return record.to_dict()

    @app.get("/api/scans/{scan_id}")
    def get_scan(scan_id: str):
        try:
            return store.get(scan_id).to_dict()
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown scan {scan_id}")

    @app.get("/api/scans/{scan_id}/image")
    def get_scan_image(scan_id: str):
        try:
            record = store.get(scan_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown scan {scan_id}")
        return FileResponse(store.root / record.image_path, media_type="image/png")

    @app.get("/api/review-queue")
    def review_queue():
        return [_review_item(r) for r in store.review_queue()]

    @app.post("/api/review-queue/{scan_id}/decision")
    def post_decision(scan_id: str, payload: DecisionPayload):
        try:
            instrument = InstrumentLabel(payload.instrument)
            defect = DefectLabel(payload.defect)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            record = store.get(scan_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown scan {scan_id}")

        # second-stage rerun under the reviewer's instrument label, so the
        # record keeps both the machine's and the human's defect verdicts
        post_review_defect: Optional[Disposition] = None
        backend = pipeline_config.defect_registry.get(instrument.value)
        if backend is not None:
            image = decode_png((store.root / record.image_path).read_bytes())
            tensor = preprocess(image, pipeline_config)
            post_review_defect = classify_defect(tensor, instrument.value, pipeline_config)

        decision = ReviewDecision(
            scan_id=scan_id,
            reviewer_id=payload.reviewer_id,
            decided_instrument=instrument,
            decided_defect=defect,
            timestamp=store.now(),
        )
        try:
            updated = store.apply_decision(decision, post_review_defect)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown scan {scan_id}")
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        append_manifest_record(updated, decision)
        return updated.to_dict()

    @app.get("/api/reports/metrics")
    def metrics_report():
        reviewed = store.reviewed_records()
        out: dict = {"reviewed": len(reviewed)}
        instrument_pairs = []
        defect_pairs = []
        for record in reviewed:
            truth_i = record.decision.decided_instrument.value
            pred_i = _instrument_label(record.result.instrument)
            if pred_i is not None:
                instrument_pairs.append((truth_i, pred_i))
            truth_d = record.decision.decided_defect.value
            pred_d = _verdict_label(record.result.defect) or _verdict_label(
                record.post_review_defect
            )
            if pred_d is not None:
                defect_pairs.append((truth_d, pred_d))
        for key, pairs in (("instrument", instrument_pairs), ("defect", defect_pairs)):
            if pairs:
                labels = sorted({t for t, _ in pairs} | {p for _, p in pairs})
                report = classification_report(confusion_matrix(pairs, labels))
                out[key] = report.to_dict()
            else:
                out[key] = None
        return out

    @app.get("/api/labels")
    def labels():
        return {
            "instruments": [label.value for label in InstrumentLabel],
            "defects": [label.value for label in DefectLabel],
        }

    if static_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
