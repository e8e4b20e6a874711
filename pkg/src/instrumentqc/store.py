"""Durable scan storage: an append-only JSON-lines event log.

Every state change is one appended event; the in-memory index is
rebuilt by replaying the log at startup, so a restarted service sees
byte-identical state. Writers are serialized through a single lock;
reads work against the in-memory index.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .dataset import DefectLabel, InstrumentLabel
from .pipeline import Disposition, ScanResult

__all__ = ["ScanRecord", "ReviewDecision", "EventStore", "ConflictError"]


class ConflictError(Exception):
    """Raised when a decision targets a record that is not awaiting review."""


@dataclass(frozen=True)
class ReviewDecision:
    scan_id: str
    reviewer_id: str
    decided_instrument: InstrumentLabel
    decided_defect: DefectLabel
    timestamp: float

    def __post_init__(self) -> None:
        if not self.reviewer_id:
            raise ValueError("reviewer_id must be non-empty")

    def to_dict(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "reviewer_id": self.reviewer_id,
            "decided_instrument": self.decided_instrument.value,
            "decided_defect": self.decided_defect.value,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewDecision":
        return cls(
            scan_id=data["scan_id"],
            reviewer_id=data["reviewer_id"],
            decided_instrument=InstrumentLabel(data["decided_instrument"]),
            decided_defect=DefectLabel(data["decided_defect"]),
            timestamp=data["timestamp"],
        )


@dataclass(frozen=True)
class ScanRecord:
    """One persisted scan: stored image, pipeline result, review state."""

    scan_id: str
    image_path: str
    result: ScanResult
    status: str  # "final" | "awaiting_review" | "reviewed"
    submitted_at: float
    decision: Optional[ReviewDecision] = None
    post_review_defect: Optional[Disposition] = None

    def __post_init__(self) -> None:
        if self.status not in ("final", "awaiting_review", "reviewed"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "awaiting_review" and not self.result.needs_review:
            raise ValueError("awaiting_review requires a flagged disposition")
        if self.status == "reviewed" and self.decision is None:
            raise ValueError("reviewed records must reference a decision")

    def to_dict(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "image_path": self.image_path,
            "result": self.result.to_dict(),
            "status": self.status,
            "submitted_at": self.submitted_at,
            "decision": self.decision.to_dict() if self.decision else None,
            "post_review_defect": (
                self.post_review_defect.to_dict() if self.post_review_defect else None
            ),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScanRecord":
        return cls(
            scan_id=data["scan_id"],
            image_path=data["image_path"],
            result=ScanResult.from_dict(data["result"]),
            status=data["status"],
            submitted_at=data["submitted_at"],
            decision=ReviewDecision.from_dict(data["decision"]) if data.get("decision") else None,
            post_review_defect=(
                Disposition.from_dict(data["post_review_defect"])
                if data.get("post_review_defect")
                else None
            ),
        )


class EventStore:
    """Append-only store with an in-memory index rebuilt on startup."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.images_dir = self.root / "images"
        self.images_dir.mkdir(exist_ok=True)
        self._log_path = self.root / "events.jsonl"
        self._lock = threading.Lock()
        self._records: dict[str, ScanRecord] = {}
        self._replay()

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                self._apply(event)

    def _apply(self, event: dict) -> None:
        if event["type"] == "scan_submitted":
            record = ScanRecord.from_dict(event["record"])
            self._records[record.scan_id] = record
        elif event["type"] == "review_decided":
            base = self._records[event["scan_id"]]
            self._records[event["scan_id"]] = replace(
                base,
                status="reviewed",
                decision=ReviewDecision.from_dict(event["decision"]),
                post_review_defect=(
                    Disposition.from_dict(event["post_review_defect"])
                    if event.get("post_review_defect")
                    else None
                ),
            )
        else:
            raise ValueError(f"unknown event type {event['type']!r}")

    def _append(self, event: dict) -> None:
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True))
            fh.write("\n")
            fh.flush()

    # -- writes ------------------------------------------------------------

    def add_scan(self, record: ScanRecord) -> ScanRecord:
        with self._lock:
            if record.scan_id in self._records:
                raise ConflictError(f"scan {record.scan_id} already stored")
            self._append({"type": "scan_submitted", "record": record.to_dict()})
            self._records[record.scan_id] = record
            return record

    def apply_decision(
        self,
        decision: ReviewDecision,
        post_review_defect: Optional[Disposition] = None,
    ) -> ScanRecord:
        with self._lock:
            record = self._records.get(decision.scan_id)
            if record is None:
                raise KeyError(decision.scan_id)
            if record.status != "awaiting_review":
                raise ConflictError(
                    f"scan {decision.scan_id} is {record.status}, not awaiting review"
                )
            self._append(
                {
                    "type": "review_decided",
                    "scan_id": decision.scan_id,
                    "decision": decision.to_dict(),
                    "post_review_defect": (
                        post_review_defect.to_dict() if post_review_defect else None
                    ),
                }
            )
            updated = replace(
                record,
                status="reviewed",
                decision=decision,
                post_review_defect=post_review_defect,
            )
            self._records[decision.scan_id] = updated
            return updated

    # -- reads -------------------------------------------------------------

    def get(self, scan_id: str) -> ScanRecord:
        record = self._records.get(scan_id)
        if record is None:
            raise KeyError(scan_id)
        return record

    def all_records(self) -> list[ScanRecord]:
        return list(self._records.values())

    def review_queue(self) -> list[ScanRecord]:
        """Awaiting-review records, oldest submission first."""
        waiting = [r for r in self._records.values() if r.status == "awaiting_review"]
        return sorted(waiting, key=lambda r: (r.submitted_at, r.scan_id))

    def reviewed_records(self) -> list[ScanRecord]:
        return [r for r in self._records.values() if r.status == "reviewed"]

    def snapshot_state(self) -> bytes:
        """Canonical serialization of every record, for durability checks."""
        payload = [r.to_dict() for r in sorted(self._records.values(), key=lambda r: (r.submitted_at, r.scan_id))]
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()

    def image_path_for(self, scan_id: str) -> Path:
        return self.images_dir / f"{scan_id}.png"

    @staticmethod
    def now() -> float:
        return time.time()
